"""Scripted multi-agent optimisation experiments over the memory substrate."""

from .episode import Episode, EpisodeMetrics, ScriptedAgent, run_episode
from .metrics import improvement_rate, knowledge_reuse, mann_kendall, pearson
from .tasks import PackingInstance, PackingTask, TspInstance, TspTask
