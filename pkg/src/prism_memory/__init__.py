"""Evolutionary multi-agent memory substrate."""

from .config import PrismConfig, load_config
from .embedding import Embedder, embed, top_k
from .entropy import TokenModel, entropy, fit, mutual_information, tokenize
from .graph import CausalGraph, RetrievalDistribution, exploration_divergence, graph_neighbors
from .memory import MemoryRecord, OpKind, Store, StoreConfig, Tier, UpdateOp, apply_update, assign_tier
from .retrieval import Retriever, Strategy, StrategyPopulation, assemble_prompt, parse_prompt
from .substrate import Substrate

__version__ = "0.1.0"
