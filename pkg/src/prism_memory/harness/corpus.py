"""Synthetic background corpus for the entropy model.

The corpus stands in for a long operator log of the task: the four move
parameters dominate it, the outcome word "improved" is about as common as a
single parameter, and bookkeeping words are rare. Under the default
thresholds this puts a bare parameter token in Skills, a "<param> improved"
note in Notes and anything carrying a score in Attempts.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..entropy import TokenModel, fit

PARAM_SHARE = 0.19
OUTCOME_SHARE = 0.19
BOOKKEEPING = {"attempt": 0.02, "failed": 0.015, "reflection": 0.005}


def token_profile(params: list[str], objective_token: str) -> dict[str, float]:
    profile = {p: PARAM_SHARE for p in params}
    profile["improved"] = OUTCOME_SHARE
    profile.update(BOOKKEEPING)
    rest = 1.0 - sum(profile.values())
    profile[objective_token] = max(rest, 0.0)
    return profile


def synthetic_corpus(profile: Mapping[str, float], size: int = 1000, line_len: int = 10, seed: int = 0) -> list[str]:
    """Lines whose token counts match ``profile`` exactly (up to rounding)."""
    tokens: list[str] = []
    for tok in sorted(profile):
        tokens += [tok] * int(round(profile[tok] * size))
    order = np.random.default_rng(seed).permutation(len(tokens))
    shuffled = [tokens[i] for i in order]
    return [" ".join(shuffled[i : i + line_len]) for i in range(0, len(shuffled), line_len)]


def task_model(params: list[str], objective_token: str, smoothing_alpha: float = 1.0) -> TokenModel:
    return fit(synthetic_corpus(token_profile(params, objective_token)), smoothing_alpha)
