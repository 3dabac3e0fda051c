"""Named experiment checks used by the command line and the acceptance suite.

Each check runs one experiment at its documented tolerance and returns a
:class:`CheckResult` whose ``lines`` form a short human-readable report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import PrismConfig
from .dynamics import esms_experiment, replicator_decay_step, size_bound_experiment
from .graph import coverage_experiment
from .heartbeat import detection_experiment
from .memory import Tier, tier1_token_budget_check
from .retrieval import hedge_regret_experiment


@dataclass
class CheckResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def report(self) -> str:
        head = f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.2f}s)"
        return "\n".join([head] + [f"  {l}" for l in self.lines]) + "\n"


def check_fixed_point(cfg: Optional[PrismConfig] = None, steps: int = 10_000, tol: float = 1e-4) -> CheckResult:
    """A single memory with constant fitness settles at mu/lambda."""
    cfg = cfg or PrismConfig()
    dyn = cfg.dynamics()
    k = np.array([0.9])
    f = np.array([0.7])
    for _ in range(steps):
        k = replicator_decay_step(k, f, dyn)
    target = dyn.mu_mutation / dyn.lambda_decay
    ok = abs(float(k[0]) - target) <= tol
    return CheckResult("fixed-point", ok, [f"kappa={float(k[0]):.6f} target={target:.6f} tol={tol}"])


def check_tier1_budget(cfg: Optional[PrismConfig] = None, seed: int = 0, turns: int = 100) -> CheckResult:
    """Always-loaded skill tokens stay under the context-budget bound after an episode."""
    from .harness.episode import Episode

    cfg = cfg or PrismConfig()
    ep = Episode(cfg, seed, turns=turns)
    ep.run()
    recs = list(ep.sub.store)
    mean_h = float(np.mean([r.entropy for r in recs]))
    rep = tier1_token_budget_check(ep.sub.store, cfg.store(), mean_h)
    skills = len(ep.sub.store.tier(Tier.SKILLS))
    return CheckResult(
        "T1",
        rep.within_bound,
        [f"skills={skills} tokens={rep.total_tokens} bound={rep.bound:.1f} mean_entropy={mean_h:.3f} bits"],
    )


def check_coverage(seeds: int = 100) -> CheckResult:
    rep = coverage_experiment(4, 5, [10, 50, 100], 0.3, 200, seeds=seeds)
    lines = [f"min pairwise KL={rep.min_pairwise_kl:.4f} bits"]
    lines += [f"T={T}: empirical={e:.2f} bound={b:.2f}" for T, e, b in zip(rep.horizons, rep.empirical, rep.bound)]
    return CheckResult("T2", all(rep.satisfied), lines)


def check_esms(seeds=range(10)) -> CheckResult:
    rep = esms_experiment(seeds)
    lines = [
        f"max resident fitness spread={max(rep.spreads):.4f} (limit {rep.spread_limit})",
        f"max invader kappa={max(rep.invader_peaks):.4f} (limit {rep.floor + rep.invader_slack:.4f})",
        f"min Lyapunov non-increasing share={min(rep.lyapunov_fractions):.4f} (limit {rep.lyapunov_share})",
    ]
    return CheckResult("T3", rep.invasion_passed and rep.lyapunov_passed, lines)


def check_regret(K: int = 8, T: int = 10_000, seeds=range(20)) -> CheckResult:
    rep = hedge_regret_experiment(K, T, seeds)
    return CheckResult("T4", rep.passed, [f"max regret={max(rep.regrets):.2f} bound={rep.bound:.2f} seeds={len(rep.regrets)}"])


def check_size_bound(seeds=range(10)) -> CheckResult:
    rep = size_bound_experiment(seeds=seeds)
    return CheckResult(
        "size-bound",
        rep.within_bound,
        [f"mean steady size={rep.mean_steady_size:.1f} bound={rep.bound:.1f} slack={rep.slack:.0%}"],
    )


def check_stagnation(cfg: Optional[PrismConfig] = None, seeds=range(20)) -> CheckResult:
    hb = (cfg or PrismConfig()).heartbeat()
    rep = detection_experiment(hb, seeds=seeds)
    limit = hb.lookback_n + 5
    ok = rep.max_delay is not None and all(0 <= d <= limit for d in rep.delays) and not any(rep.false_alarms)
    return CheckResult(
        "stagnation",
        ok,
        [f"max delay={rep.max_delay} (limit {limit}) false alarms={sum(rep.false_alarms)} seeds={len(rep.delays)}"],
    )


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "T1": check_tier1_budget,
    "T2": check_coverage,
    "T3": check_esms,
    "T4": check_regret,
    "esms": check_esms,
    "coverage": check_coverage,
    "regret": check_regret,
    "size-bound": check_size_bound,
    "stagnation": check_stagnation,
}


def run_check(name: str) -> CheckResult:
    """Run a named check; raises KeyError for an unknown name."""
    fn = CHECKS[name]
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res
