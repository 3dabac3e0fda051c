"""Command-line entry point: run episodes, replay manifests, run checks, dump hubs.

Exit codes: 0 success, 1 a check or replay comparison failed, 2 invalid
configuration, 3 runtime or hub-load failure, 4 unknown check id.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .checks import CHECKS, run_check
from .config import PrismConfig, from_mapping, load_config
from .embedding import Embedder
from .errors import ConfigInvalid, PrismError
from .memory import Tier
from .persistence import HubLayout, load, save

log = logging.getLogger("prism_memory.cli")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME, EXIT_UNKNOWN_CHECK = 0, 1, 2, 3, 4
SECTIONS = ("skills", "notes", "attempts", "graph", "strategies")
MANIFEST = "manifest.json"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prism", description="Evolutionary multi-agent memory substrate experiments.")
    p.add_argument("--config", type=Path, help="YAML key/value config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, action="append", help="episode seed; repeat for several (overrides config)")
    p.add_argument("--agents", type=int, help="number of scripted agents")
    p.add_argument("--task", choices=("tsp", "packing"), help="optimisation task")
    p.add_argument("--turns", type=int, help="turns per episode")
    p.add_argument("--out", type=Path, help="output directory for runs; hub directory for --dump")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--check", metavar="ID", help=f"run an experiment check: {', '.join(CHECKS)}")
    mode.add_argument("--dump", choices=SECTIONS, help="print one section of the hub at --out")
    mode.add_argument("--replay", type=Path, metavar="MANIFEST", help="re-run a manifest and compare hashes")
    return p


def _resolve_config(args: argparse.Namespace) -> PrismConfig:
    cfg = load_config(args.config) if args.config is not None else PrismConfig()
    overrides = {}
    if args.seed:
        overrides["seeds"] = tuple(args.seed)
    for name in ("agents", "task", "turns"):
        val = getattr(args, name)
        if val is not None:
            overrides[name] = val
    if not overrides:
        return cfg
    try:
        return cfg.replace(**overrides)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def execute(cfg: PrismConfig, out_dir: Path, config_path: Optional[str], command: str = "run") -> "RunManifest":
    """Run every configured seed into ``out_dir``, then write the manifest of artifact hashes."""
    from .harness.episode import Episode
    from .harness.sweep import RunManifest, sha256_file, write_episode

    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    for seed in cfg.seeds:
        ep = Episode(cfg, seed)
        metrics = ep.run()
        for path in write_episode(metrics, out_dir):
            artifacts[path.name] = sha256_file(path)
        sub = ep.sub
        save(sub.store, sub.graph, sub.model, HubLayout(out_dir / f"hub-s{seed}"), sub.index_version, sub.population)
        log.info("seed %d: %s", seed, metrics.summary())
    manifest = RunManifest(command, cfg.to_dict(), config_path, list(cfg.seeds), str(out_dir), artifacts)
    (out_dir / MANIFEST).write_text(manifest.dumps(), encoding="utf-8")
    return manifest


def cmd_run(args: argparse.Namespace, out: TextIO) -> int:
    cfg = _resolve_config(args)
    out_dir = args.out or Path("runs") / f"{cfg.task}-a{cfg.agents}"
    manifest = execute(cfg, out_dir, str(args.config) if args.config else None)
    for name, digest in sorted(manifest.artifacts.items()):
        out.write(f"{digest}  {out_dir / name}\n")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace, out: TextIO) -> int:
    from .harness.sweep import RunManifest

    try:
        recorded = RunManifest.loads(args.replay.read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigInvalid(f"cannot read manifest {args.replay}: {exc}") from exc
    cfg = from_mapping(recorded.config)
    out_dir = args.out or Path(recorded.out_dir)
    fresh = execute(cfg, out_dir, recorded.config_path, command="replay")
    ok = True
    for name in sorted(set(recorded.artifacts) | set(fresh.artifacts)):
        same = recorded.artifacts.get(name) == fresh.artifacts.get(name)
        ok &= same
        out.write(f"{'match' if same else 'DIFFER'}  {name}\n")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_check(check_id: str, out: TextIO, err: TextIO) -> int:
    if check_id not in CHECKS:
        err.write(f"unknown check {check_id!r}; choose from {', '.join(CHECKS)}\n")
        return EXIT_UNKNOWN_CHECK
    res = run_check(check_id)
    out.write(res.report())
    return EXIT_OK if res.passed else EXIT_FAILED


def _cell(text: str) -> str:
    return " ".join(str(text).split()).replace("\t", " ")


def dump_section(layout: HubLayout, section: str) -> str:
    """Tab-separated table of one hub section with a header row and stable ordering."""
    hub = load(layout, Embedder())
    rows: list[list[str]] = []
    if section in ("skills", "notes", "attempts"):
        header = ["id", "entropy", "kappa", "frequency", "provenance", "content"]
        tier = {"skills": Tier.SKILLS, "notes": Tier.NOTES, "attempts": Tier.ATTEMPTS}[section]
        for r in sorted(hub.store.tier(tier), key=lambda r: r.id):
            rows.append([r.id, f"{r.entropy:.4f}", f"{r.confidence:.4f}", str(r.retrieval_frequency),
                         r.provenance, _cell(r.content)])
    elif section == "graph":
        header = ["id", "src", "dst", "label", "causal", "strength", "provenance"]
        for eid in sorted(hub.graph.edges):
            e = hub.graph.edges[eid]
            rows.append([e.id, e.src, e.dst, e.label, str(e.causal).lower(), f"{e.strength:.4f}", e.provenance])
    else:
        header = ["index", "k_budget", "alpha_cost", "gamma", "weight"]
        for i, s in enumerate(hub.population.strategies if hub.population else []):
            rows.append([str(i), str(s.k_budget), f"{s.alpha_cost:g}", f"{s.gamma_diversity:g}", f"{s.weight:.6f}"])
    return "".join("\t".join(row) + "\n" for row in [header] + rows)


def cmd_dump(args: argparse.Namespace, out: TextIO) -> int:
    if args.out is None:
        raise ConfigInvalid("--dump needs --out pointing at a hub directory")
    out.write(dump_section(HubLayout(args.out), args.dump))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, out: TextIO = None, err: TextIO = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.check is not None:
            return cmd_check(args.check, out, err)
        if args.dump is not None:
            return cmd_dump(args, out)
        if args.replay is not None:
            return cmd_replay(args, out)
        return cmd_run(args, out)
    except ConfigInvalid as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (PrismError, OSError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
