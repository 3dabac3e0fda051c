from __future__ import annotations

import io
import json

import pytest

from prism_memory.cli import main
from prism_memory.memory import Store, StoreConfig
from prism_memory.graph import CausalGraph
from prism_memory.persistence import HubLayout, save


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def minimal_config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("turns: 12\nagents: 2\nn_cities: 20\nseeds: [0, 1]\n")
    return path


def test_run_writes_metrics_manifest_and_hub(tmp_path, minimal_config):
    out_dir = tmp_path / "run"
    code, out, _ = run(["--config", minimal_config, "--out", out_dir])
    assert code == 0
    for stem in ("tsp-a2-s0", "tsp-a2-s1"):
        assert (out_dir / f"{stem}.csv").exists()
        assert (out_dir / f"{stem}.jsonl").exists()
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1]
    assert set(manifest["artifacts"]) == {"tsp-a2-s0.csv", "tsp-a2-s0.jsonl", "tsp-a2-s1.csv", "tsp-a2-s1.jsonl"}
    assert (out_dir / "hub-s0" / "index.json").exists()
    assert len(out.splitlines()) == 4


def test_overrides_apply(tmp_path, minimal_config):
    out_dir = tmp_path / "run"
    code, _, _ = run(["--config", minimal_config, "--out", out_dir, "--seed", 5, "--agents", 1, "--turns", 3])
    assert code == 0
    assert (out_dir / "tsp-a1-s5.csv").read_text().count("\n") == 1 + 1 + 3


def test_missing_config_exits_2(tmp_path):
    code, _, err = run(["--config", tmp_path / "absent.yaml", "--out", tmp_path])
    assert code == 2
    assert "config" in err


def test_invalid_config_value_exits_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("tau1: 6.0\ntau2: 5.0\n")
    assert run(["--config", bad, "--out", tmp_path])[0] == 2
    bad.write_text("no_such_key: 1\n")
    assert run(["--config", bad, "--out", tmp_path])[0] == 2


def test_replay_reproduces_hashes(tmp_path, minimal_config):
    first = tmp_path / "first"
    assert run(["--config", minimal_config, "--out", first])[0] == 0
    code, out, _ = run(["--replay", first / "manifest.json", "--out", tmp_path / "second"])
    assert code == 0
    assert out.count("match") == 4 and "DIFFER" not in out
    a = json.loads((first / "manifest.json").read_text())["artifacts"]
    b = json.loads((tmp_path / "second" / "manifest.json").read_text())["artifacts"]
    assert a == b


def test_replay_detects_tampered_hash(tmp_path, minimal_config):
    first = tmp_path / "first"
    run(["--config", minimal_config, "--out", first])
    path = first / "manifest.json"
    data = json.loads(path.read_text())
    data["artifacts"]["tsp-a2-s0.csv"] = "0" * 64
    path.write_text(json.dumps(data))
    code, out, _ = run(["--replay", path, "--out", tmp_path / "second"])
    assert code == 1
    assert "DIFFER  tsp-a2-s0.csv" in out


def test_check_t3_passes():
    code, out, _ = run(["--check", "T3"])
    assert code == 0
    assert out.startswith("T3: PASS")


def test_check_stagnation_passes():
    assert run(["--check", "stagnation"])[0] == 0


def test_unknown_check_exits_4():
    code, _, err = run(["--check", "T9"])
    assert code == 4
    assert "unknown check" in err


def test_dump_empty_hub_is_header_only(tmp_path):
    layout = HubLayout(tmp_path / "hub")
    save(Store(StoreConfig()), CausalGraph(), None, layout)
    for section, header in [("skills", "id\tentropy\tkappa"), ("graph", "id\tsrc\tdst"), ("strategies", "index\t")]:
        code, out, _ = run(["--dump", section, "--out", layout.root])
        assert code == 0
        assert out.count("\n") == 1 and out.startswith(header)


def test_dump_after_run_is_stable_and_read_only(tmp_path, minimal_config):
    out_dir = tmp_path / "run"
    run(["--config", minimal_config, "--out", out_dir])
    hub = out_dir / "hub-s0"
    before = sorted((p.relative_to(hub), p.read_bytes()) for p in hub.rglob("*") if p.is_file())
    first = run(["--dump", "skills", "--out", hub])[1]
    second = run(["--dump", "skills", "--out", hub])[1]
    assert first == second
    rows = first.splitlines()
    assert len(rows) == 1 + 4
    assert rows[1].split("\t")[-1] in {"seg3", "seg6", "seg12", "seg24"}
    after = sorted((p.relative_to(hub), p.read_bytes()) for p in hub.rglob("*") if p.is_file())
    assert before == after


def test_dump_missing_hub_exits_3(tmp_path):
    assert run(["--dump", "notes", "--out", tmp_path / "nowhere"])[0] == 3


def test_dump_without_hub_path_is_config_error():
    assert run(["--dump", "notes"])[0] == 2
