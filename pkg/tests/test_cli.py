from __future__ import annotations

import io
import json
import os

import pytest
import yaml

from icrl.cli import main
from icrl.config import ConfigError, ablation_variant, parse_config

from conftest import RESPONSE_24, RESPONSE_36


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def write_config(tmp_path, data) -> str:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def test_minimal_config_fills_defaults(tmp_path):
    path = write_config(tmp_path, {"task": "game24", "episodes": 50})
    config = parse_config(path)
    assert config.schedule == "preset"
    assert config.buffer_capacity is None
    assert config.method == "icrl"
    assert config.policy.temperature == 1.0
    assert config.judge.temperature == 0.0


def test_short_context_config(tmp_path):
    path = write_config(tmp_path, {"task": "game24", "schedule": "preset",
                                   "buffer_capacity": 3})
    config = parse_config(path)
    assert config.buffer_capacity == 3


def test_unknown_key_suggests_correction(tmp_path):
    path = write_config(tmp_path, {"task": "game24",
                                   "policy": {"temprature": 0.5}})
    with pytest.raises(ConfigError, match="temperature"):
        parse_config(path)


def test_invalid_enum_rejected(tmp_path):
    path = write_config(tmp_path, {"task": "game25"})
    with pytest.raises(ConfigError, match="task"):
        parse_config(path)


def test_overrides_apply_and_validate(tmp_path):
    path = write_config(tmp_path, {"task": "game24"})
    config = parse_config(path, ["episodes=7", "policy.temperature=0.3",
                                 "buffer_capacity=3"])
    assert config.episodes == 7
    assert config.policy.temperature == 0.3
    assert config.buffer_capacity == 3
    with pytest.raises(ConfigError):
        parse_config(path, ["episodess=7"])


def test_ablation_variants(tmp_path):
    path = write_config(tmp_path, {"task": "game24", "episodes": 10})
    base = parse_config(path)
    assert ablation_variant(base, "zero_rewards").zero_rewards
    assert ablation_variant(base, "short_context").buffer_capacity == 3
    assert ablation_variant(base, "exploration_only").schedule == "exploration_only"
    assert ablation_variant(base, "exploitation_only").schedule == "exploitation_only"
    assert ablation_variant(base, "no_ee").schedule == "no_ee"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def test_solve24_unsolvable(capsys):
    assert main(["solve24", "1", "1", "1", "1"]) == 0
    assert capsys.readouterr().out.strip() == "UNSOLVABLE"


def test_solve24_witness(capsys):
    assert main(["solve24", "1", "8", "10", "11"]) == 0
    out = capsys.readouterr().out.strip()
    assert out.endswith("= 24")


def test_verify24_published_attempt(capsys, monkeypatch):
    solution = (
        "Step1: 4 + 8 = 12 (left: 4 6 12)\n"
        "Step2: 6 - 4 = 2 (left: 2 12)\n"
        "Step3: 2 * 12 = 24 (left: 24)\n"
        "Answer: (6 - 4) * (4 + 8) = 24\n"
    )
    monkeypatch.setattr("sys.stdin", io.StringIO(solution))
    assert main(["verify24", "4", "4", "6", "8"]) == 0
    assert capsys.readouterr().out.strip() == "valid24"


def test_verify24_parse_error_is_reported(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("nonsense"))
    assert main(["verify24", "4", "4", "6", "8"]) == 0
    assert capsys.readouterr().out.startswith("invalid (parse error")


def test_sim_interactive(capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("teleport to bathroom\nfocus on cup\n"))
    assert main(["sim", "--world", "boil_water"]) == 0
    out = capsys.readouterr().out
    assert "You teleport to the bathroom. (reward=3)" in out
    assert "Task Failed. You used the focus action inappropriately." in out


def _scripted_run_config(tmp_path, episodes=2) -> str:
    problems = tmp_path / "problems.txt"
    problems.write_text("4 9 10 13\n", encoding="utf-8")
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"entries": [
        {"episode": 1, "role": "policy", "text": RESPONSE_36},
        {"episode": 2, "role": "policy", "text": RESPONSE_24},
    ]}), encoding="utf-8")
    return write_config(tmp_path, {
        "task": "game24",
        "episodes": episodes,
        "problems": str(problems),
        "policy": {"backend": "scripted", "script_path": str(script)},
        "judge": {"backend": "oracle"},
    })


def test_run_dry_run_prints_prompt_without_network(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ICRL_API_KEY", raising=False)
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    config = _scripted_run_config(tmp_path)
    assert main(["run", "--config", config, "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert out.rstrip("\n").endswith("**Prompt**: Input: 4 9 10 13")


def test_run_writes_output_tree(tmp_path, capsys):
    config = _scripted_run_config(tmp_path)
    out_dir = tmp_path / "out"
    assert main(["run", "--config", config, "--out", str(out_dir)]) == 0
    for name in ("config.yaml", "logs.jsonl", "summary.csv", "cost.csv", "curves.svg"):
        assert (out_dir / name).is_file(), name
    records = [json.loads(l) for l in (out_dir / "logs.jsonl").read_text().splitlines()]
    assert [r["episode"] for r in records] == [1, 2]
    assert records[1]["ground_truth"] == 1.0


def test_run_output_tree_is_deterministic(tmp_path):
    config = _scripted_run_config(tmp_path)
    trees = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        assert main(["run", "--config", config, "--out", str(out_dir)]) == 0
        trees.append({
            f.name: (out_dir / f.name).read_bytes() for f in out_dir.iterdir()
        })
    assert trees[0] == trees[1]


def test_plot_subcommand(tmp_path, capsys):
    config = _scripted_run_config(tmp_path)
    out_dir = tmp_path / "out"
    main(["run", "--config", config, "--out", str(out_dir)])
    svg = tmp_path / "replot.svg"
    assert main(["plot", str(out_dir / "logs.jsonl"), "-o", str(svg)]) == 0
    assert svg.read_text().startswith("<svg")


def test_missing_config_reports_error(capsys):
    assert main(["run", "--config", "/nonexistent.yaml"]) == 1
    assert "error:" in capsys.readouterr().err
