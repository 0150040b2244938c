from __future__ import annotations

import re

from icrl.baselines import (
    ReflectionBuffer,
    run_best_of_n,
    run_cot,
    run_reflexion,
    run_self_refine,
    sanitize_reflection,
)
from icrl.policy import ScriptEntry, ScriptedPolicy

from conftest import RESPONSE_24, RESPONSE_36, RESPONSE_63, game24_config, policy_script


def test_cot_prompt_is_bare_task(problem_4_9_10_13):
    config = game24_config(method="cot", episodes=1)
    log = run_cot(problem_4_9_10_13, config, policy_script({1: RESPONSE_24}))
    assert log.prompt.endswith("**Prompt**: Input: 4 9 10 13")
    assert "Instruction:" not in log.prompt
    assert log.method == "cot"
    assert log.ground_truth == 1.0
    assert log.rewards == []


def test_long_cot_prompt_and_response_tags(problem_4_9_10_13):
    config = game24_config(method="long_cot", episodes=1)
    canned = f"<think>try 4*9... no</think>\n{RESPONSE_24}"
    policy = ScriptedPolicy([ScriptEntry(text=canned, role="policy")])
    log = run_cot(problem_4_9_10_13, config, policy, long_variant=True)
    assert "<think>...</think>" in log.prompt
    assert "<think>" in log.response and "</think>" in log.response
    assert log.method == "long_cot"
    assert log.ground_truth == 1.0


def test_best_of_n_selects_earliest_pass(problem_4_9_10_13):
    config = game24_config(method="best_of_n")
    policy = ScriptedPolicy([
        ScriptEntry(text=RESPONSE_36, episode=1, role="policy"),
        ScriptEntry(text=RESPONSE_24, episode=2, role="policy"),
        ScriptEntry(text=RESPONSE_24, episode=3, role="policy"),
    ])
    summary = run_best_of_n(problem_4_9_10_13, config, policy, n=3)
    assert summary.best_episode == 2  # scores (fail, pass, pass): earliest pass wins
    assert not summary.no_valid_candidate
    assert summary.best_response == RESPONSE_24
    assert len(summary.logs) == 3
    assert all(log.prompt == summary.logs[0].prompt for log in summary.logs)


def test_best_of_n_degenerate_n1_matches_cot(problem_4_9_10_13):
    config = game24_config(method="best_of_n")
    summary = run_best_of_n(problem_4_9_10_13, config,
                            policy_script({1: RESPONSE_24}), n=1)
    assert summary.best_episode == 1
    assert summary.logs[0].prompt.endswith("**Prompt**: Input: 4 9 10 13")


def test_best_of_n_flags_no_valid_candidate(problem_4_9_10_13):
    config = game24_config(method="best_of_n")
    policy = ScriptedPolicy([
        ScriptEntry(text="junk one", episode=1, role="policy"),
        ScriptEntry(text="junk two", episode=2, role="policy"),
    ])
    summary = run_best_of_n(problem_4_9_10_13, config, policy, n=2)
    assert summary.no_valid_candidate


def test_self_refine_call_count_and_reward_free_prompts(problem_4_9_10_13):
    config = game24_config(method="self_refine")
    policy = ScriptedPolicy([
        ScriptEntry(text=RESPONSE_36, episode=1, role="policy"),
        ScriptEntry(text="the steps miss 24", episode=2, role="feedback"),
        ScriptEntry(text=RESPONSE_24, episode=2, role="policy"),
    ])
    logs = run_self_refine(problem_4_9_10_13, config, policy, k=2)
    assert len(logs) == 2
    assert sum(log.calls for log in logs) == 3  # gen, feedback, refine
    for log in logs:
        assert "Reward" not in log.prompt
    # Full history is retained: the refine prompt shows the first response.
    assert "= 36" in logs[1].prompt
    assert "the steps miss 24" in logs[1].prompt
    assert logs[1].ground_truth == 1.0


def test_reflexion_window_and_prompt_hygiene(problem_4_9_10_13):
    config = game24_config(method="reflexion")
    entries = []
    for episode in range(1, 6):
        entries.append(ScriptEntry(text=RESPONSE_36, episode=episode, role="policy"))
        entries.append(ScriptEntry(text=f"reflection about try {episode}",
                                   episode=episode, role="reflection"))
    policy = ScriptedPolicy(entries)
    logs = run_reflexion(problem_4_9_10_13, config, policy, k=5)
    prompt = logs[4].prompt  # attempt prompt of episode 5

    blocks = re.findall(r"^Reflection \d+:$", prompt, flags=re.MULTILINE)
    assert blocks == ["Reflection 2:", "Reflection 3:", "Reflection 4:"]
    assert "Reward" not in prompt
    assert "= 36" not in prompt  # no prior responses
    assert logs[4].calls == 2  # attempt + reflection
    # Rewards are still evaluated and logged (reflection saw them).
    assert logs[4].rewards[0][0] == "Step1"


def test_reflection_buffer_window():
    buffer = ReflectionBuffer(window=3)
    for index in range(1, 6):
        buffer.push(f"note {index}")
    rendered = buffer.render()
    assert "note 2" not in rendered
    assert rendered.startswith("Reflection 3:")
    assert rendered.count("Reflection") == 3


def test_sanitize_reflection_normalizes_whitespace_and_caps():
    noisy = "  a \t lot   of\n\n\n\nspace " + "x" * 5000
    clean = sanitize_reflection(noisy)
    assert not any("  " in line or "\t" in line for line in clean.splitlines())
    assert "\n\n\n" not in clean
    assert len(clean) <= 2000


def test_textworld_best_of_n_selects_highest_return():
    from icrl.config import config_from_dict
    from icrl.minilab.world import load_world
    from icrl.tasks import TextworldProblem

    config = config_from_dict({
        "task": "textworld",
        "method": "best_of_n",
        "world": "boil_water",
        "policy": {"backend": "scripted", "script_path": "unused.json"},
    })
    spec = load_world("boil_water")
    # Sample 1 waits until the step limit (return 0); sample 2 is optimal.
    entries = [ScriptEntry(text="wait", episode=1, role="policy") for _ in range(12)]
    entries += [ScriptEntry(text=a, episode=2, role="policy") for a in spec.optimal_actions]
    policy = ScriptedPolicy(entries)
    problem = TextworldProblem(world="boil_water", problem_id="t000")
    summary = run_best_of_n(problem, config, policy, n=2)
    assert summary.best_episode == 2
    assert summary.logs[1].total_reward == 100.0
    assert summary.logs[0].total_reward == 0.0
