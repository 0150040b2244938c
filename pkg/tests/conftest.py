from __future__ import annotations

import pytest

from icrl.buffer import AttemptRecord
from icrl.config import RunConfig, config_from_dict
from icrl.game24 import Game24Problem
from icrl.policy import ScriptEntry, ScriptedPolicy

# The three buffer attempts shown for input 4 9 10 13, in wire format.
RESPONSE_63 = (
    "<answer>**Response** Step1: 10 - 4 = 6 (left: 6 9 13) "
    "Step2: 13 - 6 = 7 (left: 7 9) Step3: 9 * 7 = 63 (left: 63) "
    "**Answer**: (13 - (10 - 4)) * 9 = 63</answer>"
)
RESPONSE_36 = (
    "<answer>**Response** Step1: 10 + 4 = 14 (left: 9 13 14) "
    "Step2: 14 + 9 = 23 (left: 13 23) Step3: 23 + 13 = 36 (left: 36) "
    "**Answer**: (10 + 4 + 9) + 13 = 36</answer>"
)
RESPONSE_10 = (
    "<answer>**Response** Step1: 9 + 10 = 19 (left: 4 13 19) "
    "Step2: 19 - 13 = 6 (left: 4 6) Step3: 6 + 4 = 10 (left: 10) "
    "**Answer**: ((9 + 10) - 13) + 4 = 10</answer>"
)
RESPONSE_24 = (
    "<answer>**Response** Step1: 13 - 9 = 4 (left: 4 4 10) "
    "Step2: 10 - 4 = 6 (left: 4 6) Step3: 4 * 6 = 24 (left: 24) "
    "**Answer**: (13 - 9) * (10 - 4) = 24</answer>"
)


@pytest.fixture
def problem_4_9_10_13() -> Game24Problem:
    return Game24Problem(inputs=(4, 9, 10, 13), problem_id="p000")


def game24_config(**overrides) -> RunConfig:
    """Config for offline scripted runs; backends are built in the tests."""
    data = {
        "task": "game24",
        "episodes": 3,
        "schedule": "preset",
        "policy": {"backend": "scripted", "script_path": "unused.json"},
        "judge": {"backend": "oracle"},
    }
    data.update(overrides)
    return config_from_dict(data)


def make_record(episode: int, response: str, rewards, total=None, header="Input: 4 9 10 13.") -> AttemptRecord:
    reward_list = [(label, float(value)) for label, value in rewards]
    return AttemptRecord(
        episode_index=episode,
        response_text=response,
        rewards=reward_list,
        total_reward=sum(v for _, v in reward_list) if total is None else total,
        task_header=header,
    )


def judge_script(scores_by_episode: dict[int, list[int]]) -> ScriptedPolicy:
    """Scripted judge returning fixed step scores per episode, in call order."""
    entries = []
    for episode, scores in sorted(scores_by_episode.items()):
        for label, score in zip(("Step1", "Step2", "Step3", "Answer"), scores):
            entries.append(ScriptEntry(
                text=f"**Answer**: {score}",
                episode=episode,
                role="judge",
                problem_id=None,
            ))
    return ScriptedPolicy(entries)


def policy_script(responses_by_episode: dict[int, str], problem_id: str | None = None) -> ScriptedPolicy:
    entries = [
        ScriptEntry(text=text, episode=episode, role="policy", problem_id=problem_id)
        for episode, text in sorted(responses_by_episode.items())
    ]
    return ScriptedPolicy(entries)


def count_buffer_blocks(prompt: str) -> int:
    """Buffer attempt blocks in a game24 prompt, excluding the task's demos.

    Rendered buffer blocks carry a "Response:" line; the five few-shot demo
    blocks inside the task text (and the instruction's literal "<attempt>"
    mention) do not.
    """
    return prompt.count("\nResponse:\n")
