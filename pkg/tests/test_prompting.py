from __future__ import annotations

import re

import pytest

from icrl.buffer import AttemptRecord
from icrl.instructions import InstructionKind
from icrl.prompting import assemble_prompt, render_attempt

from conftest import RESPONSE_36, RESPONSE_63, make_record


def test_game24_block_matches_published_layout():
    record = make_record(1, RESPONSE_63, [("Step1", 3), ("Step2", 0), ("Step3", 0), ("Answer", 3)])
    block = render_attempt(record, "game24")
    assert block == (
        "<attempt>\n"
        "Input: 4 9 10 13.\n"
        "Response:\n"
        "Step1: 10 - 4 = 6 (left: 6 9 13) <Reward: 3.00>\n"
        "Step2: 13 - 6 = 7 (left: 7 9) <Reward: 0.00>\n"
        "Step3: 9 * 7 = 63 (left: 63) <Reward: 0.00>\n"
        "**Answer**: (13 - (10 - 4)) * 9 = 63 <Reward: 3.00>\n"
        "</attempt>"
    )


def test_game24_reward_tag_sequence():
    record = make_record(1, RESPONSE_63, [("Step1", 3), ("Step2", 0), ("Step3", 0), ("Answer", 3)])
    block = render_attempt(record, "game24")
    tags = re.findall(r"<Reward: (\d+\.\d\d)>", block)
    assert tags == ["3.00", "0.00", "0.00", "3.00"]


def test_zero_rewards_forces_all_zero_scalars():
    record = make_record(1, RESPONSE_63, [("Step1", 3), ("Step2", 2), ("Step3", 1), ("Answer", 3)])
    block = render_attempt(record, "game24", zero_rewards=True)
    tags = re.findall(r"<Reward: (\d+\.\d\d)>", block)
    assert tags == ["0.00"] * 4


def test_game24_reward_count_mismatch_rejected():
    record = make_record(1, RESPONSE_63, [("Step1", 3)])
    with pytest.raises(ValueError):
        render_attempt(record, "game24")


def test_game24_unparseable_response_falls_back_to_raw():
    record = make_record(2, "total nonsense",
                         [("Step1", 0), ("Step2", 0), ("Step3", 0), ("Answer", 0)])
    block = render_attempt(record, "game24")
    assert "total nonsense" in block
    assert block.count("<Reward: 0.00>") == 4


def test_writing_block():
    record = AttemptRecord(episode_index=1, response_text="Plan: x. Passage: y.",
                           rewards=[("passage", 7.0)], total_reward=7.0)
    block = render_attempt(record, "writing")
    assert block == "<attempt>\nPlan: x. Passage: y.\nReward: 7.00\n</attempt>"


def test_textworld_block_zeroing_and_total_line():
    body = (
        "teleport to bathroom -> Observation: You teleport to the bathroom. (reward=3)\n"
        "-> focus on substance in toilet -> Observation: You focus on the water. (reward=66)\n"
        "Task Failed. You have exceeded the maximum number of steps. (reward=0) Total reward: 71"
    )
    record = AttemptRecord(
        episode_index=4, response_text=body,
        rewards=[("teleport to bathroom", 3.0), ("focus on substance in toilet", 66.0),
                 ("terminal", 0.0)],
        total_reward=71.0, outcome_note="Task Failed.",
    )
    block = render_attempt(record, "textworld")
    assert block.startswith("Attempt 4:\n")
    assert block.endswith("Total reward: 71")
    zeroed = render_attempt(record, "textworld", zero_rewards=True)
    assert "(reward=66)" not in zeroed
    assert zeroed.endswith("Total reward: 0")
    assert re.findall(r"\(reward=(\d+)\)", zeroed) == ["0", "0", "0"]


def test_assemble_empty_buffer_no_instruction_is_task_only():
    bundle = assemble_prompt([], "THE TASK", InstructionKind.NONE, "game24")
    assert bundle.user_text == "THE TASK"
    assert bundle.segment_spans == {"task": (0, 8)}


def test_assemble_segment_order_and_spans():
    records = [
        make_record(1, RESPONSE_63, [("Step1", 3), ("Step2", 0), ("Step3", 0), ("Answer", 3)]),
        make_record(2, RESPONSE_36, [("Step1", 0), ("Step2", 0), ("Step3", 0), ("Answer", 0)]),
    ]
    bundle = assemble_prompt(records, "TASK", InstructionKind.EXPLOITATION, "game24")
    spans = bundle.segment_spans
    assert list(spans) == ["buffer", "instruction", "task"]
    assert bundle.segment_text("buffer").count("<attempt>") == 2
    assert bundle.segment_text("task") == "TASK"
    assert bundle.segment_text("instruction").startswith("Instruction: You will be given")
    # Buffer entries appear oldest-first.
    buffer_text = bundle.segment_text("buffer")
    assert buffer_text.index("= 63") < buffer_text.index("= 36")
    # Spans are non-overlapping and ordered.
    ranges = sorted(spans.values())
    for (a, b), (c, d) in zip(ranges, ranges[1:]):
        assert b <= c


def test_assemble_textworld_layout_and_wrappers():
    body = "wait -> Observation: You wait. (reward=0)\nTask Completed. (reward=0) Total reward: 100"
    record = AttemptRecord(episode_index=1, response_text=body,
                           rewards=[("terminal", 0.0)], total_reward=100.0)
    bundle = assemble_prompt([record], "ENVDESC", InstructionKind.EXPLORATION, "textworld")
    assert list(bundle.segment_spans) == ["task", "instruction", "buffer"]
    assert bundle.segment_text("instruction").startswith("<Instruction>\n")
    assert bundle.segment_text("instruction").endswith("\n</Instruction>")
    assert bundle.segment_text("buffer").startswith("<Attempts>\n\nAttempt 1:")
    assert bundle.segment_text("buffer").endswith("\n\n</Attempts>")


def test_assemble_rejects_bad_layout():
    with pytest.raises(ValueError):
        assemble_prompt([], "T", InstructionKind.NONE, "game24", layout=["task", "task", "buffer"])


def test_assemble_custom_layout_order():
    record = make_record(1, RESPONSE_63, [("Step1", 3), ("Step2", 0), ("Step3", 0), ("Answer", 3)])
    bundle = assemble_prompt([record], "TASK", InstructionKind.NONE, "game24",
                             layout=["task", "buffer", "instruction"])
    assert bundle.user_text.startswith("TASK\n\n<attempt>")
