from __future__ import annotations

import pytest

from icrl.instructions import InstructionKind, instruction_text, select_instruction

EXPLORATION_TEXT = (
    "Instruction: Examine all the <attempt>...</attempt> examples, each showing a "
    "candidate Response, and the Rewards for each step of the Response. Provide a "
    "response that is completely different for any steps from every single one of "
    "the previous attempts demonstrated in the context."
)

EXPLOITATION_TEXT = (
    "Instruction: You will be given multiple <attempt>...</attempt> examples, each "
    "showing a candidate Response, and the Rewards for each step of the Response. "
    "Your task: Based on the previous attempts, try your best to produce a response "
    "that can achieve higher rewards."
)

AUTONOMOUS_TEXT = (
    "Instruction: Examine all the <attempt>...</attempt> examples, each showing a "
    "candidate Response and its Reward. You have two options: exploration or "
    "exploitation.\n\n"
    "For exploration, provide a response that is completely different for any steps "
    "from every single one of the previous attempts demonstrated in the context, "
    "while making sure it correctly follows the task instruction.\n\n"
    "For exploitation, based on the previous attempts, try your best to produce a "
    "response that can achieve higher rewards.\n\n"
    "Pick one option to follow."
)


def test_instruction_templates_byte_match():
    assert instruction_text(InstructionKind.EXPLORATION) == EXPLORATION_TEXT
    assert instruction_text(InstructionKind.EXPLOITATION) == EXPLOITATION_TEXT
    assert instruction_text(InstructionKind.AUTONOMOUS) == AUTONOMOUS_TEXT
    assert instruction_text(InstructionKind.NONE) == ""


def test_empty_buffer_yields_no_instruction():
    assert select_instruction("preset", 1, 0) is InstructionKind.NONE
    assert select_instruction("autonomous", 1, 0) is InstructionKind.NONE
    assert select_instruction("exploration_only", 1, 0) is InstructionKind.NONE


def test_preset_parity():
    assert select_instruction("preset", 2, 1) is InstructionKind.EXPLORATION
    assert select_instruction("preset", 3, 2) is InstructionKind.EXPLOITATION
    assert select_instruction("preset", 4, 3) is InstructionKind.EXPLORATION


def test_no_ee_always_none():
    assert select_instruction("no_ee", 5, 4) is InstructionKind.NONE
    assert select_instruction("no_ee", 2, 1) is InstructionKind.NONE


def test_constant_schedules():
    assert select_instruction("autonomous", 7, 6) is InstructionKind.AUTONOMOUS
    assert select_instruction("exploration_only", 7, 6) is InstructionKind.EXPLORATION
    assert select_instruction("exploitation_only", 7, 6) is InstructionKind.EXPLOITATION


def test_unknown_schedule_rejected():
    with pytest.raises(ValueError):
        select_instruction("bogus", 1, 0)


def test_preset_alternates_strictly_from_episode_two():
    kinds = [select_instruction("preset", k, k - 1) for k in range(2, 11)]
    for offset, kind in enumerate(kinds):
        episode = offset + 2
        expected = InstructionKind.EXPLORATION if episode % 2 == 0 else InstructionKind.EXPLOITATION
        assert kind is expected
