"""Meta-instruction selection: exploration / exploitation / autonomous choice."""

from __future__ import annotations

import enum
from functools import lru_cache
from importlib import resources


class InstructionKind(enum.Enum):
    NONE = "none"
    EXPLORATION = "exploration"
    EXPLOITATION = "exploitation"
    AUTONOMOUS = "autonomous"


SCHEDULES = ("preset", "autonomous", "exploration_only", "exploitation_only", "no_ee")

_TEMPLATE_FILES = {
    InstructionKind.EXPLORATION: "instruction_exploration.txt",
    InstructionKind.EXPLOITATION: "instruction_exploitation.txt",
    InstructionKind.AUTONOMOUS: "instruction_autonomous.txt",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a packaged template, without the file's trailing newline."""
    path = resources.files("icrl").joinpath("templates", name)
    return path.read_text(encoding="utf-8").rstrip("\n")


def instruction_text(kind: InstructionKind) -> str:
    """Verbatim instruction body for ``kind``; empty string for NONE."""
    if kind is InstructionKind.NONE:
        return ""
    return load_template(_TEMPLATE_FILES[kind])


def select_instruction(schedule: str, episode_index: int, buffer_len: int) -> InstructionKind:
    """Pick the meta-instruction for one episode.

    With an empty buffer every schedule yields NONE: there is nothing to
    explore against or exploit, so the first trial gets the plain task
    prompt. Preset alternates by episode parity (even -> exploration,
    odd -> exploitation); the other schedules are constant.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}, expected one of {SCHEDULES}")
    if episode_index < 1:
        raise ValueError(f"episode_index must be >= 1, got {episode_index}")
    if schedule == "no_ee" or buffer_len == 0:
        return InstructionKind.NONE
    if schedule == "preset":
        if episode_index % 2 == 0:
            return InstructionKind.EXPLORATION
        return InstructionKind.EXPLOITATION
    if schedule == "autonomous":
        return InstructionKind.AUTONOMOUS
    if schedule == "exploration_only":
        return InstructionKind.EXPLORATION
    return InstructionKind.EXPLOITATION
