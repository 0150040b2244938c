"""Prompt assembly: attempt blocks, segment layout, and span accounting."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from icrl import game24
from icrl.buffer import AttemptRecord
from icrl.instructions import InstructionKind, instruction_text

SEGMENTS = ("buffer", "instruction", "task")
TASK_KINDS = ("game24", "writing", "textworld")

REWARD_TAG = "Reward"


@dataclass(frozen=True)
class TaskFormat:
    default_layout: tuple[str, str, str]
    buffer_wrapper: tuple[str, str] | None = None
    instruction_wrapper: tuple[str, str] | None = None


TASK_FORMATS = {
    "game24": TaskFormat(default_layout=("buffer", "instruction", "task")),
    "writing": TaskFormat(default_layout=("buffer", "instruction", "task")),
    "textworld": TaskFormat(
        default_layout=("task", "instruction", "buffer"),
        buffer_wrapper=("<Attempts>\n\n", "\n\n</Attempts>"),
        instruction_wrapper=("<Instruction>\n", "\n</Instruction>"),
    ),
}


@dataclass(frozen=True)
class PromptBundle:
    user_text: str
    system_text: str | None
    segment_spans: dict[str, tuple[int, int]]

    def segment_text(self, name: str) -> str:
        span = self.segment_spans.get(name)
        if span is None:
            return ""
        return self.user_text[span[0]:span[1]]


def _format_scalar(value: float) -> str:
    return f"{value:.2f}"


def _render_game24_attempt(attempt: AttemptRecord, zero_rewards: bool) -> str:
    rewards = attempt.rewards
    if len(rewards) != 4:
        raise ValueError(f"game24 attempts carry 4 rewards, got {len(rewards)}")
    shown = [0.0] * 4 if zero_rewards else [value for _, value in rewards]
    tags = [f"<{REWARD_TAG}: {_format_scalar(v)}>" for v in shown]

    lines = ["<attempt>"]
    if attempt.task_header:
        lines.append(attempt.task_header)
    lines.append("Response:")
    try:
        solution = game24.parse_solution(attempt.response_text)
    except game24.SolutionParseError:
        lines.append(attempt.response_text.strip())
        lines.append(" ".join(tags))
    else:
        for index, step in enumerate(solution.steps):
            lines.append(f"Step{index + 1}: {step.text} {tags[index]}")
        lines.append(f"**Answer**: {solution.answer_text} {tags[3]}")
    lines.append("</attempt>")
    return "\n".join(lines)


def _render_writing_attempt(attempt: AttemptRecord, zero_rewards: bool) -> str:
    if len(attempt.rewards) != 1:
        raise ValueError(f"writing attempts carry 1 reward, got {len(attempt.rewards)}")
    value = 0.0 if zero_rewards else attempt.rewards[0][1]
    return (
        "<attempt>\n"
        f"{attempt.response_text.strip()}\n"
        f"{REWARD_TAG}: {_format_scalar(value)}\n"
        "</attempt>"
    )


_ENV_REWARD_RE = re.compile(r"\(reward=-?\d+\)")
_ENV_TOTAL_RE = re.compile(r"Total reward: -?\d+")


def _render_textworld_attempt(attempt: AttemptRecord, zero_rewards: bool) -> str:
    if not attempt.rewards:
        raise ValueError("textworld attempts carry at least a terminal reward entry")
    body = attempt.response_text
    if zero_rewards:
        body = _ENV_REWARD_RE.sub("(reward=0)", body)
        body = _ENV_TOTAL_RE.sub("Total reward: 0", body)
    return f"Attempt {attempt.episode_index}:\n{body}"


def render_attempt(attempt: AttemptRecord, task_kind: str, zero_rewards: bool = False) -> str:
    """Render one buffer entry as the task's attempt block.

    game24 wraps the normalized step/answer lines in ``<attempt>`` tags with
    a two-decimal reward tag on every rewarded line; writing appends a single
    ``Reward:`` line to the passage; textworld replays the action ->
    observation chain under an ``Attempt n:`` header. With ``zero_rewards``
    every rendered scalar reads as zero.
    """
    if task_kind == "game24":
        return _render_game24_attempt(attempt, zero_rewards)
    if task_kind == "writing":
        return _render_writing_attempt(attempt, zero_rewards)
    if task_kind == "textworld":
        return _render_textworld_attempt(attempt, zero_rewards)
    raise ValueError(f"unknown task kind {task_kind!r}")


def _wrap(text: str, wrapper: tuple[str, str] | None) -> str:
    if not text or wrapper is None:
        return text
    return f"{wrapper[0]}{text}{wrapper[1]}"


def assemble_prompt(
    entries: Iterable[AttemptRecord],
    task_text: str,
    instruction: InstructionKind,
    task_kind: str,
    layout: Sequence[str] | None = None,
    zero_rewards: bool = False,
    system_text: str | None = None,
) -> PromptBundle:
    """Concatenate buffer, instruction, and task segments in layout order.

    Empty segments contribute nothing (with an empty buffer and no
    instruction the prompt is exactly the task text). Non-empty segments are
    separated by one blank line; ``segment_spans`` maps each contributing
    segment to its character range.
    """
    fmt = TASK_FORMATS.get(task_kind)
    if fmt is None:
        raise ValueError(f"unknown task kind {task_kind!r}")
    if layout is None:
        layout = fmt.default_layout
    if sorted(layout) != sorted(SEGMENTS):
        raise ValueError(f"layout must be a permutation of {SEGMENTS}, got {tuple(layout)}")

    blocks = [render_attempt(e, task_kind, zero_rewards) for e in entries]
    rendered = {
        "buffer": _wrap("\n\n".join(blocks), fmt.buffer_wrapper),
        "instruction": _wrap(instruction_text(instruction), fmt.instruction_wrapper),
        "task": task_text,
    }

    parts: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    cursor = 0
    for name in layout:
        text = rendered[name]
        if not text:
            continue
        if parts:
            parts.append("\n\n")
            cursor += 2
        parts.append(text)
        spans[name] = (cursor, cursor + len(text))
        cursor += len(text)
    return PromptBundle(user_text="".join(parts), system_text=system_text, segment_spans=spans)
