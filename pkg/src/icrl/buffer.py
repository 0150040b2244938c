"""Experience buffer: the ordered store of past attempts and their rewards."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence


@dataclass
class AttemptRecord:
    """One finished episode: the response plus its positioned scalar rewards.

    ``rewards`` is an ordered list of ``(position_label, value)`` pairs; the
    label names where the scalar attaches (a step line, the answer line, an
    environment action, ...). ``task_header`` is an optional first line for
    the rendered block (e.g. ``"Input: 4 9 10 13."``) that cannot be
    recovered from the response text alone.
    """

    episode_index: int
    response_text: str
    rewards: list[tuple[str, float]]
    total_reward: float
    outcome_note: str | None = None
    task_header: str | None = None

    def __post_init__(self) -> None:
        if self.episode_index < 1:
            raise ValueError(f"episode_index must be >= 1, got {self.episode_index}")


class ExperienceBuffer:
    """Chronological, capacity-limited sequence of attempts (deque semantics).

    ``capacity=None`` means unbounded. When full, pushing evicts the oldest
    entry. Episode indices must be strictly increasing.
    """

    def __init__(self, capacity: int | None = None,
                 entries: Sequence[AttemptRecord] = ()) -> None:
        if capacity is not None and capacity < 1:
            raise ValueError(f"capacity must be >= 1 or None, got {capacity}")
        self.capacity = capacity
        self._entries: list[AttemptRecord] = []
        for record in entries:
            self.push(record)

    @property
    def entries(self) -> tuple[AttemptRecord, ...]:
        return tuple(self._entries)

    def push(self, record: AttemptRecord) -> None:
        if self._entries and record.episode_index <= self._entries[-1].episode_index:
            raise ValueError(
                f"episode_index {record.episode_index} is not greater than the "
                f"last stored index {self._entries[-1].episode_index}"
            )
        self._entries.append(record)
        while self.capacity is not None and len(self._entries) > self.capacity:
            self._entries.pop(0)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[AttemptRecord]:
        return iter(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)


def push_attempt(buffer: ExperienceBuffer, record: AttemptRecord) -> ExperienceBuffer:
    """Push ``record`` and return the buffer (evicting the oldest when full)."""
    buffer.push(record)
    return buffer
