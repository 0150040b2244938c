from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from icrl.buffer import AttemptRecord, ExperienceBuffer, push_attempt


def record(index: int) -> AttemptRecord:
    return AttemptRecord(episode_index=index, response_text=f"r{index}",
                         rewards=[("passage", 1.0)], total_reward=1.0)


def test_push_onto_empty_buffer():
    buffer = ExperienceBuffer()
    push_attempt(buffer, record(1))
    assert len(buffer) == 1


def test_capacity_evicts_oldest():
    buffer = ExperienceBuffer(capacity=3)
    for index in range(1, 5):
        buffer.push(record(index))
    assert len(buffer) == 3
    assert [r.episode_index for r in buffer] == [2, 3, 4]


def test_duplicate_index_rejected():
    buffer = ExperienceBuffer()
    buffer.push(record(1))
    with pytest.raises(ValueError):
        buffer.push(record(1))


def test_non_monotone_index_rejected():
    buffer = ExperienceBuffer()
    buffer.push(record(5))
    with pytest.raises(ValueError):
        buffer.push(record(3))


def test_episode_index_must_be_positive():
    with pytest.raises(ValueError):
        record(0)


def test_unbounded_buffer_keeps_everything():
    buffer = ExperienceBuffer()
    for index in range(1, 101):
        buffer.push(record(index))
    assert len(buffer) == 100


@given(
    capacity=st.one_of(st.none(), st.integers(min_value=1, max_value=5)),
    count=st.integers(min_value=0, max_value=20),
)
def test_buffer_invariants(capacity, count):
    buffer = ExperienceBuffer(capacity=capacity)
    for index in range(1, count + 1):
        buffer.push(record(index))
    indices = [r.episode_index for r in buffer]
    assert indices == sorted(indices)
    if capacity is None:
        assert len(buffer) == count
    else:
        assert len(buffer) == min(count, capacity)
        if count:
            assert indices[-1] == count
