"""The episode loop: prompt assembly, policy invocation, reward push, logging."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

from icrl.buffer import AttemptRecord, ExperienceBuffer
from icrl.config import RunConfig
from icrl.instructions import select_instruction
from icrl.policy import BackendError, ContextOverflowError
from icrl.prompting import PromptBundle, assemble_prompt
from icrl.tasks import Backend, Problem, make_task


@dataclass
class EpisodeLog:
    problem_id: str
    episode: int
    method: str
    instruction_kind: str
    prompt: str
    response: str
    rewards: list[tuple[str, float]]
    total_reward: float
    ground_truth: float | None
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0
    calls: int = 1
    flags: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        """JSONL form: the prompt is persisted as its character count."""
        record = asdict(self)
        record["prompt_chars"] = len(self.prompt)
        del record["prompt"]
        record["rewards"] = [[label, value] for label, value in self.rewards]
        return record

    @property
    def metric(self) -> float:
        """Per-episode curve value: r* where defined, else the observed reward."""
        if self.ground_truth is not None:
            return self.ground_truth
        return self.total_reward


def write_logs(logs: list[EpisodeLog], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for log in logs:
            handle.write(json.dumps(log.to_record(), sort_keys=True) + "\n")


def _assemble_within_limit(
    buffer: ExperienceBuffer,
    task_text: str,
    instruction,
    config: RunConfig,
    flags: list[str],
) -> PromptBundle:
    """Assemble the prompt, evicting oldest attempts while it exceeds the limit.

    Eviction drops whole attempts from the rendered prompt only; the buffer
    itself keeps its entries.
    """
    entries = list(buffer)
    limit = config.policy.context_char_limit
    while True:
        bundle = assemble_prompt(
            entries=entries,
            task_text=task_text,
            instruction=instruction,
            task_kind=config.task,
            layout=config.prompt_layout,
            zero_rewards=config.zero_rewards,
        )
        if limit is not None and len(bundle.user_text) > limit and entries:
            entries.pop(0)
            if "context_overflow_evicted" not in flags:
                flags.append("context_overflow_evicted")
            continue
        return bundle


def run_problem(
    problem: Problem,
    config: RunConfig,
    policy: Backend,
    reward_fn=None,
    judge_backend: Backend | None = None,
) -> list[EpisodeLog]:
    """Run K episodes on one problem; episode k's buffer feeds episode k+1.

    Policy failures after retries mark the episode failed and the loop
    continues. Context-length rejections evict oldest attempts from the
    rendered prompt and retry the episode.
    """
    task = make_task(config, judge_backend=judge_backend, reward_fn=reward_fn)
    buffer = ExperienceBuffer(capacity=config.buffer_capacity)
    task_text = task.task_text(problem)
    deterministic = bool(getattr(policy, "deterministic", False))
    logs: list[EpisodeLog] = []

    for episode in range(1, config.episodes + 1):
        flags: list[str] = []
        instruction = select_instruction(config.schedule, episode, len(buffer))
        bundle = _assemble_within_limit(buffer, task_text, instruction, config, flags)
        started = time.monotonic()

        outcome = None
        evict_from = list(buffer)
        while True:
            try:
                outcome = task.run_episode(problem, bundle, policy, episode)
            except ContextOverflowError:
                if not evict_from:
                    flags.append("episode_failed: context overflow with empty buffer")
                    break
                evict_from.pop(0)
                flags.append("context_overflow_evicted")
                bundle = assemble_prompt(
                    entries=evict_from,
                    task_text=task_text,
                    instruction=instruction,
                    task_kind=config.task,
                    layout=config.prompt_layout,
                    zero_rewards=config.zero_rewards,
                )
                continue
            except BackendError as exc:
                flags.append(f"episode_failed: {exc}")
                break
            break

        wall_ms = 0 if deterministic else int((time.monotonic() - started) * 1000)
        if outcome is None:
            logs.append(EpisodeLog(
                problem_id=problem.problem_id,
                episode=episode,
                method=config.method,
                instruction_kind=instruction.value,
                prompt=bundle.user_text,
                response="",
                rewards=[],
                total_reward=0.0,
                ground_truth=0.0 if config.task != "writing" else None,
                wall_ms=wall_ms,
                calls=0,
                flags=flags,
            ))
            continue

        buffer.push(AttemptRecord(
            episode_index=episode,
            response_text=outcome.response_text,
            rewards=outcome.rewards,
            total_reward=outcome.total_reward,
            outcome_note=outcome.outcome_note,
            task_header=outcome.task_header,
        ))
        logs.append(EpisodeLog(
            problem_id=problem.problem_id,
            episode=episode,
            method=config.method,
            instruction_kind=instruction.value,
            prompt=bundle.user_text,
            response=outcome.response_text,
            rewards=outcome.rewards,
            total_reward=outcome.total_reward,
            ground_truth=outcome.ground_truth,
            tokens_in=outcome.tokens_in,
            tokens_out=outcome.tokens_out,
            wall_ms=wall_ms,
            calls=outcome.calls,
            flags=flags + outcome.flags,
        ))
    return logs
