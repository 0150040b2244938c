"""Comparison methods sharing the same backends and logging as the main loop.

CoT-only and Long-CoT are single-pass; Best-of-N draws independent samples
and selects by score; Self-Refine alternates verbal feedback and refinement
with full history in context; Reflexion keeps only the last few reflections.
Self-Refine and Reflexion prompts never contain a rendered scalar reward.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from icrl.config import RunConfig
from icrl.instructions import load_template
from icrl.loop import EpisodeLog
from icrl.prompting import PromptBundle
from icrl.tasks import (
    Backend,
    Problem,
    RewardReport,
    TextworldTask,
    WritingCoherenceJudge,
    make_task,
)

REFLECTION_WINDOW = 3
REFLECTION_MAX_CHARS = 2000


@dataclass
class ReflectionBuffer:
    """Reflections in arrival order; rendering shows at most ``window`` newest."""

    texts: list[str] = field(default_factory=list)
    window: int = REFLECTION_WINDOW

    def push(self, text: str) -> None:
        self.texts.append(sanitize_reflection(text))

    def render(self) -> str:
        start = max(0, len(self.texts) - self.window)
        blocks = [
            f"Reflection {start + offset + 1}:\n{text}"
            for offset, text in enumerate(self.texts[start:])
        ]
        return "\n\n".join(blocks)


def sanitize_reflection(text: str) -> str:
    """Whitespace normalization and length capping."""
    text = re.sub(r"[ \t]+", " ", text.strip())
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text[:REFLECTION_MAX_CHARS]


def _null_reward(problem, response_text, episode=0) -> RewardReport:
    return RewardReport(rewards=[])


def _eval_only_reward_fn(config: RunConfig, judge_backend: Backend | None):
    """Reward used for logging curves only, never rendered into prompts."""
    if config.task == "writing":
        return WritingCoherenceJudge(backend=judge_backend, settings=config.judge)
    return _null_reward


def _bundle(text: str) -> PromptBundle:
    return PromptBundle(user_text=text, system_text=None,
                        segment_spans={"task": (0, len(text))})


def _attempt(task, problem, prompt_text: str, policy: Backend, episode: int):
    if isinstance(task, TextworldTask):
        return task.rollout(problem, prompt_text, policy, episode)
    return task.run_episode(problem, _bundle(prompt_text), policy, episode)


def _log(problem, config, method, episode, prompt, outcome,
         flags: list[str] | None = None) -> EpisodeLog:
    return EpisodeLog(
        problem_id=problem.problem_id,
        episode=episode,
        method=method,
        instruction_kind="none",
        prompt=prompt,
        response=outcome.response_text,
        rewards=outcome.rewards,
        total_reward=outcome.total_reward,
        ground_truth=outcome.ground_truth,
        tokens_in=outcome.tokens_in,
        tokens_out=outcome.tokens_out,
        calls=outcome.calls,
        flags=(flags or []) + outcome.flags,
    )


# ---------------------------------------------------------------------------
# CoT-only / Long-CoT
# ---------------------------------------------------------------------------


def run_cot(problem: Problem, config: RunConfig, policy: Backend,
            long_variant: bool = False,
            judge_backend: Backend | None = None) -> EpisodeLog:
    """Single pass on the bare task description, optionally with long thinking."""
    task = make_task(config, reward_fn=_eval_only_reward_fn(config, judge_backend))
    prompt = task.task_text(problem)
    if long_variant:
        prompt = f"{prompt}\n\n{load_template('long_cot_suffix.txt')}"
    outcome = _attempt(task, problem, prompt, policy, episode=1)
    return _log(problem, config, "long_cot" if long_variant else "cot", 1, prompt, outcome)


# ---------------------------------------------------------------------------
# Best-of-N
# ---------------------------------------------------------------------------


@dataclass
class BestOfNSummary:
    logs: list[EpisodeLog]
    best_episode: int | None  # 1-based sample index
    best_response: str | None
    no_valid_candidate: bool


def run_best_of_n(problem: Problem, config: RunConfig, policy: Backend, n: int,
                  judge_backend: Backend | None = None) -> BestOfNSummary:
    """N context-independent samples; argmax score with earliest-sample tie-break.

    The selector is the ground-truth check for game24, the judge score for
    writing, and the episode return for textworld.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    task = make_task(config, reward_fn=_eval_only_reward_fn(config, judge_backend))
    prompt = task.task_text(problem)
    logs: list[EpisodeLog] = []
    scores: list[float] = []
    parse_failures = 0
    for sample in range(1, n + 1):
        outcome = _attempt(task, problem, prompt, policy, episode=sample)
        log = _log(problem, config, "best_of_n", sample, prompt, outcome)
        logs.append(log)
        if config.task == "game24":
            scores.append(outcome.ground_truth or 0.0)
            if _game24_parse_failed(outcome.response_text):
                parse_failures += 1
        elif config.task == "writing":
            scores.append(outcome.total_reward)
            if any(f.startswith("reward_parse_failure") for f in outcome.flags):
                parse_failures += 1
        else:
            scores.append(outcome.total_reward)

    no_valid = parse_failures == n and config.task in ("game24", "writing")
    best_index = max(range(n), key=lambda i: (scores[i], -i))
    return BestOfNSummary(
        logs=logs,
        best_episode=best_index + 1,
        best_response=logs[best_index].response,
        no_valid_candidate=no_valid,
    )


def _game24_parse_failed(response_text: str) -> bool:
    from icrl import game24

    try:
        game24.parse_solution(response_text)
    except game24.SolutionParseError:
        return True
    return False


# ---------------------------------------------------------------------------
# Self-Refine
# ---------------------------------------------------------------------------


def run_self_refine(problem: Problem, config: RunConfig, policy: Backend, k: int,
                    judge_backend: Backend | None = None) -> list[EpisodeLog]:
    """generate -> feedback -> refine cycles with the full history in context.

    No numeric rewards appear in any prompt; attempt k >= 2 costs two model
    calls (feedback + refine).
    """
    task = make_task(config, reward_fn=_eval_only_reward_fn(config, judge_backend))
    task_text = task.task_text(problem)
    feedback_template = load_template("self_refine_feedback.txt")
    refine_template = load_template("self_refine_refine.txt")

    logs: list[EpisodeLog] = []
    transcript = task_text
    for episode in range(1, k + 1):
        if episode == 1:
            prompt = transcript
            outcome = _attempt(task, problem, prompt, policy, episode)
        else:
            feedback_prompt = f"{transcript}\n\n{feedback_template}"
            feedback = policy.generate(_feedback_request(config, feedback_prompt, problem, episode))
            transcript = f"{feedback_prompt}\n\nFeedback {episode - 1}:\n{feedback.text.strip()}"
            prompt = f"{transcript}\n\n{refine_template}"
            outcome = _attempt(task, problem, prompt, policy, episode)
            outcome.tokens_in += feedback.tokens_in
            outcome.tokens_out += feedback.tokens_out
            outcome.calls += 1
        transcript = f"{transcript}\n\nResponse {episode}:\n{outcome.response_text.strip()}"
        logs.append(_log(problem, config, "self_refine", episode, prompt, outcome))
    return logs


def _feedback_request(config: RunConfig, prompt: str, problem, episode: int):
    from icrl.tasks import _policy_request

    return _policy_request(config, prompt, tags={
        "role": "feedback", "problem_id": problem.problem_id, "episode": str(episode),
    })


# ---------------------------------------------------------------------------
# Reflexion
# ---------------------------------------------------------------------------


def run_reflexion(problem: Problem, config: RunConfig, policy: Backend, k: int,
                  reward_fn=None, judge_backend: Backend | None = None) -> list[EpisodeLog]:
    """Attempt -> evaluate -> reflect; the next prompt holds task + reflections only.

    The attempt prompt never includes the reward signal nor previous
    responses; the reflection prompt does see the latest attempt and reward.
    """
    task = make_task(config, judge_backend=judge_backend, reward_fn=reward_fn)
    task_text = task.task_text(problem)
    reflect_template = load_template("reflexion_reflect.txt")
    reflections = ReflectionBuffer()

    logs: list[EpisodeLog] = []
    for episode in range(1, k + 1):
        rendered = reflections.render()
        prompt = task_text
        if rendered:
            prompt = f"{task_text}\n\nReflections on previous attempts:\n\n{rendered}"
        outcome = _attempt(task, problem, prompt, policy, episode)

        reward_text = ", ".join(f"{label}: {value:g}" for label, value in outcome.rewards)
        reflect_prompt = (
            reflect_template
            .replace("{task}", task_text)
            .replace("{attempt}", outcome.response_text)
            .replace("{reward}", reward_text or "none")
        )
        reflection = policy.generate(_reflection_request(config, reflect_prompt, problem, episode))
        reflections.push(reflection.text)
        outcome.tokens_in += reflection.tokens_in
        outcome.tokens_out += reflection.tokens_out
        outcome.calls += 1
        logs.append(_log(problem, config, "reflexion", episode, prompt, outcome))
    return logs


def _reflection_request(config: RunConfig, prompt: str, problem, episode: int):
    from icrl.tasks import _policy_request

    return _policy_request(config, prompt, tags={
        "role": "reflection", "problem_id": problem.problem_id, "episode": str(episode),
    })
