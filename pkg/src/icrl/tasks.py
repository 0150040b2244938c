"""Task adapters: per-task prompt text, episode execution, rewards, ground truth."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from icrl import game24, writing
from icrl.config import JudgeSettings, RunConfig
from icrl.game24 import Game24Problem
from icrl.instructions import load_template
from icrl.minilab.adapter import ExternalEnvClient
from icrl.minilab.world import (
    MiniLabEnv,
    Transition,
    load_world,
    render_task_text,
    trajectory_body,
)
from icrl.policy import GenRequest, GenResponse, RateLimiter
from icrl.prompting import PromptBundle
from icrl.writing import WritingProblem

GAME24_REWARD_LABELS = ("Step1", "Step2", "Step3", "Answer")


@dataclass(frozen=True)
class TextworldProblem:
    world: str  # shipped world name or spec file path
    problem_id: str


Problem = Game24Problem | WritingProblem | TextworldProblem


@dataclass
class EpisodeOutcome:
    response_text: str
    rewards: list[tuple[str, float]]
    total_reward: float
    ground_truth: float | None
    outcome_note: str | None = None
    task_header: str | None = None
    tokens_in: int = 0
    tokens_out: int = 0
    calls: int = 0
    flags: list[str] = field(default_factory=list)


class Backend(Protocol):
    def generate(self, request: GenRequest) -> GenResponse: ...


def _policy_request(config: RunConfig, prompt: str, tags: dict[str, str]) -> GenRequest:
    return GenRequest(
        user_text=prompt,
        temperature=config.policy.temperature,
        max_output_tokens=config.policy.max_output_tokens,
        backend_id="policy",
        tags=tags,
    )


def _judge_request(settings: JudgeSettings, prompt: str, tags: dict[str, str]) -> GenRequest:
    return GenRequest(
        user_text=prompt,
        temperature=settings.temperature,
        max_output_tokens=settings.max_output_tokens,
        backend_id="judge",
        tags=tags,
    )


# ---------------------------------------------------------------------------
# Reward functions (the observable reward r)
# ---------------------------------------------------------------------------


@dataclass
class RewardReport:
    rewards: list[tuple[str, float]]
    flags: list[str] = field(default_factory=list)
    tokens_in: int = 0
    tokens_out: int = 0
    calls: int = 0


class Game24StepJudge:
    """Scores each step line and the answer line on the 0-3 scale.

    With no backend the rule-based stand-in is used: 3 when 24 is still
    exactly reachable from the declared remaining numbers, else 0. Judge
    output that fails to parse is recorded as 0 with a diagnostic flag.
    """

    def __init__(self, backend: Backend | None = None,
                 settings: JudgeSettings | None = None) -> None:
        self.backend = backend
        self.settings = settings or JudgeSettings()

    def __call__(self, problem: Game24Problem, response_text: str,
                 episode: int = 0) -> RewardReport:
        zero = [(label, 0.0) for label in GAME24_REWARD_LABELS]
        try:
            solution = game24.parse_solution(response_text)
        except game24.SolutionParseError as exc:
            return RewardReport(rewards=zero, flags=[f"solution_parse_failure: {exc}"])

        positions = []
        for index, step in enumerate(solution.steps):
            positions.append((GAME24_REWARD_LABELS[index],
                              f"Step{index + 1}: {step.text}", step.remaining))
        final_remaining = solution.steps[-1].remaining
        positions.append(("Answer", f"**Answer**: {solution.answer_text}", final_remaining))

        report = RewardReport(rewards=[])
        for label, line, remaining in positions:
            if not remaining:
                report.rewards.append((label, 0.0))
                report.flags.append(f"reward_parse_failure:{label}: empty remaining")
                continue
            if self.backend is None:
                report.rewards.append((label, float(game24.oracle_step_score(remaining))))
                continue
            prompt = game24.render_step_judge_prompt(line, remaining)
            tags = {"role": "judge", "problem_id": problem.problem_id,
                    "episode": str(episode), "position": label}
            response = self.backend.generate(_judge_request(self.settings, prompt, tags))
            report.tokens_in += response.tokens_in
            report.tokens_out += response.tokens_out
            report.calls += 1
            try:
                score = game24.parse_judge_score(response.text)
            except game24.JudgeParseError as exc:
                report.rewards.append((label, 0.0))
                report.flags.append(f"reward_parse_failure:{label}: {exc}")
            else:
                report.rewards.append((label, float(score)))
        return report


class WritingCoherenceJudge:
    """Single pairwise coherence score (1-10 against a fixed base answer).

    With no backend the deterministic constraint score substitutes, which is
    a format-compliance heuristic rather than the pairwise judge.
    """

    def __init__(self, backend: Backend | None = None,
                 settings: JudgeSettings | None = None,
                 base_answer: str | None = None) -> None:
        self.backend = backend
        self.settings = settings or JudgeSettings()
        self.base_answer = base_answer if base_answer is not None else writing.default_base_answer()

    def __call__(self, problem: WritingProblem, response_text: str,
                 episode: int = 0) -> RewardReport:
        if not response_text.strip():
            return RewardReport(rewards=[("passage", 0.0)],
                                flags=["reward_parse_failure:passage: empty response"])
        if self.backend is None:
            score = writing.constraint_score(response_text, problem)
            return RewardReport(rewards=[("passage", float(score))])
        prompt = writing.render_coherence_prompt(response_text, self.base_answer)
        tags = {"role": "judge", "problem_id": problem.problem_id, "episode": str(episode)}
        response = self.backend.generate(_judge_request(self.settings, prompt, tags))
        report = RewardReport(rewards=[], tokens_in=response.tokens_in,
                              tokens_out=response.tokens_out, calls=1)
        try:
            score = writing.parse_coherence_score(response.text)
        except writing.CoherenceParseError as exc:
            report.rewards.append(("passage", 0.0))
            report.flags.append(f"reward_parse_failure:passage: {exc}")
        else:
            report.rewards.append(("passage", float(score)))
        return report


# ---------------------------------------------------------------------------
# Task adapters
# ---------------------------------------------------------------------------


class Game24Task:
    kind = "game24"

    def __init__(self, config: RunConfig, reward_fn=None) -> None:
        self.config = config
        self.reward_fn = reward_fn

    def task_text(self, problem: Game24Problem) -> str:
        numbers = " ".join(str(n) for n in problem.inputs)
        return load_template("game24_task.txt").replace("{numbers}", numbers)

    def task_header(self, problem: Game24Problem) -> str:
        return f"Input: {' '.join(str(n) for n in problem.inputs)}."

    def ground_truth(self, problem: Game24Problem, response_text: str) -> float:
        try:
            solution = game24.parse_solution(response_text)
        except game24.SolutionParseError:
            return 0.0
        return 1.0 if game24.verify_solution(solution, problem.inputs).is_valid24 else 0.0

    def run_episode(self, problem: Game24Problem, bundle: PromptBundle, policy: Backend,
                    episode: int) -> EpisodeOutcome:
        tags = {"role": "policy", "problem_id": problem.problem_id, "episode": str(episode)}
        response = policy.generate(_policy_request(self.config, bundle.user_text, tags))
        report = self.reward_fn(problem, response.text, episode)
        return EpisodeOutcome(
            response_text=response.text,
            rewards=report.rewards,
            total_reward=sum(v for _, v in report.rewards),
            ground_truth=self.ground_truth(problem, response.text),
            task_header=self.task_header(problem),
            tokens_in=response.tokens_in + report.tokens_in,
            tokens_out=response.tokens_out + report.tokens_out,
            calls=1 + report.calls,
            flags=list(report.flags),
        )


class WritingTask:
    kind = "writing"

    def __init__(self, config: RunConfig, reward_fn=None) -> None:
        self.config = config
        self.reward_fn = reward_fn

    def task_text(self, problem: WritingProblem) -> str:
        return writing.render_writing_task(problem)

    def task_header(self, problem: WritingProblem) -> None:
        return None

    def ground_truth(self, problem: WritingProblem, response_text: str) -> None:
        return None  # pairwise win rates come from an external evaluator

    def run_episode(self, problem: WritingProblem, bundle: PromptBundle, policy: Backend,
                    episode: int) -> EpisodeOutcome:
        tags = {"role": "policy", "problem_id": problem.problem_id, "episode": str(episode)}
        response = policy.generate(_policy_request(self.config, bundle.user_text, tags))
        report = self.reward_fn(problem, response.text, episode)
        return EpisodeOutcome(
            response_text=response.text,
            rewards=report.rewards,
            total_reward=sum(v for _, v in report.rewards),
            ground_truth=None,
            tokens_in=response.tokens_in + report.tokens_in,
            tokens_out=response.tokens_out + report.tokens_out,
            calls=1 + report.calls,
            flags=list(report.flags),
        )


_ACTION_PREFIX_RE = re.compile(r"^(?:->|>|Action\s*:)\s*", re.IGNORECASE)

MAX_EXTERNAL_STEPS = 1000


def extract_action(response_text: str) -> str:
    """First non-empty line, stripped of prompt-echo prefixes and quoting."""
    for line in response_text.splitlines():
        line = line.strip().strip("`")
        line = _ACTION_PREFIX_RE.sub("", line).strip()
        if line:
            return line.rstrip(".")
    return ""


class TextworldTask:
    kind = "textworld"

    def __init__(self, config: RunConfig, reward_fn=None) -> None:
        self.config = config
        self.reward_fn = reward_fn  # unused: the environment provides rewards

    def _make_env(self, problem: TextworldProblem):
        if self.config.env_command:
            return ExternalEnvClient(self.config.env_command)
        return MiniLabEnv(load_world(problem.world))

    def task_text(self, problem: TextworldProblem) -> str:
        if self.config.env_command:
            raise ValueError("external environments must supply a task text via config")
        return render_task_text(load_world(problem.world))

    def task_header(self, problem: TextworldProblem) -> None:
        return None

    def rollout(self, problem: TextworldProblem, context_text: str, policy: Backend,
                episode: int) -> EpisodeOutcome:
        """One environment episode: prompt per action, transcript accumulates."""
        env = self._make_env(problem)
        transitions: list[Transition] = []
        tokens_in = tokens_out = calls = 0
        flags: list[str] = []
        done = False
        try:
            while not done and len(transitions) < MAX_EXTERNAL_STEPS:
                partial = "\n".join(
                    f"{'' if i == 0 else '-> '}{t.action} -> Observation: {t.observation} "
                    f"(reward={t.reward})"
                    for i, t in enumerate(transitions)
                )
                prompt = f"{context_text}\n\nCurrent attempt:\n"
                if partial:
                    prompt += partial + "\n"
                prompt += "Next action:"
                tags = {"role": "policy", "problem_id": problem.problem_id,
                        "episode": str(episode), "step": str(len(transitions) + 1)}
                response = policy.generate(_policy_request(self.config, prompt, tags))
                tokens_in += response.tokens_in
                tokens_out += response.tokens_out
                calls += 1
                action = extract_action(response.text)
                observation, reward, done, total = env.step(action or "wait")
                transitions.append(Transition(action=action or "wait",
                                              observation=observation, reward=reward))
            if not done:
                flags.append("rollout_aborted: step bound reached")
            terminal = env.terminal_line() if done else "Task aborted."
            total = env.total
        finally:
            close = getattr(env, "close", None)
            if close is not None:
                close()

        body = trajectory_body(transitions, terminal, total)
        rewards = [(t.action, float(t.reward)) for t in transitions if t.reward > 0]
        rewards.append(("terminal", 0.0))
        return EpisodeOutcome(
            response_text=body,
            rewards=rewards,
            total_reward=float(total),
            ground_truth=float(total),
            outcome_note=terminal,
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            calls=calls,
            flags=flags,
        )

    def run_episode(self, problem: TextworldProblem, bundle: PromptBundle, policy: Backend,
                    episode: int) -> EpisodeOutcome:
        return self.rollout(problem, bundle.user_text, policy, episode)


def make_task(config: RunConfig, judge_backend: Backend | None = None,
              reward_fn=None):
    """Build the task adapter for ``config.task`` with its reward function."""
    if config.task == "game24":
        if reward_fn is None:
            reward_fn = Game24StepJudge(backend=judge_backend, settings=config.judge)
        return Game24Task(config, reward_fn)
    if config.task == "writing":
        if reward_fn is None:
            reward_fn = WritingCoherenceJudge(backend=judge_backend, settings=config.judge)
        return WritingTask(config, reward_fn)
    if config.task == "textworld":
        return TextworldTask(config, reward_fn)
    raise ValueError(f"unknown task {config.task!r}")


def make_judge_backend(config: RunConfig):
    """Instantiate the judge backend named by the config (None for rule-based)."""
    settings = config.judge
    if settings.backend in ("oracle", "constraint"):
        return None
    if settings.backend == "scripted":
        from icrl.policy import ScriptedPolicy

        if not settings.script_path:
            raise ValueError("scripted judge needs judge.script_path")
        return ScriptedPolicy.from_file(settings.script_path)
    if settings.backend == "http":
        from icrl.policy import HttpChatBackend

        return HttpChatBackend(
            base_url=settings.base_url,
            model=settings.model,
            api_key_env=settings.api_key_env,
            timeout_s=settings.timeout_s,
            max_retries=settings.max_retries,
            rate_limiter=RateLimiter(settings.requests_per_minute),
        )
    raise ValueError(f"unknown judge backend {settings.backend!r}")


def make_policy_backend(config: RunConfig):
    settings = config.policy
    if settings.backend == "scripted":
        from icrl.policy import ScriptedPolicy

        if not settings.script_path:
            raise ValueError("scripted policy needs policy.script_path")
        return ScriptedPolicy.from_file(settings.script_path)
    if settings.backend == "http":
        from icrl.policy import HttpChatBackend

        return HttpChatBackend(
            base_url=settings.base_url,
            model=settings.model,
            api_key_env=settings.api_key_env,
            timeout_s=settings.timeout_s,
            max_retries=settings.max_retries,
            rate_limiter=RateLimiter(settings.requests_per_minute),
        )
    raise ValueError(f"unknown policy backend {settings.backend!r}")


def load_problems(config: RunConfig) -> list[Problem]:
    """Load the run's problem list from the config's problem source."""
    if config.task == "game24":
        if not config.problems:
            raise ValueError("game24 runs need a problems file (4 integers per line)")
        return list(game24.load_problems(config.problems))
    if config.task == "writing":
        if not config.problems:
            raise ValueError("writing runs need a JSONL problems file")
        return list(writing.load_problems(config.problems))
    if config.problems:
        worlds = []
        with open(config.problems, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line and not line.startswith("#"):
                    worlds.append(line)
        return [TextworldProblem(world=w, problem_id=f"t{i:03d}") for i, w in enumerate(worlds)]
    if config.world:
        return [TextworldProblem(world=config.world, problem_id="t000")]
    raise ValueError("textworld runs need a world or a problems file")
