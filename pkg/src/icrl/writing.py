"""Creative writing task: prompt construction, format checks, coherence judging."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

from icrl.instructions import load_template


@dataclass(frozen=True)
class WritingProblem:
    end_sentences: tuple[str, str, str, str]
    problem_id: str

    def __post_init__(self) -> None:
        if len(self.end_sentences) != 4:
            raise ValueError(f"exactly 4 end sentences required, got {len(self.end_sentences)}")
        if any(not s.strip() for s in self.end_sentences):
            raise ValueError("end sentences must be nonempty")


def default_base_answer() -> str:
    """The reference passage every candidate is compared against."""
    return load_template("base_answer.txt")


def render_writing_task(problem: WritingProblem) -> str:
    """Task prompt with the four end sentences inlined on a single line."""
    sentences = " ".join(re.sub(r"\s+", " ", s.strip()) for s in problem.end_sentences)
    return load_template("writing_task.txt").replace("{sentences}", sentences)


def render_coherence_prompt(candidate: str, base_answer: str | None = None) -> str:
    """Pairwise coherence judge prompt (candidate rated 1-10 vs the base answer)."""
    if not candidate.strip():
        raise ValueError("candidate text must be nonempty")
    base = base_answer if base_answer is not None else default_base_answer()
    return (
        load_template("coherence_judge.txt")
        .replace("{base_answer}", base)
        .replace("{candidate}", candidate)
    )


_SCORE_RE = re.compile(r"Coherency score\s*:\s*(-?\d+)", re.IGNORECASE)


class CoherenceParseError(ValueError):
    """Judge output carries no usable coherency score."""


def parse_coherence_score(text: str) -> int:
    """Extract the last ``Coherency score: n`` match; accepts 1..10."""
    matches = _SCORE_RE.findall(text)
    if not matches:
        raise CoherenceParseError(f"no coherency score in judge output: {text[:80]!r}")
    score = int(matches[-1])
    if not 1 <= score <= 10:
        raise CoherenceParseError(f"coherency score {score} outside 1..10")
    return score


# ---------------------------------------------------------------------------
# Constraint checking (diagnostic only; never feeds rewards)
# ---------------------------------------------------------------------------

_TRAILING_JUNK = "\"'”’»)*_ \t"


def _normalize_ending(text: str) -> str:
    text = text.strip().rstrip(_TRAILING_JUNK)
    return text.replace("’", "'").replace("‘", "'")


@dataclass(frozen=True)
class ConstraintReport:
    has_plan: bool
    has_passage: bool
    paragraph_count: int
    end_sentence_ok: tuple[bool, bool, bool, bool]

    @property
    def paragraph_count_ok(self) -> bool:
        return self.paragraph_count == 4

    @property
    def all_ok(self) -> bool:
        return (self.has_plan and self.has_passage and self.paragraph_count_ok
                and all(self.end_sentence_ok))


def check_constraints(response: str, problem: WritingProblem) -> ConstraintReport:
    """Report format compliance: plan/passage sections, 4 paragraphs, endings."""
    plan_match = re.search(r"Plan\s*:", response)
    passage_match = re.search(r"Passage\s*:", response)
    has_plan = plan_match is not None
    has_passage = passage_match is not None

    passage = response[passage_match.end():] if passage_match else response
    paragraphs = [p.strip() for p in re.split(r"\n\s*\n", passage) if p.strip()]

    endings = []
    for index, sentence in enumerate(problem.end_sentences):
        want = _normalize_ending(sentence)
        if index < len(paragraphs):
            got = _normalize_ending(paragraphs[index])
            endings.append(got.endswith(want))
        else:
            endings.append(False)

    return ConstraintReport(
        has_plan=has_plan,
        has_passage=has_passage,
        paragraph_count=len(paragraphs),
        end_sentence_ok=tuple(endings),  # type: ignore[arg-type]
    )


def constraint_score(response: str, problem: WritingProblem) -> int:
    """Deterministic 1-10 format-compliance score (offline stand-in judge).

    Not the pairwise coherence judge: it only measures constraint adherence,
    which is enough to drive offline runs and tests.
    """
    report = check_constraints(response, problem)
    score = 1
    score += 1 if report.has_plan else 0
    score += 1 if report.has_passage else 0
    score += 3 if report.paragraph_count_ok else 0
    score += sum(1 for ok in report.end_sentence_ok if ok)
    return min(score, 10)


# ---------------------------------------------------------------------------
# Problem files and export for external pairwise evaluation
# ---------------------------------------------------------------------------


def load_problems(path: str) -> list[WritingProblem]:
    """Read a JSONL problem set: one record with 4 end sentences per line."""
    problems: list[WritingProblem] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            sentences = record.get("end_sentences")
            if not isinstance(sentences, list) or len(sentences) != 4:
                raise ValueError(f"{path}:{line_no}: record needs 4 end_sentences")
            problems.append(WritingProblem(
                end_sentences=tuple(sentences),
                problem_id=record.get("problem_id", f"w{len(problems):03d}"),
            ))
    return problems


def export_pairs(records: Sequence[tuple[WritingProblem, str]], path: str,
                 generator: str) -> None:
    """Write (instruction, output) pairs for an external pairwise evaluator."""
    payload = [
        {
            "instruction": render_writing_task(problem),
            "output": response,
            "generator": generator,
        }
        for problem, response in records
    ]
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2, sort_keys=True)
        handle.write("\n")
