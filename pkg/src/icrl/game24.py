"""Game of 24: solution grammar, exact verification, and solvability search.

All arithmetic is exact over ``fractions.Fraction``. Float comparison against
24 is unsound for division chains (e.g. 8 / (3 - 8/3) on inputs 3 3 8 8), so
no tolerance appears anywhere in this module.
"""

from __future__ import annotations

import itertools
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from icrl.instructions import load_template

TARGET = Fraction(24)
OPS = ("+", "-", "*", "/")

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}

# Unicode operator spellings occasionally emitted by models / shown in rubrics.
_OP_NORMALIZATION = {
    "×": "*",  # ×
    "÷": "/",  # ÷
    "−": "-",  # minus sign
    "–": "-",  # en dash
    "—": "-",  # em dash
}


class SolutionParseError(ValueError):
    """Response text does not contain a readable 3-step solution."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    """Binary arithmetic expression tree; leaves are exact rationals."""

    op: str | None = None
    value: Fraction | None = None
    left: "Expr | None" = None
    right: "Expr | None" = None

    @staticmethod
    def leaf(value: Fraction | int) -> "Expr":
        return Expr(value=Fraction(value))

    @staticmethod
    def node(op: str, left: "Expr", right: "Expr") -> "Expr":
        if op not in OPS:
            raise ValueError(f"unknown operator {op!r}")
        return Expr(op=op, left=left, right=right)

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def evaluate(self) -> Fraction:
        """Exact value; raises ZeroDivisionError (never returns infinities)."""
        if self.is_leaf:
            assert self.value is not None
            return self.value
        assert self.left is not None and self.right is not None
        return _apply(self.op, self.left.evaluate(), self.right.evaluate())

    def leaves(self) -> list[Fraction]:
        if self.is_leaf:
            assert self.value is not None
            return [self.value]
        assert self.left is not None and self.right is not None
        return self.left.leaves() + self.right.leaves()

    def __str__(self) -> str:
        if self.is_leaf:
            return format_number(self.value)
        assert self.left is not None and self.right is not None
        left = str(self.left)
        right = str(self.right)
        if not self.left.is_leaf and _PREC[self.left.op] < _PREC[self.op]:
            left = f"({left})"
        if not self.right.is_leaf and (
            _PREC[self.right.op] < _PREC[self.op]
            or (_PREC[self.right.op] == _PREC[self.op] and self.op in ("-", "/"))
        ):
            right = f"({right})"
        return f"{left} {self.op} {right}"


def _apply(op: str, a: Fraction, b: Fraction) -> Fraction:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        raise ZeroDivisionError("division by zero")
    return a / b


def format_number(value: Fraction | None) -> str:
    """Canonical text form: integer when integral, else ``p/q``."""
    assert value is not None
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def parse_number(token: str) -> Fraction:
    """Parse an integer, decimal, or tight ``p/q`` literal exactly."""
    token = token.strip()
    if not re.fullmatch(r"-?\d+(?:\.\d+)?(?:/\d+(?:\.\d+)?)?", token):
        raise SolutionParseError(f"not a number: {token!r}")
    return Fraction(token)


# ---------------------------------------------------------------------------
# Expression parsing (for answer lines)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(\d+(?:\.\d+)?|[-+*/()])")


def _tokenize(text: str) -> list[str]:
    for raw, repl in _OP_NORMALIZATION.items():
        text = text.replace(raw, repl)
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise SolutionParseError(f"unexpected character in expression: {text[pos:]!r}")
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


def parse_expression(text: str) -> Expr:
    """Parse an infix arithmetic expression over + - * / with parentheses."""
    tokens = _tokenize(text)
    if not tokens:
        raise SolutionParseError("empty expression")
    pos = 0

    def peek() -> str | None:
        return tokens[pos] if pos < len(tokens) else None

    def take() -> str:
        nonlocal pos
        token = tokens[pos]
        pos += 1
        return token

    def parse_factor() -> Expr:
        token = peek()
        if token is None:
            raise SolutionParseError("expression ended unexpectedly")
        if token == "(":
            take()
            node = parse_sum()
            if peek() != ")":
                raise SolutionParseError("missing closing parenthesis")
            take()
            return node
        if token == "-":
            take()
            inner = parse_factor()
            return Expr.node("-", Expr.leaf(0), inner)
        take()
        try:
            return Expr.leaf(Fraction(token))
        except ValueError as exc:
            raise SolutionParseError(f"expected a number, got {token!r}") from exc

    def parse_term() -> Expr:
        node = parse_factor()
        while peek() in ("*", "/"):
            node = Expr.node(take(), node, parse_factor())
        return node

    def parse_sum() -> Expr:
        node = parse_term()
        while peek() in ("+", "-"):
            node = Expr.node(take(), node, parse_term())
        return node

    expr = parse_sum()
    if pos != len(tokens):
        raise SolutionParseError(f"trailing tokens in expression: {tokens[pos:]}")
    return expr


# ---------------------------------------------------------------------------
# Solution grammar
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Game24Step:
    lhs: Fraction
    op: str
    rhs: Fraction
    result: Fraction
    remaining: tuple[Fraction, ...]
    text: str  # normalized body, e.g. "13 - 10 = 3 (left: 3 4 9)"


@dataclass(frozen=True)
class Game24Solution:
    steps: tuple[Game24Step, Game24Step, Game24Step]
    answer: Expr
    answer_text: str  # as written, e.g. "(13 - (10 - 4)) * 9 = 63"


@dataclass(frozen=True)
class Game24Problem:
    inputs: tuple[int, int, int, int]
    problem_id: str

    def __post_init__(self) -> None:
        if len(self.inputs) != 4:
            raise ValueError(f"a problem has exactly 4 numbers, got {self.inputs}")


_STEP_BODY_RE = re.compile(
    r"""
    \s*(?P<lhs>-?\d+(?:\.\d+)?)
    \s*(?P<op>[-+*/])
    \s*(?P<rhs>-?\d+(?:\.\d+)?)
    \s*=\s*(?P<result>-?\d+(?:\.\d+)?(?:/\d+(?:\.\d+)?)?)
    \s*\(\s*left\s*:?\s*(?P<left>[^)]*)\)
    """,
    re.VERBOSE,
)

# Fallback for tight fraction operands like "8/3 * 3 = 8 (left: 8 8)".
_STEP_BODY_FRACTION_RE = re.compile(
    r"""
    \s*(?P<lhs>-?\d+(?:\.\d+)?(?:/\d+(?:\.\d+)?)?)
    \s+(?P<op>[-+*/])
    \s+(?P<rhs>-?\d+(?:\.\d+)?(?:/\d+(?:\.\d+)?)?)
    \s*=\s*(?P<result>-?\d+(?:\.\d+)?(?:/\d+(?:\.\d+)?)?)
    \s*\(\s*left\s*:?\s*(?P<left>[^)]*)\)
    """,
    re.VERBOSE,
)

_ANSWER_MARK_RE = re.compile(r"\*{0,2}Answer\*{0,2}\s*:")


def _normalize_ops(text: str) -> str:
    for raw, repl in _OP_NORMALIZATION.items():
        text = text.replace(raw, repl)
    return text


def _parse_left_list(text: str) -> tuple[Fraction, ...]:
    tokens = [t for t in re.split(r"[\s,]+", text.strip()) if t]
    return tuple(parse_number(t) for t in tokens)


def _parse_step(segment: str, index: int) -> Game24Step:
    segment = _normalize_ops(segment)
    match = _STEP_BODY_RE.match(segment) or _STEP_BODY_FRACTION_RE.match(segment)
    if match is None:
        raise SolutionParseError(f"malformed Step{index} line: {segment.strip()[:80]!r}")
    lhs = parse_number(match.group("lhs"))
    rhs = parse_number(match.group("rhs"))
    result = parse_number(match.group("result"))
    remaining = _parse_left_list(match.group("left"))
    op = match.group("op")
    text = (
        f"{format_number(lhs)} {op} {format_number(rhs)} = {format_number(result)} "
        f"(left: {' '.join(format_number(v) for v in remaining)})"
    )
    return Game24Step(lhs=lhs, op=op, rhs=rhs, result=result, remaining=remaining, text=text)


def _solution_region(text: str) -> str:
    """Slice out the region holding the final solution.

    Tolerates the ``<answer>...</answer>`` wrapper and long thinking traces:
    the last ``<answer>`` block wins, else text after the last ``</think>``,
    else the whole response.
    """
    lowered = text.lower()
    start = lowered.rfind("<answer>")
    if start >= 0:
        end = lowered.find("</answer>", start)
        return text[start + len("<answer>"):end if end >= 0 else len(text)]
    think_end = lowered.rfind("</think>")
    if think_end >= 0:
        return text[think_end + len("</think>"):]
    return text


def parse_solution(text: str) -> Game24Solution:
    """Extract Step1-Step3 and the final answer expression from a response.

    Raises SolutionParseError naming the missing or malformed part.
    """
    region = _solution_region(text)

    marks: list[tuple[int, int]] = []  # (start, end) of each StepN: label
    cursor = 0
    for index in (1, 2, 3):
        pattern = re.compile(rf"\*{{0,2}}Step\s*{index}\*{{0,2}}\s*:", re.IGNORECASE)
        match = pattern.search(region, cursor)
        if match is None and index == 1:
            # Retries may restate Step1 several times; anchor on the last one.
            for probe in pattern.finditer(region):
                match = probe
        if match is None:
            raise SolutionParseError(f"missing Step{index} in response")
        marks.append((match.start(), match.end()))
        cursor = match.end()

    answer_match = None
    for probe in _ANSWER_MARK_RE.finditer(region, cursor):
        answer_match = probe
    if answer_match is None:
        raise SolutionParseError("missing Answer line in response")

    segments = [
        region[marks[0][1]:marks[1][0]],
        region[marks[1][1]:marks[2][0]],
        region[marks[2][1]:answer_match.start()],
    ]
    steps = tuple(_parse_step(segment, i + 1) for i, segment in enumerate(segments))

    answer_raw = region[answer_match.end():]
    answer_raw = answer_raw.split("</answer>")[0]
    answer_raw = answer_raw.strip().splitlines()[0].strip() if answer_raw.strip() else ""
    if not answer_raw:
        raise SolutionParseError("empty Answer line")
    answer_text = re.sub(r"\s+", " ", _normalize_ops(answer_raw)).strip()
    expr_text = answer_text.split("=")[0].strip()
    answer = parse_expression(expr_text)
    return Game24Solution(steps=steps, answer=answer, answer_text=answer_text)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Verification (the ground-truth reward)
# ---------------------------------------------------------------------------

VALID24 = "valid24"
VALID_BUT_NOT_24 = "valid_but_not_24"
INVALID = "invalid"


@dataclass(frozen=True)
class VerifyResult:
    status: str
    reason: str | None = None
    value: Fraction | None = None

    @property
    def is_valid24(self) -> bool:
        return self.status == VALID24

    def __str__(self) -> str:
        if self.status == INVALID:
            return f"invalid ({self.reason})"
        if self.status == VALID_BUT_NOT_24:
            return f"valid_but_not_24 (value {format_number(self.value)})"
        return self.status


def _multiset(values: Iterable[Fraction]) -> Counter:
    return Counter(Fraction(v) for v in values)


def verify_solution(solution: Game24Solution, inputs: Sequence[int]) -> VerifyResult:
    """Exact check of a parsed solution against the input multiset.

    valid24 requires: the answer expression uses exactly the input numbers,
    evaluates to exactly 24, and every step is arithmetically correct with a
    consistent remaining multiset. Steps that are correct but whose answer
    misses 24 yield valid_but_not_24.
    """
    input_counter = _multiset(Fraction(n) for n in inputs)

    if _multiset(solution.answer.leaves()) != input_counter:
        return VerifyResult(INVALID, reason="answer does not use each input number exactly once")

    remaining = input_counter.copy()
    for index, step in enumerate(solution.steps, start=1):
        pool = remaining.copy()
        for operand in (step.lhs, step.rhs):
            if pool[operand] <= 0:
                return VerifyResult(
                    INVALID, reason=f"Step{index} operand {format_number(operand)} not available"
                )
            pool[operand] -= 1
        try:
            computed = _apply(step.op, step.lhs, step.rhs)
        except ZeroDivisionError:
            return VerifyResult(INVALID, reason="div_zero")
        if computed != step.result:
            return VerifyResult(
                INVALID,
                reason=(
                    f"Step{index} arithmetic: {format_number(step.lhs)} {step.op} "
                    f"{format_number(step.rhs)} is {format_number(computed)}, "
                    f"not {format_number(step.result)}"
                ),
            )
        pool[computed] += 1
        pool = +pool
        if _multiset(step.remaining) != pool:
            return VerifyResult(INVALID, reason=f"Step{index} remaining numbers inconsistent")
        remaining = pool

    if len(solution.steps[-1].remaining) != 1:
        return VerifyResult(INVALID, reason="final remaining multiset must have size 1")

    try:
        value = solution.answer.evaluate()
    except ZeroDivisionError:
        return VerifyResult(INVALID, reason="div_zero")
    if value == TARGET:
        return VerifyResult(VALID24, value=value)
    return VerifyResult(VALID_BUT_NOT_24, value=value)


# ---------------------------------------------------------------------------
# Exhaustive solvability oracle
# ---------------------------------------------------------------------------

# All five binary tree shapes over four leaves, as (value-combiner, expr-builder)
# pairs indexed identically. Combiners fail fast via ZeroDivisionError.


def _shape_values(a: Fraction, b: Fraction, c: Fraction, d: Fraction,
                  o1: str, o2: str, o3: str) -> Iterable[tuple[int, Fraction]]:
    try:
        yield 0, _apply(o3, _apply(o2, _apply(o1, a, b), c), d)   # ((a b) c) d
    except ZeroDivisionError:
        pass
    try:
        yield 1, _apply(o3, _apply(o1, a, _apply(o2, b, c)), d)   # (a (b c)) d
    except ZeroDivisionError:
        pass
    try:
        yield 2, _apply(o2, _apply(o1, a, b), _apply(o3, c, d))   # (a b) (c d)
    except ZeroDivisionError:
        pass
    try:
        yield 3, _apply(o1, a, _apply(o3, _apply(o2, b, c), d))   # a ((b c) d)
    except ZeroDivisionError:
        pass
    try:
        yield 4, _apply(o1, a, _apply(o2, b, _apply(o3, c, d)))   # a (b (c d))
    except ZeroDivisionError:
        pass


def _shape_expr(shape: int, a: Expr, b: Expr, c: Expr, d: Expr,
                o1: str, o2: str, o3: str) -> Expr:
    n = Expr.node
    if shape == 0:
        return n(o3, n(o2, n(o1, a, b), c), d)
    if shape == 1:
        return n(o3, n(o1, a, n(o2, b, c)), d)
    if shape == 2:
        return n(o2, n(o1, a, b), n(o3, c, d))
    if shape == 3:
        return n(o1, a, n(o3, n(o2, b, c), d))
    return n(o1, a, n(o2, b, n(o3, c, d)))


def solvable_oracle(inputs: Sequence[int | Fraction]) -> tuple[bool, Expr | None]:
    """Exhaustively decide whether 24 is reachable from the four inputs.

    Enumerates every binary tree shape, deduplicated leaf ordering, and
    operator assignment under exact arithmetic; division-by-zero branches are
    skipped. Returns a witness expression on success.
    """
    if len(inputs) != 4:
        raise ValueError(f"expected 4 inputs, got {len(inputs)}")
    values = tuple(Fraction(v) for v in inputs)
    for perm in sorted(set(itertools.permutations(values))):
        a, b, c, d = perm
        for o1, o2, o3 in itertools.product(OPS, repeat=3):
            for shape, value in _shape_values(a, b, c, d, o1, o2, o3):
                if value == TARGET:
                    leaves = tuple(Expr.leaf(v) for v in perm)
                    return True, _shape_expr(shape, *leaves, o1, o2, o3)
    return False, None


def reachable_24(values: Sequence[Fraction | int]) -> bool:
    """Whether 24 is reachable from 1-4 numbers by pairwise combination."""
    return _reachable(tuple(sorted(Fraction(v) for v in values)), {})


def _reachable(values: tuple[Fraction, ...], memo: dict) -> bool:
    if values in memo:
        return memo[values]
    if len(values) == 1:
        result = values[0] == TARGET
    else:
        result = False
        for i, j in itertools.combinations(range(len(values)), 2):
            rest = tuple(v for k, v in enumerate(values) if k not in (i, j))
            a, b = values[i], values[j]
            candidates = {a + b, a - b, b - a, a * b}
            if b != 0:
                candidates.add(a / b)
            if a != 0:
                candidates.add(b / a)
            for combined in candidates:
                if _reachable(tuple(sorted(rest + (combined,))), memo):
                    result = True
                    break
            if result:
                break
    memo[values] = result
    return result


def solution_from_expression(expr: Expr) -> Game24Solution:
    """Rebuild the canonical 3-step solution that evaluates ``expr``."""
    steps: list[Game24Step] = []
    remaining: list[Fraction] = expr.leaves()

    def walk(node: Expr) -> Fraction:
        if node.is_leaf:
            assert node.value is not None
            return node.value
        assert node.left is not None and node.right is not None
        lhs = walk(node.left)
        rhs = walk(node.right)
        result = _apply(node.op, lhs, rhs)
        remaining.remove(lhs)
        remaining.remove(rhs)
        remaining.append(result)
        ordered = tuple(sorted(remaining))
        text = (
            f"{format_number(lhs)} {node.op} {format_number(rhs)} = {format_number(result)} "
            f"(left: {' '.join(format_number(v) for v in ordered)})"
        )
        steps.append(Game24Step(lhs=lhs, op=node.op, rhs=rhs, result=result,
                                remaining=ordered, text=text))
        return result

    value = walk(expr)
    if len(steps) != 3:
        raise ValueError(f"expression must combine 4 leaves in 3 steps, got {len(steps)}")
    answer_text = f"{expr} = {format_number(value)}"
    return Game24Solution(steps=tuple(steps), answer=expr, answer_text=answer_text)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Step judge (the observable reward)
# ---------------------------------------------------------------------------

JUDGE_SCORE_RANGE = (0, 3)

_JUDGE_ANSWER_RE = re.compile(r"\*{0,2}Answer\*{0,2}\s*:\s*(-?\d+)")


class JudgeParseError(ValueError):
    """Judge output carries no usable integer score."""


def render_step_judge_prompt(step_or_answer: str, remaining: Sequence[Fraction | int]) -> str:
    """Fill the per-step judge prompt with the step (or answer) line."""
    if not remaining:
        raise ValueError("remaining numbers must be nonempty")
    return load_template("game24_judge.txt").replace("{step}", step_or_answer)


def parse_judge_score(text: str) -> int:
    """Extract the last ``**Answer**: n`` score; accepts 0..3."""
    matches = _JUDGE_ANSWER_RE.findall(text)
    if not matches:
        raise JudgeParseError(f"no Answer score in judge output: {text[:80]!r}")
    score = int(matches[-1])
    low, high = JUDGE_SCORE_RANGE
    if not low <= score <= high:
        raise JudgeParseError(f"judge score {score} outside {low}..{high}")
    return score


def oracle_step_score(remaining: Sequence[Fraction | int]) -> int:
    """Rule-based stand-in for the LLM step judge: 3 iff 24 stays reachable."""
    if not remaining:
        raise ValueError("remaining numbers must be nonempty")
    return 3 if reachable_24(remaining) else 0


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------


def load_problems(path: str) -> list[Game24Problem]:
    """Read a problem set: one line of 4 space-separated integers each."""
    problems: list[Game24Problem] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no}: expected 4 numbers, got {line!r}")
            numbers = tuple(int(p) for p in parts)
            problems.append(Game24Problem(inputs=numbers, problem_id=f"p{len(problems):03d}"))
    return problems
