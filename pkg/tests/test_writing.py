from __future__ import annotations

import json

import pytest

from icrl.writing import (
    CoherenceParseError,
    WritingProblem,
    check_constraints,
    constraint_score,
    default_base_answer,
    export_pairs,
    load_problems,
    parse_coherence_score,
    render_coherence_prompt,
    render_writing_task,
)

FIGURE_SENTENCES = (
    "For some unfathomable reason, the response team didn't consider a lack of milk "
    "for my cereal as a proper emergency.",
    "You realize you're not alone as you sit in your bedroom massaging your calves "
    "after a long day of playing tug-of-war with Grandpa Joe in the hospital.",
    "He poured rocks in the dungeon of his mind.",
    "I'm a living furnace.",
)


@pytest.fixture
def problem() -> WritingProblem:
    return WritingProblem(end_sentences=FIGURE_SENTENCES, problem_id="w000")


def test_task_prompt_matches_published_wording(problem):
    text = render_writing_task(problem)
    assert text.startswith("Prompt: Write a coherent passage of 4 short paragraphs. "
                           "The end sentence of each paragraph must be: ")
    for sentence in FIGURE_SENTENCES:
        assert sentence in text
    assert text.endswith("Make a plan then write. Your output should be of the "
                         "following format: Plan: Your plan here. Passage: Your passage here.")
    assert "\n" not in text


def test_task_prompt_normalizes_newlines():
    problem = WritingProblem(
        end_sentences=("One.", "Two\nwith break.", "Three.", "Four."), problem_id="w")
    assert "Two with break." in render_writing_task(problem)


def test_problem_requires_four_sentences():
    with pytest.raises(ValueError):
        WritingProblem(end_sentences=("a", "b", "c"), problem_id="w")  # type: ignore[arg-type]


def test_coherence_prompt_contains_base_answer(problem):
    prompt = render_coherence_prompt("candidate text")
    assert default_base_answer() in prompt
    assert "TEXT: candidate text" in prompt
    assert prompt.startswith("Instruction: You are a seasoned text coherence evaluator.")
    assert "Coherency score: <integer 1-10>." in prompt


def test_coherence_prompt_rejects_empty_candidate():
    with pytest.raises(ValueError):
        render_coherence_prompt("   ")


def test_coherence_prompt_injective_in_candidate():
    assert render_coherence_prompt("a") != render_coherence_prompt("b")


def test_candidate_equal_to_base_is_a_valid_prompt():
    prompt = render_coherence_prompt(default_base_answer())
    assert prompt.count(default_base_answer()) == 2


def test_parse_coherence_score():
    assert parse_coherence_score("Coherency score: 7") == 7
    assert parse_coherence_score("some: 4 ... Coherency score: 8") == 8
    with pytest.raises(CoherenceParseError):
        parse_coherence_score("score: seven")
    with pytest.raises(CoherenceParseError):
        parse_coherence_score("Coherency score: 11")


def _passage(problem: WritingProblem, endings=None) -> str:
    endings = endings or problem.end_sentences
    paragraphs = [f"Paragraph {i + 1} builds the story. {end}" for i, end in enumerate(endings)]
    return "Plan: weave the four sentences.\nPassage:\n" + "\n\n".join(paragraphs)


def test_constraints_compliant_passage(problem):
    report = check_constraints(_passage(problem), problem)
    assert report.all_ok
    assert report.paragraph_count == 4


def test_constraints_three_paragraphs(problem):
    text = "Plan: p.\nPassage:\n" + "\n\n".join(
        f"Para. {s}" for s in problem.end_sentences[:3]
    )
    report = check_constraints(text, problem)
    assert not report.paragraph_count_ok
    assert report.paragraph_count == 3


def test_constraints_trailing_quote_and_apostrophe_normalization(problem):
    curly = problem.end_sentences[0].replace("didn't", "didn’t") + "”"
    endings = (curly,) + problem.end_sentences[1:]
    report = check_constraints(_passage(problem, endings), problem)
    assert report.end_sentence_ok[0]


def test_constraint_score_monotone(problem):
    assert constraint_score(_passage(problem), problem) == 10
    assert constraint_score("nothing useful", problem) == 1


def test_export_pairs_and_load_problems(tmp_path, problem):
    problems_path = tmp_path / "problems.jsonl"
    problems_path.write_text(json.dumps({
        "problem_id": "w000", "end_sentences": list(FIGURE_SENTENCES),
    }) + "\n", encoding="utf-8")
    loaded = load_problems(str(problems_path))
    assert loaded == [problem]

    pairs_path = tmp_path / "pairs.json"
    export_pairs([(problem, "final response")], str(pairs_path), generator="final-episode")
    payload = json.loads(pairs_path.read_text(encoding="utf-8"))
    assert payload[0]["output"] == "final response"
    assert payload[0]["instruction"] == render_writing_task(problem)
    assert payload[0]["generator"] == "final-episode"
