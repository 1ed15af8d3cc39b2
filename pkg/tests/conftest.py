import json

import pytest

from summarank.candidates import Candidate, CandidateExample, Dataset
from summarank.metrics import default_registry

_acceptance_lines = []


def record_acceptance(line):
    """Collect acceptance-criterion verdicts for the terminal summary."""
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.line(line)


def make_candidate(text="a b c", method="beam", scores=None, features=None):
    return Candidate(
        text=text,
        method=method,
        scores=dict(scores or {}),
        features=tuple(features) if features is not None else None,
        empty=not text.strip(),
    )


def make_example(example_id="ex0", source="the quick brown fox", reference="the fox", candidates=()):
    return CandidateExample(
        id=example_id,
        source=source,
        reference=reference,
        candidates=tuple(candidates),
    )


def make_dataset(examples, registry=None, methods=("beam", "dbs", "topk", "topp")):
    return Dataset(
        examples=tuple(examples),
        registry=registry or default_registry(),
        methods=tuple(methods),
    )


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def registry():
    return default_registry()
