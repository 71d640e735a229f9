import pytest

from ahdd.synthetic import SyntheticSpec, generate_synthetic

SMALL_SPEC = SyntheticSpec(num_codes=6, branching=3, train_docs=60, dev_docs=20, test_docs=20,
                           note_length=30, signal_fraction=0.2, vocab_size=200, seed=7)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A small generated corpus directory shared by the slower tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    generate_synthetic(SMALL_SPEC, out)
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for the terminal summary."""

    def record(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
