from pathlib import Path

import pytest

from fsj import build_class_table, check_program, parse_program

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
GOLDEN = ROOT / "tests" / "golden"


def load_corpus_file(name: str):
    """Parse and table one corpus program, asserting it checks."""
    program = parse_program((CORPUS / name).read_text())
    ct = build_class_table(program)
    report = check_program(ct, program)
    assert report.ok, f"{name}: {report.errors}"
    return ct, program


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


def run_cli(argv, capsys):
    """Invoke the CLI in-process and return (exit_code, stdout, stderr)."""
    from fsj.cli import main

    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err
