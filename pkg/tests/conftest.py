from pathlib import Path

import pytest

SUMMARY = Path(__file__).resolve().parent.parent / "acceptance_summary.txt"


@pytest.fixture(scope="session")
def acceptance_log():
    SUMMARY.write_text("")

    def record(line: str):
        print(line)
        with SUMMARY.open("a") as fh:
            fh.write(line + "\n")

    return record
