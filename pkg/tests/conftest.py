import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

VERDICTS: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    VERDICTS.setdefault(criterion, []).append((ok, detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(VERDICTS):
        entries = VERDICTS[criterion]
        ok = all(e[0] for e in entries)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - "
                                    + "; ".join(e[1] for e in entries))
