"""Collects one status line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def report(number: int, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    LINES.append(line)
    print(line)
