"""Collects one PASS/FAIL line per acceptance criterion for the summary."""

LINES: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    LINES.append(f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {title} — {detail}")
    return passed
