"""Collects one verdict line per acceptance criterion for the session summary."""

from __future__ import annotations

RESULTS: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} {number}: {title}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    assert ok, line
