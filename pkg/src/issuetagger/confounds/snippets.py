"""Fenced code snippet detection for GitHub-flavoured markdown bodies."""

from __future__ import annotations

FENCE = "```"


def detect_code_snippet(body: str) -> bool:
    """True iff some line starts with a backtick fence and a later line does too.

    The opening fence may carry an info string (```python).  Fences must sit
    at the very start of a line: inline ``` mid-line, indented code blocks and
    ~~~ fences do not count, and an opening fence that is never closed does not
    enclose anything.
    """
    opened = False
    for line in body.splitlines():
        if line.startswith(FENCE):
            if opened:
                return True
            opened = True
    return False
