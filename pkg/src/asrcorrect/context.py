from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ContextEntry:
    """One likely user response.

    ``text`` is what the user might say; ``target`` is what it resolves to
    (a presented option, a task id, a command). ``kind`` records where the
    entry came from: option, partial, ordinal, suggestion, command or task.
    """

    text: str
    target: str
    kind: str = "option"
    score: float | None = None


def dedupe(entries) -> list[ContextEntry]:
    from .text import normalize

    seen: set[str] = set()
    out = []
    for e in entries:
        key = normalize(e.text)
        if key and key not in seen:
            seen.add(key)
            out.append(e)
    return out
