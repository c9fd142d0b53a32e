"""Dialogue state tracking, narrow context and the correction trigger."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Protocol, Sequence

from .augment import expand_partial_matches
from .context import ContextEntry, dedupe
from .text import normalize


class State(str, Enum):
    START = "Start"
    SEARCHING = "Searching"
    SELECTING = "Selecting"
    EXECUTING = "Executing"
    ENDED = "Ended"


class IntentLabel(str, Enum):
    SEARCH = "Search"
    SELECT = "Select"
    COMMAND = "Command"
    QUESTION = "Question"
    EXIT = "Exit"
    CHITCHAT = "Chitchat"
    OTHER = "Other"


class StateError(ValueError):
    pass


DEFAULT_COMMANDS = (
    "next",
    "go back",
    "previous",
    "repeat",
    "start cooking",
    "start another task",
    "show ingredients",
    "read the steps",
    "pause",
    "resume",
    "finish",
)

ORDINAL_WORDS = ("one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")


@dataclass(frozen=True)
class Intent:
    label: IntentLabel
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "label", IntentLabel(self.label))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DialogueSnapshot:
    state: State = State.START
    presented_options: tuple[str, ...] = ()
    option_ids: tuple[str, ...] | None = None
    system_suggestions: tuple[str, ...] = ()
    active_task: str | None = None
    pending_system_question: bool = False
    command_vocabulary: tuple[str, ...] = DEFAULT_COMMANDS

    def __post_init__(self):
        object.__setattr__(self, "state", State(self.state))
        for name in ("presented_options", "system_suggestions", "command_vocabulary"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.option_ids is not None:
            object.__setattr__(self, "option_ids", tuple(self.option_ids))
            if len(self.option_ids) != len(self.presented_options):
                raise ValueError("option_ids must align with presented_options")
        if self.presented_options and self.state is not State.SELECTING:
            raise ValueError(f"presented options are only valid in Selecting, not {self.state.value}")
        if self.active_task is not None and self.state is not State.EXECUTING:
            raise ValueError(f"an active task is only valid in Executing, not {self.state.value}")

    def option_target(self, i: int) -> str:
        return self.option_ids[i] if self.option_ids else self.presented_options[i]

    def to_json(self) -> dict:
        return {
            "state": self.state.value,
            "presented_options": list(self.presented_options),
            "option_ids": None if self.option_ids is None else list(self.option_ids),
            "system_suggestions": list(self.system_suggestions),
            "active_task": self.active_task,
            "pending_system_question": self.pending_system_question,
            "command_vocabulary": list(self.command_vocabulary),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DialogueSnapshot":
        return cls(
            state=State(obj.get("state", "Start")),
            presented_options=tuple(obj.get("presented_options") or ()),
            option_ids=obj.get("option_ids"),
            system_suggestions=tuple(obj.get("system_suggestions") or ()),
            active_task=obj.get("active_task"),
            pending_system_question=bool(obj.get("pending_system_question", False)),
            command_vocabulary=tuple(obj.get("command_vocabulary") or DEFAULT_COMMANDS),
        )


def derive_narrow_context(snapshot: DialogueSnapshot) -> list[ContextEntry]:
    s = snapshot
    if s.state is State.START:
        entries = [ContextEntry(t, t, "suggestion") for t in s.system_suggestions]
    elif s.state is State.SELECTING:
        entries = [ContextEntry(opt, s.option_target(i), "option") for i, opt in enumerate(s.presented_options)]
        index_of = {opt: i for i, opt in reversed(list(enumerate(s.presented_options)))}
        for partial, opt in expand_partial_matches(s.presented_options).items():
            entries.append(ContextEntry(partial, s.option_target(index_of[opt]), "partial"))
        for i in range(min(len(s.presented_options), len(ORDINAL_WORDS))):
            entries.append(ContextEntry(f"option {ORDINAL_WORDS[i]}", s.option_target(i), "ordinal"))
    elif s.state is State.EXECUTING:
        entries = [ContextEntry(c, c, "command") for c in s.command_vocabulary]
    else:
        entries = []
    return dedupe(entries)


def should_trigger(snapshot: DialogueSnapshot, intent: Intent) -> bool:
    label = intent.label
    if snapshot.state is State.ENDED:
        return False
    if snapshot.pending_system_question and label is IntentLabel.QUESTION:
        return False
    if snapshot.state is State.EXECUTING and label is not IntentLabel.COMMAND:
        return False
    if derive_narrow_context(snapshot):
        return True
    return label in (IntentLabel.SEARCH, IntentLabel.SELECT) and snapshot.state in (
        State.SEARCHING,
        State.SELECTING,
    )


# -- state machine ---------------------------------------------------------------

TRANSITIONS: dict[tuple[State, str], State] = {
    (State.START, "search"): State.SEARCHING,
    (State.SEARCHING, "search"): State.SEARCHING,
    (State.SEARCHING, "present"): State.SELECTING,
    (State.SELECTING, "select"): State.EXECUTING,
    (State.SELECTING, "search"): State.SEARCHING,
    (State.EXECUTING, "command"): State.EXECUTING,
    (State.EXECUTING, "new_task"): State.SEARCHING,
    (State.EXECUTING, "search"): State.SEARCHING,
}
for _s in (State.START, State.SEARCHING, State.SELECTING, State.EXECUTING):
    TRANSITIONS[(_s, "exit")] = State.ENDED

ACTIONS = ("search", "present", "select", "command", "new_task", "exit")


@dataclass(frozen=True)
class Event:
    action: str
    utterance: str = ""
    intent: Intent | None = None
    options: tuple[str, ...] = ()
    option_ids: tuple[str, ...] | None = None
    choice: int | None = None  # 1-based option number for "select"
    question: bool = False  # the system's reply ends with a question


def update_state(snapshot: DialogueSnapshot, event: Event) -> DialogueSnapshot:
    key = (snapshot.state, event.action)
    if key not in TRANSITIONS:
        raise StateError(f"no transition {snapshot.state.value} --{event.action}-->")
    nxt = TRANSITIONS[key]
    base = replace(
        snapshot,
        state=nxt,
        presented_options=(),
        option_ids=None,
        active_task=None,
        pending_system_question=event.question,
    )
    if event.action == "present":
        if not event.options:
            raise StateError("present event carries no options")
        return replace(base, presented_options=tuple(event.options), option_ids=event.option_ids)
    if event.action == "select":
        n = len(snapshot.presented_options)
        if event.choice is None or not 1 <= event.choice <= n:
            raise StateError(f"selection {event.choice} outside the {n} presented options")
        return replace(base, active_task=snapshot.option_target(event.choice - 1))
    if event.action == "command":
        return replace(base, active_task=snapshot.active_task)
    return base


# -- intent classification ----------------------------------------------------------


class IntentClassifier(Protocol):
    def classify(self, text: str, snapshot: DialogueSnapshot | None = None) -> Intent: ...


_EXIT = re.compile(r"^(alexa )?(cancel|stop|exit|quit|goodbye|bye|open \w+)\b")
_SEARCH = re.compile(
    r"^(alexa )?(how|recipes?|show me|find|search|help me|i want to|i need to|teach me|ways to|best way)\b"
)
_ORDINAL = re.compile(
    r"\b(option|number)\s+(one|two|three|four|five|\d)\b|\b(first|second|third|last) one\b|^(the )?(first|second|third)$"
)
_QUESTION = re.compile(r"^(what|why|when|where|who|which|can|could|is|are|does|do|should|will)\b")
_CHITCHAT = re.compile(r"\b(joke|how are you|hello|hi there|thank you|thanks|who are you)\b")


class RuleIntentClassifier:
    """Keyword rules standing in for a trained intent model."""

    def classify(self, text: str, snapshot: DialogueSnapshot | None = None) -> Intent:
        t = normalize(text)
        if _EXIT.search(t):
            return Intent(IntentLabel.EXIT, 0.9)
        if snapshot is not None and snapshot.state is State.EXECUTING:
            if any(t == normalize(c) or t.startswith(normalize(c) + " ") for c in snapshot.command_vocabulary):
                return Intent(IntentLabel.COMMAND, 0.9)
        if _CHITCHAT.search(t):
            return Intent(IntentLabel.CHITCHAT, 0.7)
        if _ORDINAL.search(t):
            return Intent(IntentLabel.SELECT, 0.8)
        if snapshot is not None and snapshot.presented_options:
            words = set(t.split())
            for opt in snapshot.presented_options:
                if t == normalize(opt) or (words and words <= set(normalize(opt).split())):
                    return Intent(IntentLabel.SELECT, 0.8)
        if _SEARCH.search(t):
            return Intent(IntentLabel.SEARCH, 0.8)
        if _QUESTION.search(t):
            return Intent(IntentLabel.QUESTION, 0.6)
        if snapshot is not None and snapshot.state in (State.START, State.SEARCHING, State.SELECTING):
            # a bare noun phrase at search time is most likely a query
            return Intent(IntentLabel.SEARCH, 0.5)
        return Intent(IntentLabel.OTHER, 0.5)


# -- session traces ------------------------------------------------------------------


def trace_record(snapshot, nbest, intent, narrow: Sequence[ContextEntry], outcome) -> dict:
    return {
        "state": snapshot.state.value,
        "nbest": list(nbest.hypotheses),
        "intent": {"label": intent.label.value, "confidence": intent.confidence},
        "narrow": [{"text": e.text, "target": e.target, "kind": e.kind} for e in narrow],
        "outcome": outcome.to_json(),
    }


def write_trace(records, fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
