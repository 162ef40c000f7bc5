"""Human-in-the-loop assembly sequencing.

The technician puts inspected instruments on the stage in any order. The robot
places an instrument only when it is the next one in the plan, keeps
out-of-order instruments on the stage until their turn comes, and discards
anything the remaining plan does not need. Divider and holder entries in the
plan are robot-side fixtures and are placed as soon as they become next.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import AlreadyComplete, ParseError, StageFull
from .packer import is_fixture_entry

PLACE, HOLD, DISCARD, DONE = "place", "hold", "discard", "done"


@dataclass(frozen=True)
class Action:
    kind: str
    id: str | None = None
    instance: int | None = None

    @classmethod
    def place(cls, entry: tuple[str, int]) -> "Action":
        return cls(PLACE, entry[0], entry[1])

    def __repr__(self) -> str:
        if self.kind == DONE:
            return "Done"
        suffix = "" if self.instance is None else f"#{self.instance}"
        return f"{self.kind.capitalize()}({self.id}{suffix})"


@dataclass(frozen=True)
class SequencerState:
    plan: tuple[tuple[str, int], ...]
    next_index: int = 0
    staged: tuple[tuple[str, int], ...] = ()  # sorted (id, count) pairs
    discarded: tuple[str, ...] = ()
    stage_capacity: int | None = None
    placed: int = 0
    peak_staged: int = 0

    @property
    def complete(self) -> bool:
        return self.next_index == len(self.plan)

    @property
    def staged_counts(self) -> Counter:
        return Counter(dict(self.staged))

    @property
    def staged_total(self) -> int:
        return sum(c for _, c in self.staged)

    def remaining(self) -> list[tuple[str, int]]:
        return [e for e in self.plan[self.next_index:] if not is_fixture_entry(e[0])]


def start(plan: Iterable[tuple[str, int]], stage_capacity: int | None = None) -> tuple[SequencerState, list[Action]]:
    """Initial state, with any leading fixtures already placed."""
    state = SequencerState(tuple((str(i), int(k)) for i, k in plan), stage_capacity=stage_capacity)
    actions: list[Action] = []
    state = _drain(state, Counter(), actions)
    if state.complete and actions:
        actions.append(Action(DONE))
    return state, actions


def on_detected(state: SequencerState, instrument_id: str) -> tuple[SequencerState, list[Action]]:
    if state.complete:
        raise AlreadyComplete(f"plan already complete; cannot accept {instrument_id!r}")
    actions: list[Action] = []
    staged = state.staged_counts
    if state.plan[state.next_index][0] == instrument_id:
        actions.append(Action.place(state.plan[state.next_index]))
        state = replace(state, next_index=state.next_index + 1, placed=state.placed + 1)
        state = _drain(state, staged, actions)
        if state.complete:
            actions.append(Action(DONE))
        return state, actions

    pending = sum(1 for e in state.plan[state.next_index:] if e[0] == instrument_id)
    if pending > staged[instrument_id]:
        if state.stage_capacity is not None and state.staged_total >= state.stage_capacity:
            raise StageFull(f"stage holds {state.staged_total} instruments; cannot hold {instrument_id!r}")
        staged[instrument_id] += 1
        total = state.staged_total + 1
        state = replace(state, staged=_freeze(staged), peak_staged=max(state.peak_staged, total))
        return state, [Action(HOLD, instrument_id)]

    return replace(state, discarded=state.discarded + (instrument_id,)), [Action(DISCARD, instrument_id)]


def _drain(state: SequencerState, staged: Counter, actions: list[Action]) -> SequencerState:
    idx, placed = state.next_index, state.placed
    while idx < len(state.plan):
        entry = state.plan[idx]
        if is_fixture_entry(entry[0]):
            actions.append(Action.place(entry))
        elif staged[entry[0]] > 0:
            staged[entry[0]] -= 1
            actions.append(Action.place(entry))
            placed += 1
        else:
            break
        idx += 1
    return replace(state, next_index=idx, staged=_freeze(staged), placed=placed)


def _freeze(counter: Counter) -> tuple[tuple[str, int], ...]:
    return tuple(sorted((k, v) for k, v in counter.items() if v > 0))


def replay(plan: Sequence[tuple[str, int]], detections: Iterable[str],
           stage_capacity: int | None = None) -> SequencerState:
    state, _ = start(plan, stage_capacity)
    for d in detections:
        state, _ = on_detected(state, d)
    return state


def replay_actions(plan: Sequence[tuple[str, int]], detections: Iterable[str],
                   stage_capacity: int | None = None) -> tuple[SequencerState, list[Action]]:
    state, actions = start(plan, stage_capacity)
    for d in detections:
        state, acts = on_detected(state, d)
        actions.extend(acts)
    return state, actions


class Sequencer:
    """Mutable wrapper holding the current state; one writer at a time."""

    def __init__(self, plan, stage_capacity=None):
        self.state, self.initial_actions = start(plan, stage_capacity)

    def detect(self, instrument_id: str) -> list[Action]:
        self.state, actions = on_detected(self.state, instrument_id)
        return actions


def read_events(lines: Iterable[str]) -> list[str]:
    """Parse ``{"event": "detected", "id": ...}`` JSON lines into detected ids."""
    ids = []
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"event line {n}: {exc}") from None
        if not isinstance(rec, dict) or rec.get("event") != "detected" or not isinstance(rec.get("id"), str):
            raise ParseError(f"event line {n}: expected {{\"event\": \"detected\", \"id\": str}}")
        ids.append(rec["id"])
    return ids
