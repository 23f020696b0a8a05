"""Finite-state machine values, rulebook derivation, and DOT/JSON export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import rulebook as rb_mod
from .errors import DanglingState, SchemaViolation
from .rulebook import Rulebook

SCHEMA_VERSION = "fsm/1"
START_STATE = "START"


@dataclass(frozen=True, order=True)
class Transition:
    from_state: str
    input: str
    to_state: str


@dataclass
class Fsm:
    protocol: str
    states: set[str]
    initial: str
    transitions: set[Transition] = field(default_factory=set)

    def check(self) -> None:
        """Raise DanglingState if any endpoint (or the initial state) is
        not a declared state."""
        if self.initial not in self.states:
            raise DanglingState(f"initial state {self.initial!r} is not declared")
        for t in self.transitions:
            for endpoint in (t.from_state, t.to_state):
                if endpoint not in self.states:
                    raise DanglingState(
                        f"transition {t.from_state}--{t.input}-->{t.to_state} "
                        f"references undeclared state {endpoint!r}"
                    )


def from_rulebook_adjacency(rb: Rulebook) -> Fsm:
    """Project a rulebook onto a command-adjacency FSM.

    Every command C contributes a state ``after_C``; each adjacency pair
    (A, B) becomes a transition from ``after_A`` (or START) into
    ``after_B`` on input B.
    """
    states = {START_STATE} | {_after(r.command) for r in rb.rules}
    transitions: set[Transition] = set()
    for a, b in sorted(rb_mod.to_adjacency(rb)):
        from_state = START_STATE if a == START_STATE else _after(a)
        to_state = _after(b)
        states.add(from_state)
        states.add(to_state)
        transitions.add(Transition(from_state, b, to_state))
    return Fsm(
        protocol=rb.protocol,
        states=states,
        initial=START_STATE,
        transitions=transitions,
    )


def _after(command: str) -> str:
    return f"after_{command}"


_DOC_KEYS = {"version", "protocol", "states", "initial", "transitions"}
_TRANSITION_KEYS = {"from", "input", "to"}


def fsm_from_json(text: str) -> Fsm:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise SchemaViolation("$", f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaViolation("$", "expected an object")
    for key in sorted(set(data) - _DOC_KEYS):
        raise SchemaViolation(f"$.{key}", "unknown field")
    for key in sorted(_DOC_KEYS - set(data)):
        raise SchemaViolation(f"$.{key}", "missing field")
    if data["version"] != SCHEMA_VERSION:
        raise SchemaViolation("$.version", f"unsupported version {data['version']!r}")
    if not isinstance(data["protocol"], str):
        raise SchemaViolation("$.protocol", "expected a string")
    if not isinstance(data["states"], list) or not all(
        isinstance(s, str) and s for s in data["states"]
    ):
        raise SchemaViolation("$.states", "expected an array of non-empty strings")
    if not isinstance(data["initial"], str):
        raise SchemaViolation("$.initial", "expected a string")
    if not isinstance(data["transitions"], list):
        raise SchemaViolation("$.transitions", "expected an array")

    transitions = set()
    for i, item in enumerate(data["transitions"]):
        path = f"$.transitions[{i}]"
        if not isinstance(item, dict):
            raise SchemaViolation(path, "expected an object")
        for key in sorted(set(item) - _TRANSITION_KEYS):
            raise SchemaViolation(f"{path}.{key}", "unknown field")
        for key in sorted(_TRANSITION_KEYS - set(item)):
            raise SchemaViolation(f"{path}.{key}", "missing field")
        for key in _TRANSITION_KEYS:
            if not isinstance(item[key], str) or not item[key]:
                raise SchemaViolation(f"{path}.{key}", "expected a non-empty string")
        transitions.add(Transition(item["from"], item["input"].upper(), item["to"]))

    fsm = Fsm(
        protocol=data["protocol"],
        states=set(data["states"]),
        initial=data["initial"],
        transitions=transitions,
    )
    fsm.check()
    return fsm


def load_gold(path: str | Path) -> Fsm:
    """Load a hand-transcribed reference FSM from its JSON file."""
    return fsm_from_json(Path(path).read_text(encoding="utf-8"))


def bundled_gold_path(protocol: str) -> Path:
    """Path of a gold FSM shipped with the package (ftp, rtsp)."""
    res = resources.files("fsmflow") / "fixtures" / "gold" / f"{protocol.lower()}.json"
    return Path(str(res))


def export_json(fsm: Fsm) -> str:
    doc = {
        "version": SCHEMA_VERSION,
        "protocol": fsm.protocol,
        "states": sorted(fsm.states),
        "initial": fsm.initial,
        "transitions": [
            {"from": t.from_state, "input": t.input, "to": t.to_state}
            for t in sorted(fsm.transitions)
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def export_dot(fsm: Fsm) -> str:
    """Graphviz digraph: states as nodes, labeled edges, entry arrow on the
    initial state. Output is sorted, so equal FSMs give identical text."""
    lines = [f"digraph {_quote(fsm.protocol or 'fsm')} {{", "  rankdir=LR;"]
    lines.append('  __start [shape=point, label=""];')
    lines.append(f"  __start -> {_quote(fsm.initial)};")
    for state in sorted(fsm.states):
        lines.append(f"  {_quote(state)};")
    for t in sorted(fsm.transitions):
        lines.append(
            f"  {_quote(t.from_state)} -> {_quote(t.to_state)} "
            f"[label={_quote(t.input)}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _quote(name: str) -> str:
    escaped = name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'
