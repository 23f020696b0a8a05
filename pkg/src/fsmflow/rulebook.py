"""Per-command rulebook model: three chapters, validation, adjacency.

Each rule records a command's purpose, which commands may directly precede
it, and which may directly follow. ``START`` marks "no prior command
required"; ``END`` marks session termination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import SchemaViolation

SCHEMA_VERSION = "rulebook/1"
START = "START"
END = "END"
RESERVED_TOKENS = frozenset({START, END})


@dataclass(frozen=True)
class Edge:
    counterpart: str
    system_state: str = ""
    changes_state: bool = False


@dataclass
class CommandRule:
    command: str
    purpose: str = ""
    preceding: list[Edge] = field(default_factory=list)
    subsequent: list[Edge] = field(default_factory=list)
    provenance: list[int] = field(default_factory=list)


@dataclass
class Rulebook:
    protocol: str
    rules: list[CommandRule] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def rule_for(self, command: str) -> CommandRule | None:
        for rule in self.rules:
            if rule.command == command:
                return rule
        return None

    def command_names(self) -> list[str]:
        return [rule.command for rule in self.rules]


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; `kind` is non_reciprocal, unknown_counterpart
    or duplicate_edge."""

    kind: str
    command: str
    counterpart: str
    message: str


def validate(rb: Rulebook) -> list[Diagnostic]:
    """Check chapter 2/3 consistency without mutating anything.

    An edge declared from only one end is reported as non_reciprocal for the
    ordered pair (predecessor, successor). Counterparts that name no rule
    and are not reserved are unknown_counterpart; repeated counterparts on
    one side are duplicate_edge.
    """
    known = set(rb.command_names())
    out: list[Diagnostic] = []

    for rule in rb.rules:
        for side_name, edges in (("preceding", rule.preceding), ("subsequent", rule.subsequent)):
            seen: set[str] = set()
            for edge in edges:
                if edge.counterpart in seen:
                    out.append(
                        Diagnostic(
                            kind="duplicate_edge",
                            command=rule.command,
                            counterpart=edge.counterpart,
                            message=(
                                f"{rule.command} lists {edge.counterpart} more than "
                                f"once under {side_name}"
                            ),
                        )
                    )
                seen.add(edge.counterpart)
                if edge.counterpart in RESERVED_TOKENS:
                    continue
                if edge.counterpart not in known:
                    out.append(
                        Diagnostic(
                            kind="unknown_counterpart",
                            command=rule.command,
                            counterpart=edge.counterpart,
                            message=(
                                f"{rule.command} references {edge.counterpart}, "
                                "which has no rule"
                            ),
                        )
                    )

    for rule in rb.rules:
        # rule is the successor here: each declared predecessor must list it back.
        for edge in rule.preceding:
            pred = edge.counterpart
            if pred in RESERVED_TOKENS or pred not in known:
                continue
            pred_rule = rb.rule_for(pred)
            if not any(e.counterpart == rule.command for e in pred_rule.subsequent):
                out.append(_non_reciprocal(pred, rule.command, "subsequent"))
        # rule is the predecessor: each declared successor must list it back.
        for edge in rule.subsequent:
            succ = edge.counterpart
            if succ in RESERVED_TOKENS or succ not in known:
                continue
            succ_rule = rb.rule_for(succ)
            if not any(e.counterpart == rule.command for e in succ_rule.preceding):
                out.append(_non_reciprocal(rule.command, succ, "preceding"))

    return out


def _non_reciprocal(pred: str, succ: str, missing_side: str) -> Diagnostic:
    return Diagnostic(
        kind="non_reciprocal",
        command=pred,
        counterpart=succ,
        message=(
            f"edge {pred} -> {succ} is declared from one end only "
            f"({missing_side} list does not reciprocate)"
        ),
    )


def to_adjacency(rb: Rulebook) -> set[tuple[str, str]]:
    """Union of both chapters as ordered (predecessor, successor) pairs."""
    pairs: set[tuple[str, str]] = set()
    for rule in rb.rules:
        for edge in rule.preceding:
            pairs.add((edge.counterpart, rule.command))
        for edge in rule.subsequent:
            pairs.add((rule.command, edge.counterpart))
    return pairs


def serialize(rb: Rulebook) -> str:
    doc = {
        "version": SCHEMA_VERSION,
        "protocol": rb.protocol,
        "rules": [
            {
                "command": r.command,
                "purpose": r.purpose,
                "preceding": [_edge_dict(e) for e in r.preceding],
                "subsequent": [_edge_dict(e) for e in r.subsequent],
                "provenance": list(r.provenance),
            }
            for r in rb.rules
        ],
        "warnings": list(rb.warnings),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _edge_dict(e: Edge) -> dict:
    return {
        "counterpart": e.counterpart,
        "system_state": e.system_state,
        "changes_state": e.changes_state,
    }


_DOC_KEYS = {"version", "protocol", "rules", "warnings"}
_RULE_KEYS = {"command", "purpose", "preceding", "subsequent", "provenance"}
_EDGE_KEYS = {"counterpart", "system_state", "changes_state"}


def deserialize(text: str) -> Rulebook:
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise SchemaViolation("$", f"invalid JSON: {exc}") from exc
    _check_keys(data, _DOC_KEYS, "$")
    if data["version"] != SCHEMA_VERSION:
        raise SchemaViolation(
            "$.version", f"unsupported version {data['version']!r}"
        )
    if not isinstance(data["protocol"], str):
        raise SchemaViolation("$.protocol", "expected a string")
    if not isinstance(data["rules"], list):
        raise SchemaViolation("$.rules", "expected an array")
    if not isinstance(data["warnings"], list) or not all(
        isinstance(w, str) for w in data["warnings"]
    ):
        raise SchemaViolation("$.warnings", "expected an array of strings")
    rules = [
        _rule_from_dict(item, f"$.rules[{i}]") for i, item in enumerate(data["rules"])
    ]
    return Rulebook(
        protocol=data["protocol"], rules=rules, warnings=list(data["warnings"])
    )


def _check_keys(data, expected: set[str], path: str) -> None:
    if not isinstance(data, dict):
        raise SchemaViolation(path, "expected an object")
    for key in sorted(set(data) - expected):
        raise SchemaViolation(f"{path}.{key}", "unknown field")
    for key in sorted(expected - set(data)):
        raise SchemaViolation(f"{path}.{key}", "missing field")


def _rule_from_dict(data, path: str) -> CommandRule:
    _check_keys(data, _RULE_KEYS, path)
    command = data["command"]
    if not isinstance(command, str) or not command:
        raise SchemaViolation(f"{path}.command", "expected a non-empty string")
    if command != command.upper() or any(ch.isspace() for ch in command):
        raise SchemaViolation(
            f"{path}.command", f"{command!r} must be uppercase with no whitespace"
        )
    if not isinstance(data["purpose"], str):
        raise SchemaViolation(f"{path}.purpose", "expected a string")
    if not isinstance(data["provenance"], list) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 0
        for v in data["provenance"]
    ):
        raise SchemaViolation(
            f"{path}.provenance", "expected an array of non-negative integers"
        )
    return CommandRule(
        command=command,
        purpose=data["purpose"],
        preceding=_edges_from(data["preceding"], f"{path}.preceding"),
        subsequent=_edges_from(data["subsequent"], f"{path}.subsequent"),
        provenance=list(data["provenance"]),
    )


def _edges_from(data, path: str) -> list[Edge]:
    if not isinstance(data, list):
        raise SchemaViolation(path, "expected an array")
    edges = []
    for i, item in enumerate(data):
        edge_path = f"{path}[{i}]"
        _check_keys(item, _EDGE_KEYS, edge_path)
        counterpart = item["counterpart"]
        if not isinstance(counterpart, str) or not counterpart:
            raise SchemaViolation(
                f"{edge_path}.counterpart", "expected a non-empty string"
            )
        if counterpart not in RESERVED_TOKENS and (
            counterpart != counterpart.upper()
            or any(ch.isspace() for ch in counterpart)
        ):
            raise SchemaViolation(
                f"{edge_path}.counterpart",
                f"{counterpart!r} must be uppercase or a reserved token",
            )
        if not isinstance(item["system_state"], str):
            raise SchemaViolation(f"{edge_path}.system_state", "expected a string")
        if not isinstance(item["changes_state"], bool):
            raise SchemaViolation(f"{edge_path}.changes_state", "expected a boolean")
        edges.append(
            Edge(
                counterpart=counterpart,
                system_state=item["system_state"],
                changes_state=item["changes_state"],
            )
        )
    return edges
