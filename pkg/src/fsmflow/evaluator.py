"""Score an extracted FSM against a gold reference.

Two matching modes: ``triple`` compares exact (from, input, to) transitions;
``adjacency`` compares ordered input-succession pairs, i.e. which command may
directly follow which. States are canonicalized case-insensitively and
whitespace-trimmed before matching, inputs are uppercased.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ModeUnsupported
from .fsm_model import Fsm

MODE_ADJACENCY = "adjacency"
MODE_TRIPLE = "triple"
MODES = (MODE_ADJACENCY, MODE_TRIPLE)

_WS_RUN = re.compile(r"\s+")


@dataclass(frozen=True)
class EvalCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")


@dataclass
class CompareResult:
    counts: EvalCounts
    matched: list[tuple]
    spurious: list[tuple]
    missed: list[tuple]


@dataclass(frozen=True)
class MetricValues:
    precision: float
    recall: float
    f1: float
    undefined: bool = False


@dataclass
class EvalReport:
    counts: EvalCounts
    precision: float
    recall: float
    f1: float
    matched: list[tuple]
    spurious: list[tuple]
    missed: list[tuple]
    mode: str
    metrics_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "metrics_defined": self.metrics_defined,
            "matched": [list(m) for m in self.matched],
            "spurious": [list(m) for m in self.spurious],
            "missed": [list(m) for m in self.missed],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


def canonical_state(name: str) -> str:
    return _WS_RUN.sub(" ", name.strip()).casefold()


def canonical_input(name: str) -> str:
    return name.strip().upper()


def _triples(fsm: Fsm) -> set[tuple[str, str, str]]:
    return {
        (canonical_state(t.from_state), canonical_input(t.input), canonical_state(t.to_state))
        for t in fsm.transitions
    }


def _succession_pairs(fsm: Fsm) -> set[tuple[str, str]]:
    """Pairs (a, b) such that some state sequence permits input a then b."""
    by_source: dict[str, list] = {}
    for t in fsm.transitions:
        by_source.setdefault(canonical_state(t.from_state), []).append(t)
    pairs: set[tuple[str, str]] = set()
    for t in fsm.transitions:
        for follow in by_source.get(canonical_state(t.to_state), ()):
            pairs.add((canonical_input(t.input), canonical_input(follow.input)))
    return pairs


def compare(extracted: Fsm, gold: Fsm, mode: str) -> CompareResult:
    """Set comparison of the two FSMs under the given mode."""
    if mode == MODE_TRIPLE:
        ext, ref = _triples(extracted), _triples(gold)
    elif mode == MODE_ADJACENCY:
        ext, ref = _succession_pairs(extracted), _succession_pairs(gold)
    else:
        raise ModeUnsupported(f"unknown evaluation mode {mode!r}; use one of {MODES}")
    matched = sorted(ext & ref)
    spurious = sorted(ext - ref)
    missed = sorted(ref - ext)
    return CompareResult(
        counts=EvalCounts(tp=len(matched), fp=len(spurious), fn=len(missed)),
        matched=matched,
        spurious=spurious,
        missed=missed,
    )


def metrics(c: EvalCounts) -> MetricValues:
    """Precision, recall and F1 in percent, rounded to 2 decimal places.

    A zero denominator yields 0.00 for the affected value and sets the
    undefined flag instead of raising, so batch evaluation stays total.
    """
    undefined = False
    if c.tp + c.fp > 0:
        precision = 100.0 * c.tp / (c.tp + c.fp)
    else:
        precision, undefined = 0.0, True
    if c.tp + c.fn > 0:
        recall = 100.0 * c.tp / (c.tp + c.fn)
    else:
        recall, undefined = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined = undefined or c.tp + c.fp == 0 or c.tp + c.fn == 0
    return MetricValues(
        precision=round(precision, 2),
        recall=round(recall, 2),
        f1=round(f1, 2),
        undefined=undefined,
    )


def report(extracted: Fsm, gold: Fsm, mode: str) -> EvalReport:
    cmp_result = compare(extracted, gold, mode)
    vals = metrics(cmp_result.counts)
    return EvalReport(
        counts=cmp_result.counts,
        precision=vals.precision,
        recall=vals.recall,
        f1=vals.f1,
        matched=cmp_result.matched,
        spurious=cmp_result.spurious,
        missed=cmp_result.missed,
        mode=mode,
        metrics_defined=not vals.undefined,
    )


_TABLE_COLUMNS = ("Protocol", "TP", "FP", "FN", "Precision", "Recall", "F1-Score")


def render_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Fixed-width text table, one row per (protocol, report) pair."""
    cells = [_TABLE_COLUMNS]
    for protocol, rep in rows:
        cells.append(
            (
                protocol,
                str(rep.counts.tp),
                str(rep.counts.fp),
                str(rep.counts.fn),
                f"{rep.precision:.2f}",
                f"{rep.recall:.2f}",
                f"{rep.f1:.2f}",
            )
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(_TABLE_COLUMNS))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(len(widths))))
    return "\n".join(lines) + "\n"
