"""Three-stage prompt chain over RFC chunks.

Per chunk: stage 1 inventories commands, stage 2 derives ordering facts from
that inventory, stage 3 formalizes rules. Each stage's prompt embeds the
serialized output of the previous stage verbatim. Chunks run independently
(optionally in parallel) and their rule fragments merge deterministically in
chunk order.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ReplayMiss, SchemaViolation, UnparseableStageOutput
from .llm_backend import (
    ChatBackend,
    CompletionRequest,
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL_ID,
)
from .rfc_parser import AppendixListing, Chunk
from .rulebook import CommandRule, Edge, Rulebook

logger = logging.getLogger(__name__)

CATEGORIES = ("access-control", "transfer-parameter", "service", "session", "other")
DEFAULT_PARALLELISM = 4

SYSTEM_PROMPTS = {
    1: (
        "You are a meticulous protocol analyst. You extract protocol commands "
        "from specification text and answer only in the requested JSON format."
    ),
    2: (
        "You are a meticulous protocol analyst. You derive command ordering "
        "constraints from specification text and answer only in the requested "
        "JSON format."
    ),
    3: (
        "You are a meticulous protocol analyst. You formalize protocol command "
        "rules and answer only in the requested JSON format."
    ),
}

FORMAT_REMINDER = (
    "Reminder: respond with exactly one JSON array inside a ```json code "
    "block and no other JSON. Do not add commentary."
)


@dataclass(frozen=True)
class CommandSpec:
    name: str
    category: str
    description: str


@dataclass
class CommandInventory:
    commands: list[CommandSpec]
    chunk_ordinal: int

    def names(self) -> list[str]:
        return [c.name for c in self.commands]


@dataclass
class TransitionFact:
    command: str
    preconditions: list[str] = field(default_factory=list)
    postconditions: list[str] = field(default_factory=list)
    allowed_before: list[str] = field(default_factory=list)
    allowed_after: list[str] = field(default_factory=list)


@dataclass
class TransitionFacts:
    facts: list[TransitionFact]
    chunk_ordinal: int


@dataclass
class ChainConfig:
    max_chunk_chars: int = 6000
    stage_model_ids: tuple[str, str, str] = (
        DEFAULT_MODEL_ID,
        DEFAULT_MODEL_ID,
        DEFAULT_MODEL_ID,
    )
    parallelism: int = DEFAULT_PARALLELISM
    appendix_in_context: bool = True
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.0

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class RunReport:
    chunks: int = 0
    calls_per_stage: dict[str, int] = field(
        default_factory=lambda: {"stage1": 0, "stage2": 0, "stage3": 0}
    )
    skipped_chunks: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "chunks": self.chunks,
            "calls_per_stage": dict(self.calls_per_stage),
            "skipped_chunks": list(self.skipped_chunks),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


class TemplateSet:
    """The three stage prompt templates.

    Templates are plain text files with literal placeholders {CHUNK},
    {APPENDIX}, {INVENTORY} and {FACTS}; substitution is token replacement,
    never str.format, so JSON braces in the templates are safe.
    """

    FILENAMES = ("stage1.txt", "stage2.txt", "stage3.txt")

    def __init__(self, stage1: str, stage2: str, stage3: str):
        self.stage1 = stage1
        self.stage2 = stage2
        self.stage3 = stage3

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "TemplateSet":
        if directory is None:
            base = resources.files("fsmflow") / "prompts"
            texts = [(base / name).read_text(encoding="utf-8") for name in cls.FILENAMES]
        else:
            base = Path(directory)
            texts = [(base / name).read_text(encoding="utf-8") for name in cls.FILENAMES]
        return cls(*texts)

    def render_stage1(self, chunk_text: str, appendix_text: str) -> str:
        return self.stage1.replace("{APPENDIX}", appendix_text).replace(
            "{CHUNK}", chunk_text
        )

    def render_stage2(self, inventory_json: str, chunk_text: str) -> str:
        return self.stage2.replace("{INVENTORY}", inventory_json).replace(
            "{CHUNK}", chunk_text
        )

    def render_stage3(self, facts_json: str) -> str:
        return self.stage3.replace("{FACTS}", facts_json)


def inventory_to_json(inv: CommandInventory) -> str:
    """Canonical serialization embedded verbatim into stage-2 prompts."""
    return json.dumps(
        {
            "chunk_ordinal": inv.chunk_ordinal,
            "commands": [
                {"name": c.name, "category": c.category, "description": c.description}
                for c in inv.commands
            ],
        },
        indent=2,
        ensure_ascii=False,
    )


def facts_to_json(facts: TransitionFacts) -> str:
    """Canonical serialization embedded verbatim into stage-3 prompts."""
    return json.dumps(
        {
            "chunk_ordinal": facts.chunk_ordinal,
            "facts": [
                {
                    "command": f.command,
                    "preconditions": f.preconditions,
                    "postconditions": f.postconditions,
                    "allowed_before": f.allowed_before,
                    "allowed_after": f.allowed_after,
                }
                for f in facts.facts
            ],
        },
        indent=2,
        ensure_ascii=False,
    )


_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def extract_json_payload(text: str):
    """Pull the first JSON value out of a model response.

    Prefers a fenced ```json block; otherwise scans for the first parseable
    JSON array or object. Raises ValueError when nothing parses.
    """
    fenced = _FENCE_RE.search(text)
    if fenced:
        try:
            return json.loads(fenced.group(1))
        except ValueError:
            pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(text, i)
                return value
            except ValueError:
                continue
    raise ValueError("no JSON payload found in response")


class _NullLog:
    def call(self, stage: str) -> None:
        pass

    def warn(self, message: str) -> None:
        logger.warning("%s", message)


_NULL_LOG = _NullLog()


class _ChunkLog:
    """Per-chunk call counts and warnings, merged into the report later."""

    def __init__(self):
        self.calls = {"stage1": 0, "stage2": 0, "stage3": 0}
        self.warnings: list[str] = []

    def call(self, stage: str) -> None:
        self.calls[stage] += 1

    def warn(self, message: str) -> None:
        logger.warning("%s", message)
        self.warnings.append(message)


def _ask_json(
    backend: ChatBackend,
    stage: int,
    user_prompt: str,
    model_id: str,
    chunk_ordinal: int,
    log,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.0,
):
    """One completion plus a single re-ask with a format reminder.

    A replay miss on the re-ask means the recorded session never needed the
    recovery path, so the stage output is treated as unparseable rather
    than as fixture drift.
    """
    req = CompletionRequest(
        system_prompt=SYSTEM_PROMPTS[stage],
        user_prompt=user_prompt,
        model_id=model_id,
        max_tokens=max_tokens,
        temperature=temperature,
    )
    log.call(f"stage{stage}")
    resp = backend.complete(req)
    try:
        return extract_json_payload(resp.text)
    except ValueError as first_err:
        log.warn(
            f"stage {stage} response for chunk {chunk_ordinal} unparseable, re-asking"
        )
        retry_req = CompletionRequest(
            system_prompt=SYSTEM_PROMPTS[stage],
            user_prompt=f"{user_prompt}\n\n{FORMAT_REMINDER}",
            model_id=model_id,
            max_tokens=max_tokens,
            temperature=temperature,
        )
        log.call(f"stage{stage}")
        try:
            retry_resp = backend.complete(retry_req)
        except ReplayMiss as exc:
            raise UnparseableStageOutput(
                stage, chunk_ordinal, "no recorded recovery response"
            ) from exc
        try:
            return extract_json_payload(retry_resp.text)
        except ValueError as exc:
            raise UnparseableStageOutput(stage, chunk_ordinal, str(first_err)) from exc


def stage1_extract_commands(
    chunk: Chunk,
    appendix: AppendixListing,
    backend: ChatBackend,
    *,
    templates: TemplateSet | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    appendix_in_context: bool = True,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.0,
    log=_NULL_LOG,
) -> CommandInventory:
    """Stage 1: inventory the commands a chunk defines."""
    templates = templates or TemplateSet.load()
    appendix_text = appendix.render() if appendix_in_context else "(not provided)"
    prompt = templates.render_stage1(chunk.text, appendix_text)
    payload = _ask_json(
        backend, 1, prompt, model_id, chunk.ordinal, log, max_tokens, temperature
    )
    if not isinstance(payload, list):
        raise UnparseableStageOutput(1, chunk.ordinal, "expected a JSON array")

    commands: list[CommandSpec] = []
    seen: set[str] = set()
    for item in payload:
        if not isinstance(item, dict) or not str(item.get("name", "")).strip():
            log.warn(f"stage 1 chunk {chunk.ordinal}: dropping malformed entry {item!r}")
            continue
        name = str(item["name"]).strip().upper()
        if name in seen:
            continue
        seen.add(name)
        category = str(item.get("category", "other")).strip().lower()
        if category not in CATEGORIES:
            log.warn(
                f"stage 1 chunk {chunk.ordinal}: unknown category {category!r} "
                f"for {name}, using 'other'"
            )
            category = "other"
        commands.append(
            CommandSpec(
                name=name,
                category=category,
                description=str(item.get("description", "")).strip(),
            )
        )
    return CommandInventory(commands=commands, chunk_ordinal=chunk.ordinal)


def stage2_analyze_transitions(
    inv: CommandInventory,
    chunk: Chunk,
    backend: ChatBackend,
    *,
    templates: TemplateSet | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.0,
    log=_NULL_LOG,
) -> TransitionFacts:
    """Stage 2: ordering facts for the stage-1 inventory.

    Facts naming commands outside the inventory are hallucinations and are
    dropped with a warning; no backend call happens for an empty inventory.
    """
    if not inv.commands:
        return TransitionFacts(facts=[], chunk_ordinal=inv.chunk_ordinal)
    templates = templates or TemplateSet.load()
    prompt = templates.render_stage2(inventory_to_json(inv), chunk.text)
    payload = _ask_json(
        backend, 2, prompt, model_id, chunk.ordinal, log, max_tokens, temperature
    )
    if not isinstance(payload, list):
        raise UnparseableStageOutput(2, chunk.ordinal, "expected a JSON array")

    known = set(inv.names())
    facts: list[TransitionFact] = []
    for item in payload:
        if not isinstance(item, dict) or not str(item.get("command", "")).strip():
            log.warn(f"stage 2 chunk {chunk.ordinal}: dropping malformed entry {item!r}")
            continue
        command = str(item["command"]).strip().upper()
        if command not in known:
            log.warn(
                f"stage 2 chunk {chunk.ordinal}: dropping {command}, "
                "not in the stage-1 inventory"
            )
            continue
        facts.append(
            TransitionFact(
                command=command,
                preconditions=_str_list(item.get("preconditions")),
                postconditions=_str_list(item.get("postconditions")),
                allowed_before=_name_list(item.get("allowed_before")),
                allowed_after=_name_list(item.get("allowed_after")),
            )
        )
    return TransitionFacts(facts=facts, chunk_ordinal=inv.chunk_ordinal)


def _str_list(value) -> list[str]:
    if not isinstance(value, list):
        return []
    return [str(v).strip() for v in value if str(v).strip()]


def _name_list(value) -> list[str]:
    out = []
    for v in _str_list(value):
        name = v.upper()
        if name not in out:
            out.append(name)
    return out


def stage3_synthesize_rulebook(
    facts: TransitionFacts,
    backend: ChatBackend,
    *,
    templates: TemplateSet | None = None,
    model_id: str = DEFAULT_MODEL_ID,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = 0.0,
    log=_NULL_LOG,
) -> list[CommandRule]:
    """Stage 3: formalize facts into three-chapter command rules.

    Every rule must carry purpose, preceding and subsequent; a rule missing
    a chapter raises SchemaViolation naming the command. Rules for commands
    absent from the facts are dropped so the chain never invents commands.
    """
    if not facts.facts:
        return []
    templates = templates or TemplateSet.load()
    prompt = templates.render_stage3(facts_to_json(facts))
    payload = _ask_json(
        backend, 3, prompt, model_id, facts.chunk_ordinal, log, max_tokens, temperature
    )
    if not isinstance(payload, list):
        raise UnparseableStageOutput(3, facts.chunk_ordinal, "expected a JSON array")

    known = {f.command for f in facts.facts}
    rules: list[CommandRule] = []
    seen: set[str] = set()
    for item in payload:
        if not isinstance(item, dict) or not str(item.get("command", "")).strip():
            log.warn(
                f"stage 3 chunk {facts.chunk_ordinal}: dropping malformed entry {item!r}"
            )
            continue
        command = str(item["command"]).strip().upper()
        if command not in known:
            log.warn(
                f"stage 3 chunk {facts.chunk_ordinal}: dropping {command}, "
                "not in the stage-2 facts"
            )
            continue
        if command in seen:
            continue
        for chapter in ("purpose", "preceding", "subsequent"):
            if chapter not in item:
                raise SchemaViolation(
                    f"$.{command}.{chapter}",
                    f"rule for {command} is missing the {chapter!r} chapter",
                )
        seen.add(command)
        rules.append(
            CommandRule(
                command=command,
                purpose=str(item["purpose"]).strip(),
                preceding=_rule_edges(item["preceding"], command, "preceding", log, facts.chunk_ordinal),
                subsequent=_rule_edges(item["subsequent"], command, "subsequent", log, facts.chunk_ordinal),
                provenance=[facts.chunk_ordinal],
            )
        )
    return rules


def _rule_edges(value, command: str, side: str, log, ordinal: int) -> list[Edge]:
    if not isinstance(value, list):
        raise SchemaViolation(
            f"$.{command}.{side}", f"rule for {command}: {side} must be an array"
        )
    edges: list[Edge] = []
    seen: set[str] = set()
    for item in value:
        if not isinstance(item, dict) or not str(item.get("counterpart", "")).strip():
            log.warn(
                f"stage 3 chunk {ordinal}: dropping malformed {side} edge on "
                f"{command}: {item!r}"
            )
            continue
        counterpart = str(item["counterpart"]).strip().upper()
        if counterpart in seen:
            continue
        seen.add(counterpart)
        edges.append(
            Edge(
                counterpart=counterpart,
                system_state=str(item.get("system_state", "")).strip(),
                changes_state=bool(item.get("changes_state", False)),
            )
        )
    return edges


def merge_fragments(
    fragments: list[list[CommandRule]], *, protocol: str = "unknown"
) -> Rulebook:
    """Union rule fragments, keyed by command, in fragment order.

    Preceding/subsequent edges union by counterpart (changes_state=True wins
    on conflict, with a warning); distinct purpose texts concatenate with a
    chunk-provenance separator; provenance ordinals union.
    """
    warnings: list[str] = []
    merged: dict[str, _RuleAccumulator] = {}
    for fragment in fragments:
        for rule in fragment:
            acc = merged.get(rule.command)
            if acc is None:
                acc = _RuleAccumulator(rule.command)
                merged[rule.command] = acc
            acc.add(rule, warnings)
    return Rulebook(
        protocol=protocol,
        rules=[acc.build() for acc in merged.values()],
        warnings=warnings,
    )


class _RuleAccumulator:
    def __init__(self, command: str):
        self.command = command
        self.purposes: list[tuple[int, str]] = []
        self.preceding: dict[str, Edge] = {}
        self.subsequent: dict[str, Edge] = {}
        self.provenance: set[int] = set()

    def add(self, rule: CommandRule, warnings: list[str]) -> None:
        ordinal = rule.provenance[0] if rule.provenance else 0
        self.provenance.update(rule.provenance)
        if rule.purpose and rule.purpose not in (p for _, p in self.purposes):
            self.purposes.append((ordinal, rule.purpose))
        self._merge_edges(self.preceding, rule.preceding, "preceding", warnings)
        self._merge_edges(self.subsequent, rule.subsequent, "subsequent", warnings)

    def _merge_edges(
        self, into: dict[str, Edge], edges: list[Edge], side: str, warnings: list[str]
    ) -> None:
        for edge in edges:
            existing = into.get(edge.counterpart)
            if existing is None:
                into[edge.counterpart] = edge
                continue
            if existing.changes_state != edge.changes_state:
                warnings.append(
                    f"conflicting changes_state for {self.command} {side} "
                    f"{edge.counterpart}; keeping True"
                )
            into[edge.counterpart] = Edge(
                counterpart=edge.counterpart,
                system_state=existing.system_state or edge.system_state,
                changes_state=existing.changes_state or edge.changes_state,
            )

    def build(self) -> CommandRule:
        if not self.purposes:
            purpose = ""
        elif len(self.purposes) == 1:
            purpose = self.purposes[0][1]
        else:
            head = self.purposes[0][1]
            tail = [f"[chunk {o}] {text}" for o, text in self.purposes[1:]]
            purpose = "\n\n".join([head] + tail)
        return CommandRule(
            command=self.command,
            purpose=purpose,
            preceding=list(self.preceding.values()),
            subsequent=list(self.subsequent.values()),
            provenance=sorted(self.provenance),
        )


def run_chain(
    chunks: list[Chunk],
    appendix: AppendixListing,
    backend: ChatBackend,
    cfg: ChainConfig,
    *,
    templates: TemplateSet | None = None,
    protocol: str = "unknown",
) -> tuple[Rulebook, RunReport]:
    """Run stages 1-3 over every chunk and merge the fragments.

    Chunks execute independently, up to cfg.parallelism at a time; the three
    stages within one chunk are strictly sequential. A chunk whose output
    stays unparseable (or violates the rule schema) is skipped and recorded,
    not fatal; backend failures propagate.
    """
    if not chunks:
        raise ValueError("run_chain requires at least one chunk")
    templates = templates or TemplateSet.load()
    s1, s2, s3 = cfg.stage_model_ids

    def process(chunk: Chunk) -> tuple[Chunk, list[CommandRule] | None, _ChunkLog, str | None]:
        log = _ChunkLog()
        gen = {"max_tokens": cfg.max_tokens, "temperature": cfg.temperature}
        try:
            inv = stage1_extract_commands(
                chunk,
                appendix,
                backend,
                templates=templates,
                model_id=s1,
                appendix_in_context=cfg.appendix_in_context,
                log=log,
                **gen,
            )
            facts = stage2_analyze_transitions(
                inv, chunk, backend, templates=templates, model_id=s2, log=log, **gen
            )
            rules = stage3_synthesize_rulebook(
                facts, backend, templates=templates, model_id=s3, log=log, **gen
            )
            return chunk, rules, log, None
        except (UnparseableStageOutput, SchemaViolation) as exc:
            return chunk, None, log, str(exc)

    if cfg.parallelism == 1 or len(chunks) == 1:
        outcomes = [process(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            outcomes = list(pool.map(process, chunks))

    outcomes.sort(key=lambda item: item[0].ordinal)
    report = RunReport(chunks=len(chunks))
    fragments: list[list[CommandRule]] = []
    for chunk, rules, log, failure in outcomes:
        for stage_name, count in log.calls.items():
            report.calls_per_stage[stage_name] += count
        report.warnings.extend(log.warnings)
        if failure is not None:
            report.skipped_chunks.append(chunk.ordinal)
            report.warnings.append(f"chunk {chunk.ordinal} skipped: {failure}")
        else:
            fragments.append(rules)

    rulebook = merge_fragments(fragments, protocol=protocol)
    report.warnings.extend(rulebook.warnings)
    return rulebook, report
