"""FastAPI service wrapping the extraction pipeline.

The service keeps no state between requests: documents travel in the request
body and replay stores can be inlined, so extraction stays deterministic and
testable. Live extraction uses the server's environment credential.
"""

from __future__ import annotations

import json
import os

from fastapi import FastAPI, HTTPException

from .. import __version__, evaluator, fsm_model, llm_backend, rfc_parser, rulebook
from ..errors import (
    AuthMissing,
    DanglingState,
    EmptyDocument,
    MalformedResponse,
    ModeUnsupported,
    NoSectionsFound,
    RateLimited,
    ReplayMiss,
    SchemaViolation,
)
from ..prompt_chain import ChainConfig, run_chain
from .schemas import (
    DotRequest,
    DotResponse,
    EvalRequest,
    EvalResponse,
    ExtractRequest,
    ExtractResponse,
    ParseRequest,
    ParseResponse,
)

app = FastAPI(
    title="fsmflow",
    version=__version__,
    description="Protocol FSM extraction from plain-text RFC documents.",
)

_BAD_INPUT = (
    EmptyDocument,
    NoSectionsFound,
    SchemaViolation,
    DanglingState,
    ModeUnsupported,
    ValueError,
)
_BACKEND_FAILURE = (RateLimited, MalformedResponse, ReplayMiss)


def _parse_text(req_text: str, source_name: str, max_chunk_chars: int):
    if not req_text.strip():
        raise EmptyDocument("rfc_text is empty")
    clean = rfc_parser.strip_artifacts(req_text)
    tree = rfc_parser.parse_tree(clean, root_title=source_name)
    chunks = rfc_parser.collect_leaf_chunks(tree, max_chunk_chars)
    appendix = rfc_parser.build_appendix(tree)
    return tree, chunks, appendix


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/parse", response_model=ParseResponse)
def parse(req: ParseRequest) -> ParseResponse:
    try:
        tree, chunks, appendix = _parse_text(
            req.rfc_text, req.source_name, req.max_chunk_chars
        )
    except _BAD_INPUT as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return ParseResponse(
        tree=rfc_parser.tree_to_dict(tree),
        appendix=appendix.render(),
        chunks=[
            {"text": c.text, "path": c.path, "ordinal": c.ordinal, "part": c.part}
            for c in chunks
        ],
    )


@app.post("/extract", response_model=ExtractResponse)
def extract(req: ExtractRequest) -> ExtractResponse:
    try:
        _, chunks, appendix = _parse_text(
            req.rfc_text, req.source_name, req.max_chunk_chars
        )
        if not chunks:
            raise ValueError("the document produced no chunks to process")
        backend = _build_backend(req)
        model_id = req.model_id or llm_backend.DEFAULT_MODEL_ID
        cfg = ChainConfig(
            max_chunk_chars=req.max_chunk_chars,
            stage_model_ids=(model_id, model_id, model_id),
            parallelism=req.parallelism,
        )
        rb, report = run_chain(chunks, appendix, backend, cfg, protocol=req.protocol)
    except AuthMissing as exc:
        raise HTTPException(status_code=503, detail=str(exc)) from exc
    except _BAD_INPUT as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except _BACKEND_FAILURE as exc:
        raise HTTPException(status_code=502, detail=str(exc)) from exc
    fsm = fsm_model.from_rulebook_adjacency(rb)
    return ExtractResponse(
        rulebook=json.loads(rulebook.serialize(rb)),
        fsm=json.loads(fsm_model.export_json(fsm)),
        dot=fsm_model.export_dot(fsm),
        report=report.to_dict(),
    )


def _build_backend(req: ExtractRequest) -> llm_backend.ChatBackend:
    if req.backend == "replay":
        store = llm_backend.ReplayStore(
            entries={e.fingerprint: e.model_dump() for e in req.replay_entries}
        )
        return llm_backend.ReplayBackend(store)
    endpoint = os.environ.get("FSMFLOW_ENDPOINT_URL", "")
    if not endpoint:
        raise AuthMissing("live backend needs FSMFLOW_ENDPOINT_URL on the server")
    return llm_backend.HttpChatBackend(
        endpoint, os.environ.get(llm_backend.API_KEY_ENV_VAR)
    )


@app.post("/eval", response_model=EvalResponse)
def evaluate(req: EvalRequest) -> EvalResponse:
    try:
        extracted = fsm_model.fsm_from_json(json.dumps(req.extracted))
        if req.gold is not None:
            gold = fsm_model.fsm_from_json(json.dumps(req.gold))
        elif req.gold_protocol:
            gold = fsm_model.load_gold(fsm_model.bundled_gold_path(req.gold_protocol))
        else:
            raise ValueError("provide either gold or gold_protocol")
        rep = evaluator.report(extracted, gold, req.mode)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=f"no bundled gold: {exc}") from exc
    except _BAD_INPUT as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return EvalResponse(
        report=rep.to_dict(),
        table=evaluator.render_table([(gold.protocol or "unknown", rep)]),
    )


@app.post("/export-dot", response_model=DotResponse)
def export_dot(req: DotRequest) -> DotResponse:
    try:
        fsm = fsm_model.fsm_from_json(json.dumps(req.fsm))
    except _BAD_INPUT as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return DotResponse(dot=fsm_model.export_dot(fsm))


@app.get("/gold/{protocol}")
def gold(protocol: str) -> dict:
    path = fsm_model.bundled_gold_path(protocol)
    if not path.exists():
        raise HTTPException(status_code=404, detail=f"no bundled gold FSM for {protocol!r}")
    return json.loads(path.read_text(encoding="utf-8"))
