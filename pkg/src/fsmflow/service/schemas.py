"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ParseRequest(BaseModel):
    rfc_text: str
    source_name: str = "request"
    max_chunk_chars: int = 6000


class ChunkOut(BaseModel):
    text: str
    path: str
    ordinal: int
    part: int


class ParseResponse(BaseModel):
    tree: dict
    appendix: str
    chunks: list[ChunkOut]


class ReplayEntryIn(BaseModel):
    fingerprint: str
    request: dict
    response: dict


class ExtractRequest(BaseModel):
    rfc_text: str
    source_name: str = "request"
    protocol: str = "unknown"
    backend: Literal["replay", "live"] = "replay"
    replay_entries: list[ReplayEntryIn] = Field(default_factory=list)
    max_chunk_chars: int = 6000
    parallelism: int = 4
    model_id: str | None = None


class ExtractResponse(BaseModel):
    rulebook: dict
    fsm: dict
    dot: str
    report: dict


class EvalRequest(BaseModel):
    extracted: dict
    gold: dict | None = None
    gold_protocol: str | None = None
    mode: Literal["adjacency", "triple"] = "triple"


class EvalResponse(BaseModel):
    report: dict
    table: str


class DotRequest(BaseModel):
    fsm: dict


class DotResponse(BaseModel):
    dot: str
