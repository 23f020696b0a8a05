"""Command-line front end: parse, extract, eval, export-dot, serve.

Exit codes: 0 success, 2 usage/input error, 3 backend/runtime error.
Every run writes its outputs plus a manifest of input hashes into the
chosen output directory, so results stay attributable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, evaluator, fsm_model, llm_backend, rfc_parser, rulebook
from .errors import (
    AuthMissing,
    ConfigError,
    DanglingState,
    EmptyDocument,
    MalformedResponse,
    ModeUnsupported,
    NoSectionsFound,
    RateLimited,
    ReplayMiss,
    SchemaViolation,
)
from .prompt_chain import ChainConfig, TemplateSet, run_chain

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3

DEFAULT_ENDPOINT = "https://api.groq.com/openai/v1/chat/completions"

BACKEND_KINDS = ("live", "replay", "record")


@dataclass
class RunConfig:
    """Resolved extract-run settings (config file merged with CLI flags)."""

    input_rfc: Path
    protocol: str = "unknown"
    backend: str = "replay"
    replay_store: Path | None = None
    output_dir: Path = Path("out")
    eval_mode: str = evaluator.MODE_TRIPLE
    endpoint_url: str = DEFAULT_ENDPOINT
    model_id: str = llm_backend.DEFAULT_MODEL_ID
    max_tokens: int = llm_backend.DEFAULT_MAX_TOKENS
    temperature: float = 0.0
    retry_max: int = llm_backend.DEFAULT_RETRY_MAX
    max_chunk_chars: int = rfc_parser.DEFAULT_MAX_CHUNK_CHARS
    parallelism: int = 4
    appendix_in_context: bool = True
    templates_dir: Path | None = None

    def validate(self) -> None:
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(
                f"backend must be one of {BACKEND_KINDS}, got {self.backend!r}"
            )
        if self.backend in ("replay", "record") and self.replay_store is None:
            raise ConfigError(f"backend={self.backend} requires --replay-store")
        if self.backend in ("live", "record") and not os.environ.get(
            llm_backend.API_KEY_ENV_VAR
        ):
            raise AuthMissing(
                f"backend={self.backend} requires the "
                f"{llm_backend.API_KEY_ENV_VAR} environment variable"
            )

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            max_chunk_chars=self.max_chunk_chars,
            stage_model_ids=(self.model_id, self.model_id, self.model_id),
            parallelism=self.parallelism,
            appendix_in_context=self.appendix_in_context,
            max_tokens=self.max_tokens,
            temperature=self.temperature,
        )


_CONFIG_KEYS = {
    "input_rfc": Path,
    "protocol": str,
    "backend": str,
    "replay_store": Path,
    "output_dir": Path,
    "eval_mode": str,
    "endpoint_url": str,
    "model_id": str,
    "max_tokens": int,
    "temperature": float,
    "retry_max": int,
    "max_chunk_chars": int,
    "parallelism": int,
    "appendix_in_context": bool,
    "templates_dir": Path,
}


def load_config_file(path: Path) -> dict:
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    unknown = set(data) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
    out = {}
    for key, value in data.items():
        caster = _CONFIG_KEYS[key]
        try:
            out[key] = caster(value) if not isinstance(value, caster) else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}: {exc}") from exc
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        values.update(load_config_file(Path(args.config)))
    overrides = {
        "input_rfc": args.input,
        "protocol": args.protocol,
        "backend": args.backend,
        "replay_store": args.replay_store,
        "output_dir": args.out,
        "eval_mode": args.mode,
        "endpoint_url": args.endpoint_url,
        "model_id": args.model_id,
        "max_tokens": args.max_tokens,
        "temperature": args.temperature,
        "retry_max": args.retry_max,
        "max_chunk_chars": args.max_chunk_chars,
        "parallelism": args.parallelism,
        "templates_dir": args.templates,
    }
    for key, value in overrides.items():
        if value is not None:
            caster = _CONFIG_KEYS[key]
            values[key] = caster(value) if not isinstance(value, caster) else value
    if args.no_appendix:
        values["appendix_in_context"] = False
    if "input_rfc" not in values:
        raise ConfigError("an input RFC is required (--input or config input_rfc)")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_outputs(out_dir: Path, command: str, inputs: dict[str, Path], files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    manifest = {
        "tool": f"fsmflow {__version__}",
        "command": command,
        "inputs": {
            label: {"path": str(p), "sha256": _sha256_file(p)}
            for label, p in inputs.items()
        },
        "outputs": sorted(files),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def _parse_document(input_rfc: Path, max_chunk_chars: int):
    doc = rfc_parser.RawDocument.load(input_rfc)
    clean = rfc_parser.strip_artifacts(doc)
    tree = rfc_parser.parse_tree(clean, root_title=doc.source_name)
    chunks = rfc_parser.collect_leaf_chunks(tree, max_chunk_chars)
    appendix = rfc_parser.build_appendix(tree)
    return tree, chunks, appendix


def cmd_parse(args: argparse.Namespace) -> int:
    input_rfc = Path(args.input)
    tree, chunks, appendix = _parse_document(
        input_rfc, args.max_chunk_chars or rfc_parser.DEFAULT_MAX_CHUNK_CHARS
    )
    chunks_json = (
        json.dumps(
            [
                {"text": c.text, "path": c.path, "ordinal": c.ordinal, "part": c.part}
                for c in chunks
            ],
            indent=2,
            ensure_ascii=False,
        )
        + "\n"
    )
    _write_outputs(
        Path(args.out),
        "parse",
        {"input_rfc": input_rfc},
        {
            "tree.json": rfc_parser.tree_to_json(tree),
            "appendix.txt": appendix.render(),
            "chunks.json": chunks_json,
        },
    )
    print(f"parsed {input_rfc.name}: {len(chunks)} chunks -> {args.out}")
    return EXIT_OK


def make_backend(cfg: RunConfig) -> llm_backend.ChatBackend:
    if cfg.backend == "replay":
        return llm_backend.ReplayBackend(llm_backend.ReplayStore.load(cfg.replay_store))
    live = llm_backend.HttpChatBackend(
        cfg.endpoint_url,
        os.environ.get(llm_backend.API_KEY_ENV_VAR),
        retry_max=cfg.retry_max,
    )
    if cfg.backend == "record":
        return llm_backend.record_mode(live, cfg.replay_store)
    return live


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    backend = make_backend(cfg)
    templates = TemplateSet.load(cfg.templates_dir)

    _, chunks, appendix = _parse_document(cfg.input_rfc, cfg.max_chunk_chars)
    if not chunks:
        raise ConfigError("the document produced no chunks to process")

    rb, run_report = run_chain(
        chunks,
        appendix,
        backend,
        cfg.chain_config(),
        templates=templates,
        protocol=cfg.protocol,
    )
    fsm = fsm_model.from_rulebook_adjacency(rb)

    inputs = {"input_rfc": cfg.input_rfc}
    if cfg.backend == "replay":
        inputs["replay_store"] = cfg.replay_store
    _write_outputs(
        cfg.output_dir,
        "extract",
        inputs,
        {
            "rulebook.json": rulebook.serialize(rb),
            "fsm.json": fsm_model.export_json(fsm),
            "fsm.dot": fsm_model.export_dot(fsm),
            "run_report.json": run_report.to_json(),
        },
    )
    print(
        f"extracted {len(rb.rules)} command rules from {len(chunks)} chunks "
        f"({len(run_report.skipped_chunks)} skipped) -> {cfg.output_dir}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    extracted = fsm_model.load_gold(Path(args.extracted))
    gold = fsm_model.load_gold(Path(args.gold))
    if extracted.protocol != gold.protocol:
        print(
            f"warning: protocol mismatch ({extracted.protocol!r} vs "
            f"{gold.protocol!r}); evaluating anyway",
            file=sys.stderr,
        )
    mode = args.mode or evaluator.MODE_TRIPLE
    rep = evaluator.report(extracted, gold, mode)
    print(evaluator.render_table([(gold.protocol or "unknown", rep)]), end="")
    _write_outputs(
        Path(args.out),
        "eval",
        {"extracted": Path(args.extracted), "gold": Path(args.gold)},
        {"eval.json": rep.to_json()},
    )
    return EXIT_OK


def cmd_export_dot(args: argparse.Namespace) -> int:
    fsm = fsm_model.load_gold(Path(args.input))
    dot = fsm_model.export_dot(fsm)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(dot, encoding="utf-8")
        print(f"wrote {out_path}")
    else:
        print(dot, end="")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsmflow",
        description="Extract protocol FSMs from plain-text RFC documents.",
    )
    parser.add_argument("--version", action="version", version=f"fsmflow {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_parse = sub.add_parser("parse", help="parse an RFC into tree/appendix/chunks")
    p_parse.add_argument("--input", required=True, help="plain-text RFC file")
    p_parse.add_argument("--out", required=True, help="output directory")
    p_parse.add_argument("--max-chunk-chars", type=int, default=None)
    p_parse.set_defaults(func=cmd_parse)

    p_extract = sub.add_parser("extract", help="run the full extraction pipeline")
    p_extract.add_argument("--config", help="TOML config file; flags override it")
    p_extract.add_argument("--input", help="plain-text RFC file")
    p_extract.add_argument("--protocol", help="protocol name recorded in outputs")
    p_extract.add_argument("--backend", choices=BACKEND_KINDS)
    p_extract.add_argument("--replay-store", help="replay store JSON path")
    p_extract.add_argument("--out", help="output directory")
    p_extract.add_argument("--mode", choices=evaluator.MODES, help="eval mode recorded in config")
    p_extract.add_argument("--parallelism", type=int)
    p_extract.add_argument("--endpoint-url")
    p_extract.add_argument("--model-id")
    p_extract.add_argument("--max-tokens", type=int)
    p_extract.add_argument("--temperature", type=float)
    p_extract.add_argument("--retry-max", type=int)
    p_extract.add_argument("--max-chunk-chars", type=int)
    p_extract.add_argument("--templates", help="directory with stage1..3.txt templates")
    p_extract.add_argument(
        "--no-appendix",
        action="store_true",
        help="omit the section listing from stage-1 prompts",
    )
    p_extract.set_defaults(func=cmd_extract)

    p_eval = sub.add_parser("eval", help="score an extracted FSM against a gold FSM")
    p_eval.add_argument("extracted", help="extracted FSM JSON")
    p_eval.add_argument("gold", help="gold FSM JSON")
    p_eval.add_argument("--mode", choices=evaluator.MODES, default=None)
    p_eval.add_argument("--out", default=".", help="directory for eval.json")
    p_eval.set_defaults(func=cmd_eval)

    p_dot = sub.add_parser("export-dot", help="render an FSM JSON file as DOT")
    p_dot.add_argument("--input", required=True, help="FSM JSON file")
    p_dot.add_argument("--out", help="output file (stdout when omitted)")
    p_dot.set_defaults(func=cmd_export_dot)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        EmptyDocument,
        NoSectionsFound,
        SchemaViolation,
        DanglingState,
        ModeUnsupported,
        ConfigError,
        AuthMissing,
        FileNotFoundError,
        IsADirectoryError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RateLimited, MalformedResponse, ReplayMiss, OSError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
