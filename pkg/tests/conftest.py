"""Shared fixtures: checked-in FTP excerpt, replay stores, parsed pipeline inputs."""

from __future__ import annotations

from pathlib import Path

import pytest

from fsmflow.llm_backend import ReplayBackend, ReplayStore
from fsmflow.rfc_parser import (
    RawDocument,
    build_appendix,
    collect_leaf_chunks,
    parse_tree,
    strip_artifacts,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def ftp_excerpt_path() -> Path:
    return FIXTURES / "ftp_excerpt.txt"


@pytest.fixture(scope="session")
def ftp_excerpt_doc(ftp_excerpt_path) -> RawDocument:
    return RawDocument.load(ftp_excerpt_path)


@pytest.fixture(scope="session")
def ftp_pipeline(ftp_excerpt_doc):
    """(tree, chunks, appendix) for the bundled excerpt."""
    clean = strip_artifacts(ftp_excerpt_doc)
    tree = parse_tree(clean, root_title=ftp_excerpt_doc.source_name)
    return tree, collect_leaf_chunks(tree), build_appendix(tree)


@pytest.fixture(scope="session")
def replay_store_path() -> Path:
    return FIXTURES / "replay_ftp.json"


@pytest.fixture(scope="session")
def corrupt_store_path() -> Path:
    return FIXTURES / "replay_ftp_corrupt.json"


@pytest.fixture()
def replay_backend(replay_store_path) -> ReplayBackend:
    return ReplayBackend(ReplayStore.load(replay_store_path))
