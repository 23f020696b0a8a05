"""Regenerate the checked-in FTP-excerpt fixtures.

Run from the repo root:

    python tests/fixtures/regen.py

Writes, next to this script:
  ftp_excerpt.txt        paginated input document
  expected_tree.json     frozen parse_tree output
  expected_appendix.txt  frozen appendix listing
  expected_chunks.json   frozen chunk list
  replay_ftp.json        recorded chain session (scripted responses)
  replay_ftp_corrupt.json  same store with chunk 2's stage-1 reply ruined

The replay store is produced by running the real chain against a scripted
backend wrapped in record mode, so fingerprints always match the prompts the
pipeline actually builds. test_fixture_sync keeps the files honest.
"""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path

from fsmflow.llm_backend import CompletionRequest, CompletionResponse, record_mode
from fsmflow.prompt_chain import SYSTEM_PROMPTS, ChainConfig, run_chain
from fsmflow.rfc_parser import (
    RawDocument,
    build_appendix,
    collect_leaf_chunks,
    parse_tree,
    strip_artifacts,
    tree_to_json,
)

FIXTURE_DIR = Path(__file__).parent

FOOTER = "Example                                                         [Page {n}]"
HEADER = "RFC 9959          Simple File Transfer Commands             January 2026"

# Page bodies; breaks fall on paragraph boundaries, as RFC formatters do.
PAGE_1 = """\
Network Working Group                                        J. Example
Request for Comments: 9959                                 Example Labs
Category: Informational                                    January 2026

          Core Command Set for a Simple File Transfer Service

Status of This Memo

   This memo catalogs the core command set of a simple file transfer
   service for interoperability testing.  Distribution of this memo is
   unlimited.

1. Introduction

   This document summarizes the commands a minimal client uses to move
   files between hosts.  The service separates control and data
   functions: commands travel over the control connection, while file
   content travels over a separate data connection.

   Nothing in this section defines a command; later sections give the
   authoritative definitions.

2. Commands

2.1 Access Control Commands

   The commands in this section establish and end a session.

   CONNECT

      The CONNECT action opens the control connection to the server.
      It is the entry point of every session: no command can precede
      it.  After the connection is open, the client normally sends
      USER as its first command.

   USER

      The USER command carries the user name that identifies the
      client to the server.  It is normally the first command after
      CONNECT, and it must be followed by PASS to complete the login.

   PASS

      The PASS command carries the user's password, completing the
      identification started by USER.  It cannot be used at an
      arbitrary time: it must immediately follow the USER command.
      After PASS succeeds the user is logged in, and commands such as
      RETR, TYPE, and PORT become available.
"""

PAGE_2 = """\
   QUIT

      The QUIT command terminates the session and closes the control
      connection.  It may follow any completed command; after QUIT the
      session ends.

2.2 Transfer Parameter Commands

   The commands in this section adjust how a transfer happens.  They
   require a logged-in user, that is, a completed USER/PASS exchange.

   PORT

      The PORT command tells the server which data port to use for the
      next transfer.  A client typically sends PORT after logging in
      with PASS and before a service command such as RETR.

   TYPE

      The TYPE command sets the representation type of transferred
      data, for example ASCII or binary.  Like PORT, it requires a
      logged-in user and commonly precedes RETR.

2.3 Service Commands

   RETR

      The RETR command asks the server to transfer a copy of the named
      file over the data connection.  The user must be logged in, and
      the client usually configures the transfer first with TYPE or
      PORT.  Another RETR may follow, or QUIT to end the session.
"""

PAGE_3 = """\
3. Typical Session Flow

   A complete session strings the commands together in a fixed shape:
   CONNECT opens the control connection, USER names the account, and
   PASS finishes authentication.  Once logged in, the client may set
   parameters with TYPE or PORT and request files with RETR.  QUIT
   closes the session.  In short, the canonical order is CONNECT,
   USER, PASS, then any mix of TYPE, PORT, and RETR, and finally QUIT.

A. Change History

   Initial version of the excerpt, prepared for parser and pipeline
   testing.
"""


def build_excerpt() -> str:
    pages = [PAGE_1, PAGE_2, PAGE_3]
    parts = []
    for i, page in enumerate(pages, start=1):
        parts.append(page)
        parts.append("\n" + FOOTER.format(n=i) + "\n")
        if i < len(pages):
            parts.append("\f" + HEADER + "\n\n")
    return "".join(parts)


def _fence(payload) -> str:
    return "```json\n" + json.dumps(payload, indent=2) + "\n```"


# Scripted stage responses, keyed by (chunk ordinal, stage).
STAGE_RESPONSES: dict[tuple[int, int], str] = {
    (0, 1): "The chunk is introductory prose and defines no commands.\n\n"
    + _fence([]),
    (1, 1): _fence(
        [
            {
                "name": "CONNECT",
                "category": "session",
                "description": "Opens the control connection to the server.",
            },
            {
                "name": "USER",
                "category": "access-control",
                "description": "Identifies the user to the server.",
            },
            {
                "name": "PASS",
                "category": "access-control",
                "description": "Sends the password to complete identification.",
            },
            {
                "name": "QUIT",
                "category": "session",
                "description": "Terminates the session.",
            },
        ]
    ),
    (1, 2): _fence(
        [
            {
                "command": "CONNECT",
                "preconditions": ["No session exists"],
                "postconditions": ["Control connection open"],
                "allowed_before": ["START"],
                "allowed_after": ["USER"],
            },
            {
                "command": "USER",
                "preconditions": ["Control connection open"],
                "postconditions": ["User name received"],
                "allowed_before": ["CONNECT"],
                "allowed_after": ["PASS"],
            },
            {
                "command": "PASS",
                "preconditions": ["USER received"],
                "postconditions": ["User logged in"],
                "allowed_before": ["USER"],
                "allowed_after": ["RETR", "TYPE", "PORT"],
            },
            {
                "command": "QUIT",
                "preconditions": [],
                "postconditions": ["Session closed"],
                "allowed_before": ["PASS", "RETR"],
                "allowed_after": ["END"],
            },
        ]
    ),
    (1, 3): "Here is the formalized rulebook fragment.\n\n"
    + _fence(
        [
            {
                "command": "CONNECT",
                "purpose": "Opens the control connection; the entry point of every session.",
                "preceding": [
                    {
                        "counterpart": "START",
                        "system_state": "No session exists.",
                        "changes_state": True,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "USER",
                        "system_state": "Control connection open.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "USER",
                "purpose": "Identifies the user; normally the first command after CONNECT.",
                "preceding": [
                    {
                        "counterpart": "CONNECT",
                        "system_state": "Control connection open.",
                        "changes_state": False,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User name received.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "PASS",
                "purpose": "Sends the password, completing the user's identification; must immediately follow USER.",
                "preceding": [
                    {
                        "counterpart": "USER",
                        "system_state": "The system must have received the USER command.",
                        "changes_state": True,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "RETR",
                        "system_state": "User must be logged in.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "TYPE",
                        "system_state": "User must be logged in.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "PORT",
                        "system_state": "User must be logged in.",
                        "changes_state": True,
                    },
                ],
            },
            {
                "command": "QUIT",
                "purpose": "Terminates the session and closes the control connection.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "Any completed command.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "RETR",
                        "system_state": "Any completed command.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "END",
                        "system_state": "Session closed.",
                        "changes_state": True,
                    }
                ],
            },
        ]
    ),
    (2, 1): _fence(
        [
            {
                "name": "PORT",
                "category": "transfer-parameter",
                "description": "Tells the server which data port to use.",
            },
            {
                "name": "TYPE",
                "category": "transfer-parameter",
                "description": "Sets the representation type of transferred data.",
            },
        ]
    ),
    (2, 2): _fence(
        [
            {
                "command": "PORT",
                "preconditions": ["User logged in"],
                "postconditions": ["Data port selected"],
                "allowed_before": ["PASS", "TYPE"],
                "allowed_after": ["RETR"],
            },
            {
                "command": "TYPE",
                "preconditions": ["User logged in"],
                "postconditions": ["Representation type set"],
                "allowed_before": ["PASS"],
                "allowed_after": ["RETR", "PORT"],
            },
        ]
    ),
    (2, 3): _fence(
        [
            {
                "command": "PORT",
                "purpose": "Selects the data port for the next transfer.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "TYPE",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "RETR",
                        "system_state": "Data port selected.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "TYPE",
                "purpose": "Sets the representation type for transfers.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "RETR",
                        "system_state": "Representation type set.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "PORT",
                        "system_state": "Representation type set.",
                        "changes_state": False,
                    },
                ],
            },
        ]
    ),
    (3, 1): _fence(
        [
            {
                "name": "RETR",
                "category": "service",
                "description": "Transfers a copy of the named file.",
            }
        ]
    ),
    (3, 2): _fence(
        [
            {
                "command": "RETR",
                "preconditions": ["User logged in"],
                "postconditions": ["File transferred"],
                "allowed_before": ["PASS", "PORT", "TYPE"],
                "allowed_after": ["RETR", "QUIT"],
            }
        ]
    ),
    (3, 3): _fence(
        [
            {
                "command": "RETR",
                "purpose": "Asks the server to transfer a copy of the named file.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "PORT",
                        "system_state": "Data port selected.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "TYPE",
                        "system_state": "Representation type set.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "RETR",
                        "system_state": "User still logged in.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "QUIT",
                        "system_state": "Transfer finished.",
                        "changes_state": True,
                    },
                ],
            }
        ]
    ),
    (4, 1): _fence(
        [
            {
                "name": "CONNECT",
                "category": "session",
                "description": "Opens the control connection.",
            },
            {
                "name": "USER",
                "category": "access-control",
                "description": "Names the account.",
            },
            {
                "name": "PASS",
                "category": "access-control",
                "description": "Finishes authentication.",
            },
            {
                "name": "TYPE",
                "category": "transfer-parameter",
                "description": "Sets transfer parameters.",
            },
            {
                "name": "PORT",
                "category": "transfer-parameter",
                "description": "Sets the data port.",
            },
            {
                "name": "RETR",
                "category": "service",
                "description": "Requests a file.",
            },
            {
                "name": "QUIT",
                "category": "session",
                "description": "Closes the session.",
            },
        ]
    ),
    # XYZZ below is a deliberate hallucination; the chain must drop it.
    (4, 2): _fence(
        [
            {
                "command": "CONNECT",
                "preconditions": [],
                "postconditions": ["Control connection open"],
                "allowed_before": ["START"],
                "allowed_after": ["USER"],
            },
            {
                "command": "USER",
                "preconditions": ["Control connection open"],
                "postconditions": ["Account named"],
                "allowed_before": ["CONNECT"],
                "allowed_after": ["PASS"],
            },
            {
                "command": "PASS",
                "preconditions": ["USER received"],
                "postconditions": ["User logged in"],
                "allowed_before": ["USER"],
                "allowed_after": ["TYPE", "PORT", "RETR", "QUIT"],
            },
            {
                "command": "XYZZ",
                "preconditions": [],
                "postconditions": [],
                "allowed_before": ["PASS"],
                "allowed_after": ["QUIT"],
            },
            {
                "command": "TYPE",
                "preconditions": ["User logged in"],
                "postconditions": ["Parameters set"],
                "allowed_before": ["PASS"],
                "allowed_after": ["PORT", "RETR"],
            },
            {
                "command": "PORT",
                "preconditions": ["User logged in"],
                "postconditions": ["Data port set"],
                "allowed_before": ["PASS", "TYPE"],
                "allowed_after": ["RETR"],
            },
            {
                "command": "RETR",
                "preconditions": ["User logged in"],
                "postconditions": ["File transferred"],
                "allowed_before": ["PASS", "TYPE", "PORT"],
                "allowed_after": ["QUIT"],
            },
            {
                "command": "QUIT",
                "preconditions": [],
                "postconditions": ["Session closed"],
                "allowed_before": ["RETR", "PASS"],
                "allowed_after": ["END"],
            },
        ]
    ),
    (4, 3): _fence(
        [
            {
                "command": "CONNECT",
                "purpose": "Opens the control connection; the entry point of every session.",
                "preceding": [
                    {
                        "counterpart": "START",
                        "system_state": "No session exists.",
                        "changes_state": True,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "USER",
                        "system_state": "Control connection open.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "USER",
                "purpose": "Names the account during the canonical login sequence.",
                "preceding": [
                    {
                        "counterpart": "CONNECT",
                        "system_state": "Control connection open.",
                        "changes_state": False,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "PASS",
                        "system_state": "Account named.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "PASS",
                "purpose": "Sends the password, completing the user's identification; must immediately follow USER.",
                "preceding": [
                    {
                        "counterpart": "USER",
                        "system_state": "The system must have received the USER command.",
                        "changes_state": True,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "TYPE",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "PORT",
                        "system_state": "User must be logged in.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "RETR",
                        "system_state": "User must be logged in.",
                        "changes_state": True,
                    },
                    {
                        "counterpart": "QUIT",
                        "system_state": "User may leave at any point.",
                        "changes_state": False,
                    },
                ],
            },
            {
                "command": "TYPE",
                "purpose": "Sets transfer parameters before a service command.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    }
                ],
                "subsequent": [
                    {
                        "counterpart": "PORT",
                        "system_state": "Parameters set.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "RETR",
                        "system_state": "Parameters set.",
                        "changes_state": True,
                    },
                ],
            },
            {
                "command": "PORT",
                "purpose": "Sets the data port before a service command.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "TYPE",
                        "system_state": "Parameters set.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "RETR",
                        "system_state": "Data port set.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "RETR",
                "purpose": "Requests a file once the session is fully set up.",
                "preceding": [
                    {
                        "counterpart": "PASS",
                        "system_state": "User must be logged in.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "TYPE",
                        "system_state": "Parameters set.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "PORT",
                        "system_state": "Data port set.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "QUIT",
                        "system_state": "Transfer finished.",
                        "changes_state": True,
                    }
                ],
            },
            {
                "command": "QUIT",
                "purpose": "Closes the session at the end of the canonical order.",
                "preceding": [
                    {
                        "counterpart": "RETR",
                        "system_state": "Transfer finished.",
                        "changes_state": False,
                    },
                    {
                        "counterpart": "PASS",
                        "system_state": "User logged in.",
                        "changes_state": False,
                    },
                ],
                "subsequent": [
                    {
                        "counterpart": "END",
                        "system_state": "Session closed.",
                        "changes_state": True,
                    }
                ],
            },
        ]
    ),
    (5, 1): _fence([]),
}

CORRUPT_ORDINAL = 2
CORRUPT_TEXT = "I'm sorry, I cannot produce structured output right now."


class ScriptedBackend:
    """Answers from STAGE_RESPONSES by locating the chunk in the prompt."""

    def __init__(self, chunks):
        self.chunks = chunks

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        stage = next(s for s, text in SYSTEM_PROMPTS.items() if text == req.system_prompt)
        if stage == 1 or stage == 2:
            ordinal = next(
                c.ordinal for c in self.chunks if c.text in req.user_prompt
            )
        else:
            ordinal = int(re.search(r'"chunk_ordinal": (\d+)', req.user_prompt).group(1))
        return CompletionResponse(
            text=STAGE_RESPONSES[(ordinal, stage)],
            model_id=req.model_id,
            latency_ms=1,
        )


def main(out_dir: Path = FIXTURE_DIR) -> int:
    excerpt = build_excerpt()
    (out_dir / "ftp_excerpt.txt").write_text(excerpt, encoding="utf-8")

    doc = RawDocument(text=excerpt, source_name="ftp_excerpt.txt")
    clean = strip_artifacts(doc)
    tree = parse_tree(clean, root_title="ftp_excerpt.txt")
    chunks = collect_leaf_chunks(tree)
    appendix = build_appendix(tree)

    (out_dir / "expected_tree.json").write_text(
        tree_to_json(tree), encoding="utf-8"
    )
    (out_dir / "expected_appendix.txt").write_text(
        appendix.render(), encoding="utf-8"
    )
    (out_dir / "expected_chunks.json").write_text(
        json.dumps(
            [
                {"text": c.text, "path": c.path, "ordinal": c.ordinal, "part": c.part}
                for c in chunks
            ],
            indent=2,
            ensure_ascii=False,
        )
        + "\n",
        encoding="utf-8",
    )

    store_path = out_dir / "replay_ftp.json"
    backend = record_mode(ScriptedBackend(chunks), store_path)
    rb, report = run_chain(
        chunks, appendix, backend, ChainConfig(parallelism=1), protocol="FTP"
    )
    assert not report.skipped_chunks, report.skipped_chunks
    assert {"USER", "PASS", "QUIT"} <= set(rb.command_names())

    store = json.loads(store_path.read_text(encoding="utf-8"))
    corrupted = 0
    for entry in store:
        if (
            entry["request"]["system"] == SYSTEM_PROMPTS[1]
            and STAGE_RESPONSES[(CORRUPT_ORDINAL, 1)] == entry["response"]["text"]
        ):
            entry["response"]["text"] = CORRUPT_TEXT
            corrupted += 1
    assert corrupted == 1, f"expected one stage-1 entry for chunk {CORRUPT_ORDINAL}"
    (out_dir / "replay_ftp_corrupt.json").write_text(
        json.dumps(store, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    print(f"wrote fixtures to {out_dir} ({len(store)} replay entries)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
