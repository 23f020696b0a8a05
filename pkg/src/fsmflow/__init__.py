"""fsmflow: finite-state machine extraction from plain-text RFC documents.

The pipeline parses an RFC into a section tree, runs a three-stage prompt
chain over its leaf chunks against a chat-completion backend, merges the
per-command rules into a rulebook, derives a command-adjacency FSM, and can
score the result against a gold reference FSM.
"""

__version__ = "0.1.0"
