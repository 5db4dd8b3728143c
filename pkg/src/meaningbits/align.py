"""Map scored tokens to clauses and aggregate per-clause information.

Attribution rule: a token belongs to the clause containing its first
non-whitespace byte. Tokens made only of separator bytes between clauses are
attributed forward to the following clause, matching tokenizers that merge
the leading space into the next word. Tokens before the first clause span
(prompt or context material) stay unattributed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import EmptyClauseTokens, RangeOutOfBounds, TextMismatch
from .lm_backend import ScoredText, _first_non_ws_byte

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClauseTokenMap:
    """Half-open range of token ordinals attributed to one clause."""

    clause_index: int
    token_start: int
    token_end: int
    narrative_id: str = ""

    @property
    def token_range(self) -> tuple[int, int]:
        return (self.token_start, self.token_end)


def align_clauses(
    scored: ScoredText,
    spans: list[tuple[int, int]],
    narrative_id: str = "",
) -> list[ClauseTokenMap]:
    """Attribute each scored token to a clause given clause byte spans.

    spans must come from the very text that was scored (already shifted by
    any prompt prefix). Every clause must end up with at least one token.
    """
    if not spans:
        raise TextMismatch("no clause spans given")
    text_len = len(scored.text.encode("utf-8"))
    prev_end = -1
    for start, end in spans:
        if not (0 <= start < end <= text_len):
            raise TextMismatch(f"span ({start}, {end}) outside scored text of {text_len} bytes")
        if start < prev_end:
            raise TextMismatch(f"span ({start}, {end}) overlaps or disorders previous span")
        prev_end = end

    assignments: list[int | None] = []
    for tok in scored.tokens:
        anchor = _first_non_ws_byte(tok)
        if anchor is None:
            anchor = tok.start  # separator-only token
        clause = _containing_clause(spans, anchor)
        if clause is None:
            # separator or numbering bytes between clauses go forward
            clause = _following_clause(spans, anchor)
        overlapped = sum(1 for s, e in spans if tok.start < e and tok.end > s)
        if overlapped > 1:
            log.warning(
                "token %r at [%d,%d) spans bytes of %d clauses; attributed to clause %s",
                tok.text, tok.start, tok.end, overlapped,
                clause + 1 if clause is not None else "<none>",
            )
        assignments.append(clause)

    maps: list[ClauseTokenMap] = []
    for ci in range(len(spans)):
        ordinals = [i for i, a in enumerate(assignments) if a == ci]
        if not ordinals:
            raise EmptyClauseTokens(ci + 1)
        if ordinals != list(range(ordinals[0], ordinals[-1] + 1)):
            raise TextMismatch(f"tokens of clause {ci + 1} are not contiguous")
        maps.append(
            ClauseTokenMap(
                clause_index=ci + 1,
                token_start=ordinals[0],
                token_end=ordinals[-1] + 1,
                narrative_id=narrative_id,
            )
        )
    return maps


def _containing_clause(spans, byte_pos: int) -> int | None:
    for ci, (start, end) in enumerate(spans):
        if start <= byte_pos < end:
            return ci
    return None


def _following_clause(spans, byte_pos: int) -> int | None:
    """First clause starting at or after byte_pos, unless the position
    precedes clause 1 (context material stays unattributed)."""
    if byte_pos < spans[0][0]:
        return None
    for ci, (start, _end) in enumerate(spans):
        if start >= byte_pos:
            return ci
    return None


def clause_bits(scored: ScoredText, m: ClauseTokenMap) -> float:
    """Sum token information over a clause's token range, in order."""
    if not (0 <= m.token_start < m.token_end <= len(scored.tokens)):
        raise RangeOutOfBounds(
            f"token range [{m.token_start},{m.token_end}) invalid for "
            f"{len(scored.tokens)} tokens"
        )
    total = 0.0
    for tok in scored.tokens[m.token_start:m.token_end]:
        total += tok.info_bits
    return total
