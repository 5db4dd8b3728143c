"""Exception taxonomy.

Two branches matter for exit codes: ValidationError (bad inputs, schema or
contract violations, CLI exit 2) and BackendError (network, endpoint, or
model-output failures, CLI exit 3).
"""

from __future__ import annotations


class MeaningBitsError(Exception):
    """Base class for all package errors."""


class ValidationError(MeaningBitsError):
    """Input, schema, or contract violation."""


class BackendError(MeaningBitsError):
    """Failure of a probability/generation backend or its responses."""


# corpus ---------------------------------------------------------------

class MissingColumn(ValidationError):
    def __init__(self, column: str, path: str = ""):
        self.column = column
        self.path = path
        super().__init__(f"missing required column {column!r}" + (f" in {path}" if path else ""))


class NonContiguousClauseNumbers(ValidationError):
    def __init__(self, narrative_id: str, expected: int, found: int):
        self.narrative_id = narrative_id
        self.expected = expected
        self.found = found
        super().__init__(
            f"narrative {narrative_id!r}: expected clause_num {expected}, found {found}"
        )


class EmptyClauseText(ValidationError):
    def __init__(self, narrative_id: str, clause_num: int):
        self.narrative_id = narrative_id
        self.clause_num = clause_num
        super().__init__(f"narrative {narrative_id!r}: clause {clause_num} has empty text")


class DuplicateNarrativeId(ValidationError):
    def __init__(self, narrative_id: str):
        self.narrative_id = narrative_id
        super().__init__(f"duplicate narrative id {narrative_id!r}")


class EmptyContext(ValidationError):
    pass


# lm_backend -----------------------------------------------------------

class ContextOverflow(BackendError):
    def __init__(self, token_count: int, limit: int):
        self.token_count = token_count
        self.limit = limit
        super().__init__(f"prompt of {token_count} tokens exceeds context limit {limit}")


class EndpointError(BackendError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        self.body = body[:500]
        super().__init__(f"endpoint returned status {status}: {self.body}")


class TokenCoverageMismatch(BackendError):
    """Token byte ranges fail to tile the scored text."""


class UnsupportedBackend(BackendError):
    pass


class EmptyTraining(ValidationError):
    pass


class UnknownSymbol(ValidationError):
    """Character or wording outside the model's alphabet/vocabulary."""


# align ----------------------------------------------------------------

class TextMismatch(ValidationError):
    pass


class EmptyClauseTokens(ValidationError):
    def __init__(self, clause_index: int):
        self.clause_index = clause_index
        super().__init__(f"no tokens attributed to clause {clause_index}")


class RangeOutOfBounds(ValidationError):
    pass


# infocalc -------------------------------------------------------------

class EmptyInput(ValidationError):
    pass


class ClauseCountMismatch(ValidationError):
    def __init__(self, expected: int, found: int, narrative_id: str = ""):
        self.expected = expected
        self.found = found
        self.narrative_id = narrative_id
        super().__init__(
            (f"narrative {narrative_id!r}: " if narrative_id else "")
            + f"expected {expected} clauses, found {found}"
        )


class LengthMismatch(ValidationError):
    pass


class IncompleteRecords(ValidationError):
    pass


# rephrase -------------------------------------------------------------

class EmptyPart(ValidationError):
    pass


class UnparseableNumbering(BackendError):
    def __init__(self, chunk: int, line: str):
        self.chunk = chunk
        self.line = line
        super().__init__(f"chunk {chunk}: cannot parse numbered clause from line {line!r}")


# predictability -------------------------------------------------------

class EmptyRecords(ValidationError):
    pass


class EmptyPrefix(ValidationError):
    pass


class FormatNotFound(BackendError):
    """Continuation response lacks the mandated output format."""


class VerdictNotFound(BackendError):
    """Judgment response lacks the mandated True/False marker."""


# synthworld -----------------------------------------------------------

class SingleMeaningViolation(ValidationError):
    def __init__(self, wording: str, meaning_a: str, meaning_b: str):
        self.wording = wording
        super().__init__(
            f"wording {wording!r} has positive probability under meanings "
            f"{meaning_a!r} and {meaning_b!r}"
        )


class ZeroProbability(ValidationError):
    pass


# report ---------------------------------------------------------------

class AlignmentMismatch(ValidationError):
    pass
