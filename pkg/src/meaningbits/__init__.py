"""Estimate total, wording, and semantic information per narrative clause.

Total information of a clause is the summed token information given the
preceding text. Wording information conditions the same tokens on a
meaning-preserving rephrasing of the narrative; semantic information is
the difference, measuring bits carried by the clause's meaning rather
than its phrasing.
"""

from .align import ClauseTokenMap, align_clauses, clause_bits
from .corpus import (
    Clause,
    CorpusManifest,
    Narrative,
    attach_initial_context,
    canonical_text,
    load_corpus,
    make_narrative,
)
from .infocalc import (
    ClauseInfoRecord,
    NarrativeInfoProfile,
    build_wording_prompt,
    partial_wording_info,
    profile,
    semantic_info,
    semantic_records,
    total_info,
    wording_info,
)
from .lm_backend import (
    BackendConfig,
    NgramBackend,
    NgramModel,
    RemoteBackend,
    ScoredText,
    TokenScore,
    make_backend,
    score,
    score_continuation,
    train_ngram,
    uniform_ngram,
)
from .predictability import (
    BinSpec,
    PredictionTrial,
    build_continuation_prompt,
    build_judgment_prompt,
    parse_continuation,
    parse_judgment,
    stratified_sample,
)
from .rephrase import (
    ChunkPlan,
    RephrasingBundle,
    build_rephrase_prompt,
    generate_rephrasing,
    plan_chunks,
    second_rephrasing,
)
from .report import (
    DeviationStats,
    RunManifest,
    consistency_stats,
    emit_outputs,
    model_comparison_stats,
    position_average,
)
from .synthworld import (
    MeaningWorld,
    WorldBackend,
    decomposition_check,
    marginal_wording_prob,
    meaning_prob_via_phrasings,
    sample_corpus,
)

__version__ = "0.1.0"
