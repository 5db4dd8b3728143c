"""Finite generative worlds separating meaning from wording.

A MeaningWorld draws, per context, a meaning M and then a wording C for that
meaning. Each wording realizes exactly one meaning (single-meaning
property), so the marginal wording probability factorizes as
P(C|c) = P(M(C)|c) * P(C|M(C),c) and the information decomposition
I = IW + IM holds exactly with IM = -log2 P(M(C)|c).

Worlds whose wordings double as contexts support chaining (the context for
step i is the wording emitted at step i-1), which lets a world generate
synthetic corpora with known per-clause semantic information and act as an
ideal scoring backend for end-to-end pipeline verification.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from . import corpus as corpus_mod
from .errors import (
    SingleMeaningViolation,
    UnknownSymbol,
    UnsupportedBackend,
    ValidationError,
    ZeroProbability,
)
from .infocalc import WORDING_PROMPT_HEADER, WORDING_PROMPT_SEPARATOR
from .lm_backend import TokenScore, make_scored_text

PROB_TOL = 1e-12
DECOMP_TOL = 1e-9


@dataclass(frozen=True)
class MeaningWorld:
    """context -> P(meaning), (context, meaning) -> P(wording).

    meaning_probs[c][m] and wording_probs[c][m][w] must each sum to one per
    conditioning. The wording-to-meaning map is derived from the supports
    and must be single-valued across all contexts.
    """

    contexts: tuple[str, ...]
    meanings: tuple[str, ...]
    wordings: tuple[str, ...]
    meaning_probs: dict
    wording_probs: dict
    start_context: str | None = None
    wording_meaning: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.contexts or not self.meanings or not self.wordings:
            raise ValidationError("world needs at least one context, meaning, and wording")
        w2m: dict[str, str] = {}
        for c in self.contexts:
            probs = self.meaning_probs.get(c)
            if probs is None:
                raise ValidationError(f"missing meaning distribution for context {c!r}")
            _check_distribution(probs, self.meanings, f"P(M|{c!r})")
            for m in self.meanings:
                wp = self.wording_probs.get(c, {}).get(m)
                if wp is None:
                    raise ValidationError(
                        f"missing wording distribution for context {c!r}, meaning {m!r}"
                    )
                _check_distribution(wp, self.wordings, f"P(C|{m!r},{c!r})")
                for w, p in wp.items():
                    if p <= 0:
                        continue
                    prior = w2m.get(w)
                    if prior is not None and prior != m:
                        raise SingleMeaningViolation(w, prior, m)
                    w2m[w] = m
        object.__setattr__(self, "wording_meaning", w2m)
        if self.start_context is not None and self.start_context not in self.contexts:
            raise ValidationError(f"start_context {self.start_context!r} not a known context")

    def meaning_of(self, wording: str) -> str:
        try:
            return self.wording_meaning[wording]
        except KeyError:
            raise UnknownSymbol(f"wording {wording!r} never has positive probability") from None

    def supports_chaining(self) -> bool:
        ctx = set(self.contexts)
        return (
            self.start_context is not None
            and all(w in ctx for w in self.wordings)
            and all(w and " " not in w and not w.isspace() for w in self.wordings)
        )


def _check_distribution(probs: dict, support, label: str) -> None:
    total = 0.0
    for key, p in probs.items():
        if key not in support:
            raise ValidationError(f"{label}: unknown outcome {key!r}")
        if p < 0:
            raise ValidationError(f"{label}: negative probability for {key!r}")
        total += p
    if abs(total - 1.0) > PROB_TOL:
        raise ValidationError(f"{label}: probabilities sum to {total!r}, not 1")


# ----------------------------------------------------------------------
# the decomposition itself
# ----------------------------------------------------------------------

def _require(world: MeaningWorld, context: str | None = None, wording: str | None = None,
             meaning: str | None = None) -> None:
    if context is not None and context not in world.meaning_probs:
        raise UnknownSymbol(f"unknown context {context!r}")
    if wording is not None and wording not in set(world.wordings):
        raise UnknownSymbol(f"unknown wording {wording!r}")
    if meaning is not None and meaning not in set(world.meanings):
        raise UnknownSymbol(f"unknown meaning {meaning!r}")


def marginal_wording_prob(world: MeaningWorld, wording: str, context: str) -> float:
    """P(C|c) as the explicit sum over meanings of P(M|c) P(C|M,c)."""
    _require(world, context=context, wording=wording)
    total = 0.0
    for m in world.meanings:
        pm = world.meaning_probs[context].get(m, 0.0)
        pw = world.wording_probs[context][m].get(wording, 0.0)
        total += pm * pw
    return total


def meaning_prob_via_phrasings(world: MeaningWorld, meaning: str, context: str) -> float:
    """P(M|c) recovered by summing marginals of every phrasing of M."""
    _require(world, context=context, meaning=meaning)
    total = 0.0
    for w in world.wordings:
        if world.wording_meaning.get(w) == meaning:
            total += marginal_wording_prob(world, w, context)
    return total


def decomposition_check(world: MeaningWorld, wording: str, context: str
                        ) -> tuple[float, float, float]:
    """(I, IW, IM) in bits for one wording in one context.

    IM is returned as I - IW and checked against -log2 P(M|c); any gap
    beyond float noise would mean the world violates its own factorization.
    """
    p_marginal = marginal_wording_prob(world, wording, context)
    if p_marginal <= 0.0:
        raise ZeroProbability(f"wording {wording!r} impossible in context {context!r}")
    meaning = world.meaning_of(wording)
    p_wording = world.wording_probs[context][meaning].get(wording, 0.0)
    if p_wording <= 0.0:
        raise ZeroProbability(f"wording {wording!r} impossible under meaning {meaning!r}")
    info_total = -math.log2(p_marginal)
    info_wording = -math.log2(p_wording)
    info_meaning = info_total - info_wording
    # p_marginal > 0 forces P(M|c) > 0, so the log below is always defined
    expected = -math.log2(world.meaning_probs[context].get(meaning, 0.0))
    if abs(info_meaning - expected) > DECOMP_TOL:
        raise ValidationError(
            f"decomposition broke: I-IW={info_meaning!r} but -log2 P(M|c)={expected!r}"
        )
    return info_total, info_wording, info_meaning


# ----------------------------------------------------------------------
# corpus sampling (chained contexts)
# ----------------------------------------------------------------------

def _weighted_choice(rng: random.Random, probs: dict) -> str:
    """Deterministic cumulative draw over sorted outcomes."""
    u = rng.random()
    acc = 0.0
    items = sorted((k, p) for k, p in probs.items() if p > 0)
    for key, p in items:
        acc += p
        if u < acc:
            return key
    return items[-1][0]


def sample_corpus(
    world: MeaningWorld,
    n_narratives: int,
    length: int,
    seed: int,
) -> tuple[list, list[tuple[str, int, float]]]:
    """Sample narratives of wordings plus ground-truth semantic information.

    The context for clause i is the wording of clause i-1 (the start context
    for clause 1), so the world must support chaining. Ground truth per
    clause is -log2 P(M_i | c_i), always non-negative.
    """
    if not world.supports_chaining():
        raise ValidationError(
            "world does not support chained contexts "
            "(needs start_context and every wording usable as a context)"
        )
    rng = random.Random(seed)
    narratives = []
    truth: list[tuple[str, int, float]] = []
    for k in range(n_narratives):
        nid = f"synth{k:03d}"
        context = world.start_context
        texts = []
        for i in range(1, length + 1):
            meaning = _weighted_choice(rng, world.meaning_probs[context])
            wording = _weighted_choice(rng, world.wording_probs[context][meaning])
            truth.append((nid, i, -math.log2(world.meaning_probs[context][meaning])))
            texts.append(wording)
            context = wording
        narratives.append(corpus_mod.make_narrative(nid, texts))
    return narratives, truth


def write_truth(path: str, truth) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["narrative_id", "clause_num", "IM_bits"])
        for nid, idx, im in truth:
            writer.writerow([nid, idx, repr(im)])


# ----------------------------------------------------------------------
# ideal backend reading probabilities straight from the world
# ----------------------------------------------------------------------

class WorldBackend:
    """Scoring backend whose probabilities come from a MeaningWorld.

    Plain text is a space-joined wording sequence scored with chained
    contexts. A wording prompt (header + rephrasing + --- + original) fixes
    each original clause's meaning through the aligned rephrased wording, so
    those tokens score P(C|M,c) instead of the marginal. Prompt scaffolding
    before the original carries zero information and stays outside every
    clause span.
    """

    def __init__(self, world: MeaningWorld, backend_id: str = "world-oracle"):
        if not world.supports_chaining():
            raise ValidationError("WorldBackend needs a chaining-capable world")
        self.world = world
        self.backend_id = backend_id

    def score(self, text: str):
        if not text:
            raise ValidationError("text is empty")
        if text.startswith(WORDING_PROMPT_HEADER) and WORDING_PROMPT_SEPARATOR in text:
            return self._score_wording_prompt(text)
        tokens = self._sequence_tokens(text, byte_base=0, meanings=None)
        return make_scored_text(text, tokens, self.backend_id)

    def score_continuation(self, context: str, continuation: str):
        if not continuation:
            raise ValidationError("continuation is empty")
        full = context + continuation
        scored = self.score(full)
        ctx_bytes = len(context.encode("utf-8"))
        kept = [t for t in scored.tokens if t.end > ctx_bytes]
        return make_scored_text(full, kept, self.backend_id, scored_from=kept[0].start)

    def _split_wordings(self, text: str) -> list[str]:
        parts = text.split(corpus_mod.PLAIN_SEPARATOR)
        for p in parts:
            if p not in self.world.wording_meaning:
                raise UnknownSymbol(f"text fragment {p!r} is not a known wording")
        return parts

    def _sequence_tokens(self, text: str, byte_base: int, meanings) -> list[TokenScore]:
        """Tokens for a wording sequence: wording k plus its leading space.

        meanings, when given, fixes the meaning of position k so the token
        scores P(C|M,c); beyond its length the marginal is used.
        """
        parts = self._split_wordings(text)
        tokens = []
        context = self.world.start_context
        pos = byte_base
        for k, wording in enumerate(parts):
            tok_text = wording if k == 0 else corpus_mod.PLAIN_SEPARATOR + wording
            width = len(tok_text.encode("utf-8"))
            if meanings is not None and k < len(meanings):
                meaning = meanings[k]
                p = self.world.wording_probs[context][meaning].get(wording, 0.0)
            else:
                p = marginal_wording_prob(self.world, wording, context)
            if p <= 0.0:
                raise ZeroProbability(
                    f"wording {wording!r} impossible at position {k + 1}"
                )
            tokens.append(
                TokenScore(tok_text, pos, pos + width, -math.log2(p))
            )
            pos += width
            context = wording
        return tokens

    def _score_wording_prompt(self, text: str):
        body = text[len(WORDING_PROMPT_HEADER):]
        rephrased_text, original_text = body.rsplit(WORDING_PROMPT_SEPARATOR, 1)
        rephrased = self._split_wordings(rephrased_text)
        meanings = [self.world.meaning_of(w) for w in rephrased]
        prefix = WORDING_PROMPT_HEADER + rephrased_text + WORDING_PROMPT_SEPARATOR
        prefix_bytes = len(prefix.encode("utf-8"))
        # one zero-information filler token for the scaffolding
        scaffold = TokenScore(prefix, 0, prefix_bytes, 0.0)
        tokens = [scaffold] + self._sequence_tokens(
            original_text, byte_base=prefix_bytes, meanings=meanings
        )
        return make_scored_text(text, tokens, self.backend_id)

    def generate(self, messages, temperature: float = 0.0, max_tokens: int = 4096) -> str:
        """Answer rephrase and summary prompts deterministically.

        A rephrasing swaps each wording for the next one (sorted order,
        cyclic) realizing the same meaning, which preserves meaning exactly.
        """
        content = "\n".join(c for _, c in messages)
        if "Part to paraphrase: '''" in content:
            part = content.split("Part to paraphrase: '''", 1)[1].rsplit("'''", 1)[0]
            lines = []
            for line in part.splitlines():
                num, _, wording = line.partition(". ")
                lines.append(f"{num}. {self._alternate(wording)}")
            return "\n".join(lines)
        if content.startswith("Summarize the following part of a narrative"):
            return "The narrative continues through the listed events."
        raise UnsupportedBackend("world backend only answers rephrase and summary prompts")

    def _alternate(self, wording: str) -> str:
        meaning = self.world.meaning_of(wording)
        peers = sorted(w for w, m in self.world.wording_meaning.items() if m == meaning)
        return peers[(peers.index(wording) + 1) % len(peers)]


# ----------------------------------------------------------------------
# declarative world files and random instances
# ----------------------------------------------------------------------

def world_to_dict(world: MeaningWorld) -> dict:
    return {
        "contexts": list(world.contexts),
        "meanings": list(world.meanings),
        "wordings": list(world.wordings),
        "start_context": world.start_context,
        "meaning_probs": world.meaning_probs,
        "wording_probs": world.wording_probs,
    }


def world_from_dict(data: dict) -> MeaningWorld:
    try:
        return MeaningWorld(
            contexts=tuple(data["contexts"]),
            meanings=tuple(data["meanings"]),
            wordings=tuple(data["wordings"]),
            meaning_probs=data["meaning_probs"],
            wording_probs=data["wording_probs"],
            start_context=data.get("start_context"),
        )
    except KeyError as exc:
        raise ValidationError(f"world file missing key {exc}") from None


def save_world(world: MeaningWorld, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world_to_dict(world), f, indent=2, sort_keys=True)
        f.write("\n")


def load_world(path: str) -> MeaningWorld:
    with open(path, encoding="utf-8") as f:
        return world_from_dict(json.load(f))


def random_world(
    rng: random.Random,
    n_contexts: int = 4,
    n_meanings: int = 3,
    max_wordings_per_meaning: int = 3,
    chained: bool = False,
) -> MeaningWorld:
    """Randomized world; with chained=True the wordings double as contexts."""
    meanings = [f"m{i}" for i in range(n_meanings)]
    wording_pool = []
    meaning_of = {}
    for i, m in enumerate(meanings):
        n_w = rng.randint(1, max_wordings_per_meaning)
        for j in range(n_w):
            w = f"w{i}_{j}"
            wording_pool.append(w)
            meaning_of[w] = m

    if chained:
        contexts = ["start"] + wording_pool
        start = "start"
    else:
        contexts = [f"c{i}" for i in range(n_contexts)]
        start = None

    def normalized(keys):
        weights = [rng.random() + 0.05 for _ in keys]
        total = sum(weights)
        return {k: w / total for k, w in zip(keys, weights)}

    meaning_probs = {c: normalized(meanings) for c in contexts}
    wording_probs = {}
    for c in contexts:
        per_meaning = {}
        for m in meanings:
            support = [w for w in wording_pool if meaning_of[w] == m]
            per_meaning[m] = normalized(support)
        wording_probs[c] = per_meaning
    return MeaningWorld(
        contexts=tuple(contexts),
        meanings=tuple(meanings),
        wordings=tuple(wording_pool),
        meaning_probs=meaning_probs,
        wording_probs=wording_probs,
        start_context=start,
    )
