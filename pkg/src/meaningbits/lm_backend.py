"""Token-level conditional information backends.

Two backends share one contract: return one TokenScore per model token, with
info_bits = -log2 P(token | preceding tokens) and half-open UTF-8 byte ranges
that tile the scored text.

* NgramBackend: a Laplace-smoothed character n-gram. One character is one
  token, every probability is exactly enumerable, which makes it the
  verification oracle for all downstream information arithmetic.
* RemoteBackend: a completions-style HTTP client ({model, prompt, echo,
  logprobs, max_tokens: 0}) for inference servers that can score a given
  prompt. Responses are cached on disk keyed by (backend_id, sha256(text)).

A begin-of-text token, when the server emits one, carries no probability and
is dropped from the result.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field

from .errors import (
    ContextOverflow,
    EmptyTraining,
    EndpointError,
    TokenCoverageMismatch,
    UnknownSymbol,
    UnsupportedBackend,
    ValidationError,
)

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class TokenScore:
    """One scored token: its text, byte range, and information in bits."""

    text: str
    start: int
    end: int
    info_bits: float

    @property
    def byte_range(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class ScoredText:
    """A text with per-token information content.

    tokens tile the byte range [scored_from, len(text_bytes)); scored_from is
    nonzero only for continuation scoring, where conditioning tokens before
    the continuation are not reported. total_bits accumulates info_bits in
    token order.
    """

    text: str
    tokens: tuple[TokenScore, ...]
    backend_id: str
    total_bits: float
    scored_from: int = 0


def make_scored_text(
    text: str,
    tokens: list[TokenScore] | tuple[TokenScore, ...],
    backend_id: str,
    scored_from: int = 0,
) -> ScoredText:
    """Validate token tiling and build a ScoredText with an ordered sum."""
    text_bytes = text.encode("utf-8")
    pos = scored_from
    total = 0.0
    for tok in tokens:
        if tok.start != pos or tok.end <= tok.start:
            raise TokenCoverageMismatch(
                f"token {tok.text!r} spans [{tok.start},{tok.end}), expected start {pos}"
            )
        if text_bytes[tok.start:tok.end].decode("utf-8", errors="replace") != tok.text:
            raise TokenCoverageMismatch(
                f"token text {tok.text!r} does not match bytes [{tok.start},{tok.end})"
            )
        pos = tok.end
        total += tok.info_bits
    if pos != len(text_bytes):
        raise TokenCoverageMismatch(
            f"tokens cover bytes [{scored_from},{pos}) of [{scored_from},{len(text_bytes)})"
        )
    return ScoredText(
        text=text,
        tokens=tuple(tokens),
        backend_id=backend_id,
        total_bits=total,
        scored_from=scored_from,
    )


@dataclass
class BackendConfig:
    """Configuration for either backend kind.

    remote requires endpoint_url and model_name; the API key is read from the
    environment variable named by api_key_env (never stored). raw_prompt
    records that prompts are sent without any chat template; servers that
    cannot suppress their template must be configured accordingly upstream.
    """

    kind: str = "ngram"
    endpoint_url: str | None = None
    generate_url: str | None = None
    model_name: str | None = None
    max_context_tokens: int = 8192
    request_timeout: float = 120.0
    max_parallel_requests: int = 4
    api_key_env: str | None = None
    raw_prompt: bool = True
    retry_backoff: float = 0.5
    cache_dir: str | None = None
    ngram_order: int = 3
    ngram_alpha: float = 1.0
    ngram_training_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("remote", "ngram"):
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and (not self.endpoint_url or not self.model_name):
            raise ValidationError("remote backend requires endpoint_url and model_name")
        if self.max_parallel_requests < 1:
            raise ValidationError("max_parallel_requests must be >= 1")


# ----------------------------------------------------------------------
# character n-gram model
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class NgramModel:
    """Laplace-smoothed character model conditioning on the previous
    `order` characters.

    Counts are collected only for contexts of exactly `order` characters;
    any other context (shorter, at the start of a text, or unseen) falls
    back to the smoothed zero-count distribution, which is uniform over the
    alphabet. P(ch|ctx) = (count + alpha) / (total + alpha * |alphabet|),
    so every probability is positive and each conditional sums to one.
    """

    order: int
    alphabet: tuple[str, ...]
    counts: dict = field(repr=False)
    alpha: float = 1.0
    _totals: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValidationError(f"order must be >= 1, got {self.order}")
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if not self.alphabet:
            raise ValidationError("alphabet is empty")
        object.__setattr__(
            self, "_totals", {ctx: sum(tbl.values()) for ctx, tbl in self.counts.items()}
        )
        object.__setattr__(self, "_alphabet_lookup", frozenset(self.alphabet))

    def prob(self, ch: str, context: str) -> float:
        if ch not in self._alphabet_lookup:
            raise UnknownSymbol(f"character {ch!r} not in model alphabet")
        ctx = context[-self.order:]
        tbl = self.counts.get(ctx)
        count = tbl.get(ch, 0) if tbl else 0
        total = self._totals.get(ctx, 0)
        return (count + self.alpha) / (total + self.alpha * len(self.alphabet))

    def info_bits(self, ch: str, context: str) -> float:
        return -math.log2(self.prob(ch, context))

    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "order": self.order,
                "alpha": self.alpha,
                "alphabet": list(self.alphabet),
                "counts": {c: dict(sorted(t.items())) for c, t in sorted(self.counts.items())},
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:10]


def train_ngram(
    training_text: str,
    order: int,
    alpha: float = 1.0,
    alphabet: set[str] | None = None,
) -> NgramModel:
    """Count all length-`order` contexts in the training text."""
    if not training_text:
        raise EmptyTraining("training text is empty")
    if order < 1:
        raise ValidationError(f"order must be >= 1, got {order}")
    if alpha <= 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    if alphabet is None:
        alphabet = set(training_text)
    else:
        missing = set(training_text) - set(alphabet)
        if missing:
            raise ValidationError(f"training characters outside alphabet: {sorted(missing)!r}")
    counts: dict[str, dict[str, int]] = {}
    for i in range(order, len(training_text)):
        ctx = training_text[i - order:i]
        ch = training_text[i]
        tbl = counts.setdefault(ctx, {})
        tbl[ch] = tbl.get(ch, 0) + 1
    return NgramModel(order=order, alphabet=tuple(sorted(alphabet)), counts=counts, alpha=alpha)


def uniform_ngram(alphabet: set[str] | str, order: int = 1, alpha: float = 1.0) -> NgramModel:
    """Model with no counts: every conditional is uniform over the alphabet."""
    return NgramModel(order=order, alphabet=tuple(sorted(set(alphabet))), counts={}, alpha=alpha)


class NgramBackend:
    """Character-token scoring backend over an NgramModel (no generation)."""

    def __init__(self, model: NgramModel, backend_id: str | None = None):
        self.model = model
        self.backend_id = backend_id or (
            f"ngram-o{model.order}-a{model.alpha:g}-{model.fingerprint()}"
        )

    def score(self, text: str) -> ScoredText:
        if not text:
            raise ValidationError("text is empty")
        return self._score_chars(text, scored_from_char=0)

    def score_continuation(self, context: str, continuation: str) -> ScoredText:
        if not continuation:
            raise ValidationError("continuation is empty")
        full = context + continuation
        return self._score_chars(full, scored_from_char=len(context))

    def _score_chars(self, text: str, scored_from_char: int) -> ScoredText:
        tokens = []
        byte_pos = len(text[:scored_from_char].encode("utf-8"))
        for i in range(scored_from_char, len(text)):
            ch = text[i]
            width = len(ch.encode("utf-8"))
            bits = self.model.info_bits(ch, text[:i])
            tokens.append(TokenScore(text=ch, start=byte_pos, end=byte_pos + width, info_bits=bits))
            byte_pos += width
        return make_scored_text(text, tokens, self.backend_id, scored_from=tokens[0].start)

    def generate(self, messages, temperature: float = 0.0, max_tokens: int = 1024) -> str:
        raise UnsupportedBackend("ngram backend cannot generate chat completions")


# ----------------------------------------------------------------------
# disk cache
# ----------------------------------------------------------------------

class ScoreCache:
    """Per-text ScoredText cache: cache/<backend_id>/<sha256>.json.

    Writes are atomic (temp file + rename) and serialized per store, so
    concurrent scorers can share one cache directory.
    """

    def __init__(self, root: str):
        self.root = root
        self._write_lock = threading.Lock()

    def _path(self, backend_id: str, text: str) -> str:
        safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in backend_id)
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return os.path.join(self.root, safe, digest + ".json")

    def get(self, backend_id: str, text: str) -> ScoredText | None:
        path = self._path(backend_id, text)
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            log.warning("discarding unreadable cache entry %s", path)
            return None
        try:
            if data.get("text") != text:
                return None
            tokens = [TokenScore(t[0], t[1], t[2], t[3]) for t in data["tokens"]]
            return make_scored_text(text, tokens, data["backend_id"], data.get("scored_from", 0))
        except (KeyError, TypeError, IndexError, TokenCoverageMismatch):
            log.warning("discarding malformed cache entry %s", path)
            return None

    def put(self, scored: ScoredText) -> None:
        path = self._path(scored.backend_id, scored.text)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        payload = {
            "text": scored.text,
            "backend_id": scored.backend_id,
            "scored_from": scored.scored_from,
            "total_bits": scored.total_bits,
            "tokens": [[t.text, t.start, t.end, t.info_bits] for t in scored.tokens],
        }
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as f:
                    json.dump(payload, f)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


# ----------------------------------------------------------------------
# remote completions client
# ----------------------------------------------------------------------

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class RemoteBackend:
    """HTTP client for completions endpoints that can score a given prompt.

    Request: {model, prompt, max_tokens: 0, echo: true, logprobs: 0}.
    Response: choices[0].logprobs with tokens, token_logprobs (natural log),
    and text_offset (character offsets into the prompt). Token byte ranges
    are derived from the offsets; a leading token with null logprob (the
    begin-of-text marker) is dropped.
    """

    def __init__(self, config: BackendConfig, session=None):
        if config.kind != "remote":
            raise ValidationError("RemoteBackend requires kind='remote'")
        self.config = config
        self.backend_id = config.model_name
        self.cache = ScoreCache(config.cache_dir) if config.cache_dir else None
        self._sem = threading.BoundedSemaphore(config.max_parallel_requests)
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    # -- raw HTTP ------------------------------------------------------

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, url: str, payload: dict, attempts: int = 3) -> dict:
        import requests

        last_exc: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.config.retry_backoff * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = self._session.post(
                        url,
                        json=payload,
                        headers=self._headers(),
                        timeout=self.config.request_timeout,
                    )
            except requests.RequestException as exc:
                last_exc = EndpointError(0, f"request failed: {exc}")
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError:
                    raise EndpointError(200, f"non-JSON response: {resp.text[:200]}")
            body = resp.text
            if resp.status_code == 400 and "context" in body.lower():
                raise ContextOverflow(-1, self.config.max_context_tokens)
            last_exc = EndpointError(resp.status_code, body)
            if resp.status_code not in RETRYABLE_STATUS:
                break
        assert last_exc is not None
        raise last_exc

    # -- scoring -------------------------------------------------------

    def score(self, text: str) -> ScoredText:
        if not text:
            raise ValidationError("text is empty")
        if self.cache is not None:
            hit = self.cache.get(self.backend_id, text)
            if hit is not None:
                return hit
        payload = {
            "model": self.config.model_name,
            "prompt": text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        data = self._post(self.config.endpoint_url, payload)
        scored = self._parse_scored(text, data)
        if self.cache is not None:
            self.cache.put(scored)
        return scored

    def _parse_scored(self, text: str, data: dict) -> ScoredText:
        try:
            choice = data["choices"][0]
            lp = choice["logprobs"]
            token_texts = lp["tokens"]
            logprobs = lp["token_logprobs"]
            offsets = lp.get("text_offset")
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(200, f"malformed logprobs payload: {exc}")
        if len(token_texts) != len(logprobs):
            raise EndpointError(200, "tokens and token_logprobs length mismatch")
        if len(token_texts) > self.config.max_context_tokens:
            raise ContextOverflow(len(token_texts), self.config.max_context_tokens)

        # leading tokens without a probability play the begin-of-text role
        n_lead = 0
        while n_lead < len(logprobs) and logprobs[n_lead] is None:
            n_lead += 1
        kept_texts = token_texts[n_lead:]
        kept_logprobs = logprobs[n_lead:]
        if not kept_texts:
            raise EndpointError(200, "no scored tokens in response")
        if any(value is None for value in kept_logprobs):
            raise EndpointError(200, "null logprob for non-initial token")

        text_bytes = text.encode("utf-8")
        # Character offsets from the server are converted to byte offsets.
        if offsets is not None:
            byte_of = _char_to_byte_table(text)
            starts = []
            for off in offsets[n_lead:]:
                if not 0 <= off <= len(text):
                    raise TokenCoverageMismatch(f"text_offset {off} outside prompt")
                starts.append(byte_of[off])
        else:
            starts = []
            pos = 0
            for t in kept_texts:
                starts.append(pos)
                pos += len(t.encode("utf-8"))

        tokens: list[TokenScore] = []
        for i, logprob in enumerate(kept_logprobs):
            start = starts[i]
            end = starts[i + 1] if i + 1 < len(starts) else len(text_bytes)
            tok_str = text_bytes[start:end].decode("utf-8", errors="replace")
            tokens.append(TokenScore(tok_str, start, end, -float(logprob) / LOG2))
        return make_scored_text(text, tokens, self.backend_id, scored_from=tokens[0].start)

    def score_continuation(self, context: str, continuation: str) -> ScoredText:
        if not continuation:
            raise ValidationError("continuation is empty")
        full = context + continuation
        scored = self.score(full)
        ctx_bytes = len(context.encode("utf-8"))
        kept = [t for t in scored.tokens if _belongs_to_continuation(t, ctx_bytes)]
        if not kept:
            raise TokenCoverageMismatch("no tokens attributed to the continuation")
        return make_scored_text(full, kept, self.backend_id, scored_from=kept[0].start)

    # -- generation ----------------------------------------------------

    def generate(self, messages, temperature: float = 0.0, max_tokens: int = 4096) -> str:
        if not messages:
            raise ValidationError("messages is empty")
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": role, "content": content} for role, content in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        url = self.config.generate_url or self.config.endpoint_url
        data = self._post(url, payload)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(200, f"malformed chat completion payload: {exc}")


def _char_to_byte_table(text: str) -> list[int]:
    """byte_of[i] = UTF-8 byte offset of character i (with end sentinel)."""
    table = [0] * (len(text) + 1)
    pos = 0
    for i, ch in enumerate(text):
        table[i] = pos
        pos += len(ch.encode("utf-8"))
    table[len(text)] = pos
    return table


def _belongs_to_continuation(tok: TokenScore, ctx_bytes: int) -> bool:
    """Boundary rule: a token opens the continuation if its first
    non-whitespace byte lies there; all-whitespace tokens follow their end."""
    offset = _first_non_ws_byte(tok)
    if offset is None:
        return tok.end > ctx_bytes
    return offset >= ctx_bytes


def _first_non_ws_byte(tok: TokenScore) -> int | None:
    pos = tok.start
    for ch in tok.text:
        if not ch.isspace():
            return pos
        pos += len(ch.encode("utf-8"))
    return None


# ----------------------------------------------------------------------
# config-driven entry points
# ----------------------------------------------------------------------

def make_backend(cfg: BackendConfig):
    """Instantiate the backend described by a config."""
    if cfg.kind == "remote":
        return RemoteBackend(cfg)
    if not cfg.ngram_training_path:
        raise ValidationError("ngram backend requires ngram_training_path")
    with open(cfg.ngram_training_path, encoding="utf-8") as f:
        training = f.read()
    return NgramBackend(train_ngram(training, cfg.ngram_order, cfg.ngram_alpha))


def resolve_backend(cfg):
    """Accept either a ready backend object or a BackendConfig."""
    if isinstance(cfg, BackendConfig):
        return make_backend(cfg)
    return cfg


def score(text: str, cfg) -> ScoredText:
    return resolve_backend(cfg).score(text)


def score_continuation(context: str, continuation: str, cfg) -> ScoredText:
    return resolve_backend(cfg).score_continuation(context, continuation)


def generate(messages, cfg, temperature: float = 0.0, max_tokens: int = 4096) -> str:
    return resolve_backend(cfg).generate(messages, temperature=temperature, max_tokens=max_tokens)
