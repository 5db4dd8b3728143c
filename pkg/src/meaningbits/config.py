"""Flat key/value configuration files with environment overrides.

Lines look like ``key = value``; blank lines and ``#`` comments are
skipped. Any key can be overridden by an environment variable named
``MEANINGBITS_<KEY>`` (upper-cased). Secrets never live in the file: the
config only names the environment variable holding the API key.
"""

from __future__ import annotations

import os

from .errors import ValidationError
from .lm_backend import BackendConfig

ENV_PREFIX = "MEANINGBITS_"

_BACKEND_KEYS = {
    "kind": str,
    "endpoint_url": str,
    "generate_url": str,
    "model_name": str,
    "max_context_tokens": int,
    "request_timeout": float,
    "max_parallel_requests": int,
    "api_key_env": str,
    "raw_prompt": bool,
    "retry_backoff": float,
    "cache_dir": str,
    "ngram_order": int,
    "ngram_alpha": float,
    "ngram_training_path": str,
}


def load_config(path: str | None) -> dict[str, str]:
    """Parse the file (when given) and apply environment overrides."""
    values: dict[str, str] = {}
    if path:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                values[key.strip().lower()] = value.strip()
    for env_key, env_value in os.environ.items():
        if env_key.startswith(ENV_PREFIX):
            values[env_key[len(ENV_PREFIX):].lower()] = env_value
    return values


def _coerce(key: str, raw: str, target):
    if target is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"config key {key!r}: cannot parse boolean {raw!r}")
    try:
        return target(raw)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from None


def backend_config(values: dict[str, str], kind_override: str | None = None) -> BackendConfig:
    kwargs = {}
    for key, target in _BACKEND_KEYS.items():
        if key in values:
            kwargs[key] = _coerce(key, values[key], target)
    if kind_override:
        kwargs["kind"] = kind_override
    return BackendConfig(**kwargs)
