from __future__ import annotations

import os
import string
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from meaningbits.corpus import load_corpus
from meaningbits.lm_backend import NgramBackend, train_ngram, uniform_ngram
from meaningbits.rephrase import RephrasingBundle

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def golden(name: str) -> str:
    with open(os.path.join(GOLDEN_DIR, name), encoding="utf-8") as f:
        return f.read()


def render_messages(messages) -> str:
    """Flatten (role, content) messages the way the golden files store them."""
    return "\n".join(f"{role}: {content}" for role, content in messages)


@pytest.fixture(scope="session")
def boyscout():
    return load_corpus(os.path.join(DATA_DIR, "boyscout.csv")).get("boyscout")


@pytest.fixture(scope="session")
def boyscout_rephrasing():
    manifest = load_corpus(os.path.join(DATA_DIR, "boyscout_rephrased.csv"))
    return RephrasingBundle(
        narrative_id="boyscout",
        rephrasing_id="r1",
        clauses=tuple(manifest.get("boyscout").clause_texts()),
        validated=True,
    )


ALPHABET_27 = set(string.ascii_lowercase) | {" "}


@pytest.fixture(scope="session")
def uniform27():
    """Uniform model over 26 letters plus space: every character costs
    log2(27) bits."""
    return NgramBackend(uniform_ngram(ALPHABET_27), backend_id="uniform27")


TRAINING_TEXT = (
    "the quick brown fox jumps over the lazy dog and then the dog chases the "
    "fox around the old barn until both of them tire out and rest under a tree "
    "near the quiet river bank at dusk while birds sing"
)


@pytest.fixture(scope="session")
def trigram_backend():
    return NgramBackend(train_ngram(TRAINING_TEXT, order=3, alpha=1.0))


def write_corpus_csv(path, rows):
    """rows: (narrative_id, clause_num, text)."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["narrative_id", "clause_num", "text"])
        writer.writerows(rows)
    return path
