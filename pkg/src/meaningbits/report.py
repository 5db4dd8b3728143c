"""Corpus-level statistics and batch output emission.

Deviation statistics follow one convention throughout: the first argument
is the new estimate, the second the reference; deviations are new - ref,
splits and relative denominators use the reference values, and the spread
is the sample standard deviation (n - 1).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .errors import AlignmentMismatch, ValidationError

log = logging.getLogger(__name__)

ABSOLUTE_BITS = "absolute_bits"
RELATIVE_PERCENT = "relative_percent"


@dataclass(frozen=True)
class DeviationStats:
    n: int
    mean: float
    std: float
    mode: str

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("deviation stats need at least one observation")
        if self.mode not in (ABSOLUTE_BITS, RELATIVE_PERCENT):
            raise ValidationError(f"unknown stats mode {self.mode!r}")


def _stats(values, mode: str) -> DeviationStats | None:
    values = list(values)
    if not values:
        return None
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return DeviationStats(n=n, mean=mean, std=std, mode=mode)


def _as_im_map(records) -> dict[tuple[str, int], float]:
    out = {}
    for r in records:
        key = (r.narrative_id, r.clause_index)
        if key in out:
            raise AlignmentMismatch(f"duplicate record for {key}")
        out[key] = r.IM_bits
    return out


def consistency_stats(
    im_new,
    im_ref,
    split_bits: float = 12.0,
) -> tuple[DeviationStats | None, DeviationStats | None]:
    """Agreement between two estimates of the same clauses.

    Clauses whose reference value is below split_bits contribute absolute
    deviations in bits; the rest contribute relative deviations in percent
    of the reference.
    """
    new_map = _as_im_map(im_new)
    ref_map = _as_im_map(im_ref)
    if set(new_map) != set(ref_map):
        missing = set(new_map) ^ set(ref_map)
        raise AlignmentMismatch(f"records do not align; {len(missing)} unmatched clauses")
    low, high = [], []
    for key in sorted(ref_map):
        ref = ref_map[key]
        dev = new_map[key] - ref
        if ref < split_bits:
            low.append(dev)
        else:
            high.append(100.0 * dev / ref)
    return _stats(low, ABSOLUTE_BITS), _stats(high, RELATIVE_PERCENT)


def model_comparison_stats(
    im_new,
    im_ref,
    predictable_keys,
    split_bits: float = 14.0,
) -> tuple[DeviationStats | None, DeviationStats | None, DeviationStats | None]:
    """Deviation summary between two backends over aligned clauses:
    absolute over the predictable subset, absolute below split_bits,
    relative percent above it."""
    new_map = _as_im_map(im_new)
    ref_map = _as_im_map(im_ref)
    if set(new_map) != set(ref_map):
        missing = set(new_map) ^ set(ref_map)
        raise AlignmentMismatch(f"records do not align; {len(missing)} unmatched clauses")
    predictable_keys = set(predictable_keys)
    unknown = predictable_keys - set(ref_map)
    if unknown:
        raise AlignmentMismatch(f"predictable clauses missing from records: {sorted(unknown)}")
    pred, low, high = [], [], []
    for key in sorted(ref_map):
        ref = ref_map[key]
        dev = new_map[key] - ref
        if key in predictable_keys:
            pred.append(dev)
        if ref < split_bits:
            low.append(dev)
        elif ref > split_bits:
            high.append(100.0 * dev / ref)
    return (
        _stats(pred, ABSOLUTE_BITS),
        _stats(low, ABSOLUTE_BITS),
        _stats(high, RELATIVE_PERCENT),
    )


def position_average(profiles, max_pos: int | None = None) -> list[tuple[int, float, int]]:
    """Mean semantic information at each clause position, averaged over the
    narratives long enough to reach that position."""
    profiles = list(profiles)
    if not profiles:
        return []
    longest = max(len(p.records) for p in profiles)
    if max_pos is not None:
        longest = min(longest, max_pos)
    out = []
    for pos in range(1, longest + 1):
        values = [p.records[pos - 1].IM_bits for p in profiles if len(p.records) >= pos]
        out.append((pos, sum(values) / len(values), len(values)))
    return out


def histogram(values, bin_width: float = 2.0) -> list[tuple[float, float, int]]:
    """(lo, hi, count) rows over equal-width bins covering the data."""
    values = list(values)
    if not values:
        return []
    lo = math.floor(min(values) / bin_width) * bin_width
    hi = math.ceil(max(values) / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    nbins = round((hi - lo) / bin_width)
    counts = [0] * nbins
    for v in values:
        counts[min(int((v - lo) / bin_width), nbins - 1)] += 1
    return [(lo + i * bin_width, lo + (i + 1) * bin_width, c) for i, c in enumerate(counts)]


# ----------------------------------------------------------------------
# run manifest
# ----------------------------------------------------------------------

@dataclass
class RunManifest:
    corpus_checksum: str = ""
    backend_ids: tuple[str, ...] = ()
    rephrasing_ids: tuple[str, ...] = ()
    seeds: dict = field(default_factory=dict)
    prompt_hashes: dict = field(default_factory=dict)
    variant: str = "plain"
    timestamp: str = ""

    def __post_init__(self):
        if not self.prompt_hashes:
            self.prompt_hashes = default_prompt_hashes()
        if not self.timestamp:
            self.timestamp = datetime.now(timezone.utc).isoformat()

    def content_dict(self) -> dict:
        return {
            "corpus_checksum": self.corpus_checksum,
            "backend_ids": list(self.backend_ids),
            "rephrasing_ids": list(self.rephrasing_ids),
            "seeds": self.seeds,
            "prompt_hashes": self.prompt_hashes,
            "variant": self.variant,
        }

    @property
    def manifest_id(self) -> str:
        """Identity over run content; the timestamp does not participate."""
        blob = json.dumps(self.content_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def write(self, path: str) -> None:
        data = dict(self.content_dict(), manifest_id=self.manifest_id, timestamp=self.timestamp)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")


def default_prompt_hashes() -> dict:
    from .infocalc import WORDING_PROMPT_HEADER
    from .predictability import CONTINUATION_TEMPLATE, JUDGMENT_TEMPLATE
    from .rephrase import REPHRASE_USER_TEMPLATE, SUMMARY_PROMPT_TEMPLATE

    def h(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    return {
        "wording": h(WORDING_PROMPT_HEADER),
        "rephrase": h(REPHRASE_USER_TEMPLATE),
        "summary": h(SUMMARY_PROMPT_TEMPLATE),
        "continuation": h(CONTINUATION_TEMPLATE),
        "judgment": h(JUDGMENT_TEMPLATE),
    }


# ----------------------------------------------------------------------
# emission
# ----------------------------------------------------------------------

def write_stats_csv(path: str, rows) -> None:
    """rows: (set_name, DeviationStats | None)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["set", "n", "mean", "std", "mode"])
        for name, stats in rows:
            if stats is None:
                continue
            writer.writerow([name, stats.n, repr(stats.mean), repr(stats.std), stats.mode])


def read_stats_csv(path: str) -> dict[str, DeviationStats]:
    with open(path, encoding="utf-8", newline="") as f:
        return {
            row["set"]: DeviationStats(
                n=int(row["n"]), mean=float(row["mean"]), std=float(row["std"]),
                mode=row["mode"],
            )
            for row in csv.DictReader(f)
        }


def read_cumulative_csv(path: str) -> dict[tuple[str, int], tuple[float, float]]:
    with open(path, encoding="utf-8", newline="") as f:
        return {
            (row["narrative_id"], int(row["clause_num"])): (
                float(row["cumulative_I_bits"]), float(row["cumulative_IM_bits"])
            )
            for row in csv.DictReader(f)
        }


def read_position_average_csv(path: str) -> list[tuple[int, float, int]]:
    with open(path, encoding="utf-8", newline="") as f:
        return [
            (int(row["position"]), float(row["mean_IM_bits"]), int(row["n_narratives"]))
            for row in csv.DictReader(f)
        ]


def read_histogram_csv(path: str) -> list[tuple[float, float, int]]:
    with open(path, encoding="utf-8", newline="") as f:
        return [
            (float(row["bin_lo"]), float(row["bin_hi"]), int(row["count"]))
            for row in csv.DictReader(f)
        ]


def emit_outputs(
    out_dir: str,
    manifest: RunManifest,
    records=None,
    profiles=None,
    consistency=None,
    comparison=None,
    plots: bool = False,
    histogram_bin_width: float = 2.0,
) -> list[str]:
    """Write the analysis CSVs (and optional SVG plots) for one run.

    Outputs are deterministic given the same manifest content; only
    manifest.json contains a timestamp.
    """
    if records is not None and not list(records):
        log.warning("no records to report; skipping output emission")
        return []
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def out(name: str) -> str:
        path = os.path.join(out_dir, name)
        written.append(path)
        return path

    manifest.write(out("manifest.json"))

    if records is not None:
        from .infocalc import write_records

        write_records(out("semantic_information.csv"), records)
        hist = histogram([r.IM_bits for r in records], histogram_bin_width)
        with open(out("histogram.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, count in hist:
                writer.writerow([repr(lo), repr(hi), count])

    if profiles:
        with open(out("cumulative.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["narrative_id", "clause_num", "cumulative_I_bits",
                             "cumulative_IM_bits"])
            for p in profiles:
                for i, (ci, cim) in enumerate(zip(p.cumulative_I, p.cumulative_IM), start=1):
                    writer.writerow([p.narrative_id, i, repr(ci), repr(cim)])
        with open(out("position_average.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["position", "mean_IM_bits", "n_narratives"])
            for pos, mean, count in position_average(profiles):
                writer.writerow([pos, repr(mean), count])

    if consistency is not None:
        low, high = consistency
        write_stats_csv(out("consistency.csv"), [("low", low), ("high", high)])

    if comparison is not None:
        pred, low, high = comparison
        write_stats_csv(
            out("model_comparison.csv"),
            [("predictable", pred), ("low", low), ("high", high)],
        )

    if plots:
        written.extend(_emit_plots(out_dir, records, profiles))
    return written


def _emit_plots(out_dir: str, records, profiles) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "meaningbits"
    import matplotlib.pyplot as plt

    written = []

    def save(fig, name: str) -> None:
        path = os.path.join(out_dir, name)
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    if profiles:
        fig, ax = plt.subplots(figsize=(7, 5))
        for p in profiles:
            xs = range(1, len(p.cumulative_I) + 1)
            ax.plot(xs, p.cumulative_I, alpha=0.7)
            ax.plot(xs, p.cumulative_IM, alpha=0.7, linestyle="--")
        ax.set_xlabel("clause number")
        ax.set_ylabel("cumulative information (bits)")
        ax.set_title("Cumulative total (solid) and semantic (dashed) information")
        save(fig, "cumulative.svg")

        fig, ax = plt.subplots(figsize=(7, 4))
        pos = position_average(profiles)
        ax.plot([p[0] for p in pos], [p[1] for p in pos], marker="o")
        ax.set_xlabel("clause position")
        ax.set_ylabel("mean semantic information (bits)")
        save(fig, "position_average.svg")

    if records is not None:
        values = [r.IM_bits for r in records]
        if values:
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.hist(values, bins=30)
            ax.axvline(sum(values) / len(values), linestyle="--", color="k")
            ax.set_xlabel("semantic information (bits/clause)")
            ax.set_ylabel("clauses")
            save(fig, "histogram.svg")
    return written
