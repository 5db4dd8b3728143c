"""Command-line interface for the full analysis workflow.

Exit codes: 0 success, 2 validation failure, 3 backend failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys

from . import config as config_mod
from . import corpus as corpus_mod
from . import infocalc, predictability, rephrase, report, synthworld
from .errors import BackendError, MeaningBitsError, ValidationError
from .lm_backend import make_backend

log = logging.getLogger("meaningbits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meaningbits",
        description="Per-clause total, wording, and semantic information for narratives",
    )
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--backend", choices=["remote", "ngram"],
                        help="override the backend kind from the config")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampling steps")
    parser.add_argument("--out-dir", default="out", help="directory for outputs")
    parser.add_argument("--variant", default="plain",
                        choices=["plain", "with_initial_context"],
                        help="conditioning variant for total information")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus CSV")
    p.add_argument("corpus")

    p = sub.add_parser("score", help="per-clause total information")
    p.add_argument("corpus")

    p = sub.add_parser("rephrase", help="generate a clause-aligned rephrasing")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--rephrasing-id", default="r1")
    p.add_argument("--chunk-clauses", type=int, default=rephrase.DEFAULT_CHUNK_CLAUSES)
    p.add_argument("--from-rephrasing", help="rephrase this CSV instead of the corpus "
                                             "(second-order rephrasing)")

    p = sub.add_parser("wording", help="per-clause wording information")
    p.add_argument("corpus")
    p.add_argument("rephrasing", help="rephrased CSV aligned with the corpus")

    p = sub.add_parser("semantic", help="total + wording passes, semantic records out")
    p.add_argument("corpus")
    p.add_argument("rephrasing")
    p.add_argument("--rephrasing-id", default="r1")

    p = sub.add_parser("sample", help="stratified sample of clauses by semantic information")
    p.add_argument("records", help="semantic_information.csv")
    p.add_argument("--per-bin", type=int, default=40)

    p = sub.add_parser("predict", help="predict sampled clauses from their prefixes")
    p.add_argument("corpus")
    p.add_argument("records")
    p.add_argument("sample", help="sampled_clauses.csv from the sample step")

    p = sub.add_parser("judge", help="same-meaning judgment of predictions")
    p.add_argument("corpus")
    p.add_argument("predictions", help="gpt_predictions.csv from the predict step")

    p = sub.add_parser("consistency", help="agreement between two record sets")
    p.add_argument("new_records")
    p.add_argument("ref_records")
    p.add_argument("--split-bits", type=float, default=12.0)

    p = sub.add_parser("compare", help="deviation stats between two backends")
    p.add_argument("new_records")
    p.add_argument("ref_records")
    p.add_argument("--predictable", help="CSV of predictable clauses (narrative_id,clause_num)")
    p.add_argument("--split-bits", type=float, default=14.0)

    p = sub.add_parser("report", help="cumulative curves, histogram, position averages")
    p.add_argument("records")
    p.add_argument("--corpus", help="corpus CSV (for per-narrative profiles)")
    p.add_argument("--plots", action="store_true")

    p = sub.add_parser("synth", help="sample a synthetic corpus from a meaning world")
    p.add_argument("--world", help="world JSON file (random world when omitted)")
    p.add_argument("--narratives", type=int, default=20)
    p.add_argument("--clauses", type=int, default=10)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except MeaningBitsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _backend(args):
    values = config_mod.load_config(args.config)
    return make_backend(config_mod.backend_config(values, kind_override=args.backend))


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def run(args) -> int:
    if args.command == "ingest":
        manifest = corpus_mod.load_corpus(args.corpus)
        total = sum(n.length for n in manifest)
        print(f"{len(manifest)} narratives, {total} clauses, checksum {manifest.checksum[:16]}")
        for n in manifest:
            print(f"  {n.id}: L={n.length}")
        return 0

    if args.command == "score":
        backend = _backend(args)
        manifest = corpus_mod.load_corpus(args.corpus)
        records = []
        for n in manifest:
            if args.variant == "with_initial_context":
                n = corpus_mod.attach_default_context(n)
                if n.initial_context is None:
                    log.info("narrative %s has no guiding question; scoring plain", n.id)
            variant = args.variant if n.initial_context is not None else "plain"
            for idx, bits in infocalc.total_info(n, backend, variant=variant):
                records.append(infocalc.ClauseInfoRecord(
                    narrative_id=n.id, clause_index=idx, I_bits=bits,
                    IW_bits=0.0, IM_bits=bits, variant=variant,
                    backend_id=backend.backend_id,
                ))
        path = _out(args, "total_information.csv")
        infocalc.write_records(path, records)
        print(f"wrote {path} ({len(records)} clauses)")
        return 0

    if args.command == "rephrase":
        backend = _backend(args)
        bundles = []
        if args.from_rephrasing:
            sources = rephrase.load_rephrasings(args.from_rephrasing, "r1")
            for nid in sorted(sources):
                bundles.append(rephrase.second_rephrasing(
                    sources[nid], backend, L_c=args.chunk_clauses,
                    rephrasing_id=args.rephrasing_id,
                ))
        else:
            if not args.corpus:
                raise ValidationError("rephrase needs a corpus or --from-rephrasing")
            manifest = corpus_mod.load_corpus(args.corpus)
            for n in manifest:
                bundles.append(rephrase.generate_rephrasing(
                    n, backend, L_c=args.chunk_clauses,
                    rephrasing_id=args.rephrasing_id,
                ))
        suffix = "".join(ch for ch in args.rephrasing_id if ch.isdigit()) or args.rephrasing_id
        path = _out(args, f"rephrased{suffix}.csv")
        rephrase.save_rephrasings(bundles, path)
        print(f"wrote {path} ({len(bundles)} narratives)")
        return 0

    if args.command == "wording":
        backend = _backend(args)
        manifest = corpus_mod.load_corpus(args.corpus)
        rephs = rephrase.load_rephrasings(args.rephrasing, "r1")
        rows = []
        for n in manifest:
            for idx, bits in infocalc.wording_info(n, rephs[n.id], backend):
                rows.append((n.id, idx, bits))
        path = _out(args, "wording_information.csv")
        import csv as _csv

        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow(["narrative_id", "clause_num", "IW_bits"])
            for nid, idx, bits in rows:
                writer.writerow([nid, idx, repr(bits)])
        print(f"wrote {path} ({len(rows)} clauses)")
        return 0

    if args.command == "semantic":
        backend = _backend(args)
        manifest = corpus_mod.load_corpus(args.corpus)
        rephs = rephrase.load_rephrasings(args.rephrasing, args.rephrasing_id)
        records = []
        for n in manifest:
            if args.variant == "with_initial_context":
                n = corpus_mod.attach_default_context(n)
            variant = args.variant if n.initial_context is not None else "plain"
            records.extend(infocalc.semantic_records(n, rephs[n.id], backend, variant=variant))
        path = _out(args, "semantic_information.csv")
        infocalc.write_records(path, records)
        print(f"wrote {path} ({len(records)} clauses)")
        return 0

    if args.command == "sample":
        records = infocalc.read_records(args.records)
        spec = predictability.BinSpec(per_bin_target=args.per_bin)
        result = predictability.stratified_sample(records, spec, seed=args.seed)
        path = _out(args, "sampled_clauses.csv")
        import csv as _csv

        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = _csv.writer(f)
            writer.writerow(["narrative_id", "clause_num"])
            for nid, idx in result.retained:
                writer.writerow([nid, idx])
        dropped = len(result.sampled) - len(result.retained)
        print(f"sampled {len(result.sampled)} clauses "
              f"({dropped} first clauses removed), bins: {list(result.bin_counts)}")
        print(f"wrote {path}")
        return 0

    if args.command == "predict":
        backend = _backend(args)
        manifest = corpus_mod.load_corpus(args.corpus)
        im = {r.key: r.IM_bits for r in infocalc.read_records(args.records)}
        import csv as _csv

        with open(args.sample, encoding="utf-8", newline="") as f:
            keys = [(row["narrative_id"], int(row["clause_num"]))
                    for row in _csv.DictReader(f)]
        trials = []
        for nid, idx in keys:
            trials.append(predictability.run_prediction(
                manifest.get(nid), idx, backend, IM_bits=im.get((nid, idx), 0.0),
            ))
        path = _out(args, "gpt_predictions.csv")
        predictability.write_trials(path, trials)
        print(f"wrote {path} ({len(trials)} predictions)")
        return 0

    if args.command == "judge":
        backend = _backend(args)
        manifest = corpus_mod.load_corpus(args.corpus)
        trials = predictability.read_trials(args.predictions)
        judged = [predictability.run_judgment(t, manifest.get(t.narrative_id), backend)
                  for t in trials]
        predictability.write_trials(args.predictions, judged)
        positives = sum(1 for t in judged if t.judged_same_meaning)
        print(f"judged {len(judged)} predictions, {positives} same-meaning")
        return 0

    if args.command == "consistency":
        new = infocalc.read_records(args.new_records)
        ref = infocalc.read_records(args.ref_records)
        low, high = report.consistency_stats(new, ref, split_bits=args.split_bits)
        path = _out(args, "consistency.csv")
        report.write_stats_csv(path, [("low", low), ("high", high)])
        for name, stats in (("low", low), ("high", high)):
            if stats:
                unit = "bits" if stats.mode == report.ABSOLUTE_BITS else "%"
                print(f"{name}: n={stats.n}, ({stats.mean:+.1f} ± {stats.std:.1f}) {unit}")
        print(f"wrote {path}")
        return 0

    if args.command == "compare":
        new = infocalc.read_records(args.new_records)
        ref = infocalc.read_records(args.ref_records)
        predictable = set()
        if args.predictable:
            import csv as _csv

            with open(args.predictable, encoding="utf-8", newline="") as f:
                predictable = {(row["narrative_id"], int(row["clause_num"]))
                               for row in _csv.DictReader(f)}
        stats = report.model_comparison_stats(new, ref, predictable,
                                              split_bits=args.split_bits)
        path = _out(args, "model_comparison.csv")
        report.write_stats_csv(
            path, [("predictable", stats[0]), ("low", stats[1]), ("high", stats[2])]
        )
        print(f"wrote {path}")
        return 0

    if args.command == "report":
        records = infocalc.read_records(args.records)
        profiles = None
        checksum = ""
        if args.corpus:
            manifest = corpus_mod.load_corpus(args.corpus)
            checksum = manifest.checksum
            by_narrative: dict[str, list] = {}
            for r in records:
                by_narrative.setdefault(r.narrative_id, []).append(r)
            profiles = [infocalc.profile(manifest.get(nid), recs)
                        for nid, recs in sorted(by_narrative.items())]
        manifest_obj = report.RunManifest(
            corpus_checksum=checksum,
            backend_ids=tuple(sorted({r.backend_id for r in records if r.backend_id})),
            rephrasing_ids=tuple(sorted({r.rephrasing_id for r in records if r.rephrasing_id})),
            seeds={"cli": args.seed},
            variant=args.variant,
        )
        written = report.emit_outputs(
            args.out_dir, manifest_obj, records=records, profiles=profiles, plots=args.plots
        )
        for path in written:
            print(f"wrote {path}")
        return 0

    if args.command == "synth":
        if args.world:
            world = synthworld.load_world(args.world)
        else:
            world = synthworld.random_world(random.Random(args.seed), chained=True)
            synthworld.save_world(world, _out(args, "world.json"))
        narratives, truth = synthworld.sample_corpus(
            world, args.narratives, args.clauses, seed=args.seed
        )
        corpus_path = _out(args, "synthetic_corpus.csv")
        truth_path = _out(args, "synthetic_truth.csv")
        corpus_mod.save_corpus(narratives, corpus_path)
        synthworld.write_truth(truth_path, truth)
        print(f"wrote {corpus_path} and {truth_path} "
              f"({len(narratives)} narratives x {args.clauses} clauses)")
        return 0

    raise ValidationError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
