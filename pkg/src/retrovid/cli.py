"""``retro``: one entry point wiring the library together.

Subcommands: ``transform`` (materialize transformed tensor files),
``discover`` / ``sweep`` (label-transform extraction), ``synth``
(augmented / zero-shot manifest construction, materialization, sampling),
``eval`` (accuracy, breakdowns, confusion matrices) and ``perception``
(reversibility reports). Every path is a pure function of its input files,
flags and seed; re-running writes byte-identical outputs. Set ``RETRO_LOG``
to a level name (debug, info, ...) for diagnostics on stderr.

Exit codes: 0 success, 2 validation, 3 configuration, 4 incomplete log,
5 undefined metric, 6 empty split, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import discovery, manifest as mf, metrics, perception, synthesis
from .errors import ConfigurationError, RetroError, ValidationError
from .rten import read_rten, write_rten
from .tensor import Layout, TransformId, apply_transform, convert_layout

log = logging.getLogger("retro")

DEFAULT_SEED = 2024


def _configure_logging() -> None:
    level = os.environ.get("RETRO_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _parse_grid(spec: str) -> list[float]:
    """``a:b:step`` (inclusive ends) or a single value."""
    parts = spec.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) != 3:
            raise ValueError("expected VALUE or START:STOP:STEP")
        start, stop, step = (float(p) for p in parts)
    except ValueError as err:
        raise ConfigurationError(f"bad grid spec {spec!r}: {err}") from None
    if step <= 0:
        raise ConfigurationError(f"bad grid spec {spec!r}: step must be positive")
    if stop < start:
        raise ConfigurationError(f"bad grid spec {spec!r}: stop below start")
    count = int((stop - start) / step + 1e-9) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _parse_topk(spec: str) -> list[int]:
    try:
        ks = [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise ConfigurationError(f"bad top-k list {spec!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise ConfigurationError(f"bad top-k list {spec!r}")
    return ks


def _load_manifest(args) -> mf.DatasetManifest:
    m = mf.load_manifest(args.manifest, getattr(args, "classes", None))
    split = getattr(args, "split", None)
    return m.filter_split(split) if split else m


def _write_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _run_file_jobs(items, worker, jobs: int):
    """Apply ``worker`` to each item, optionally across threads.

    Results come back in item order, so output is independent of ``jobs``.
    """
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, items))
    return [worker(item) for item in items]


def cmd_transform(args) -> int:
    op = TransformId.parse(args.op)
    target_layout = Layout.parse(args.layout) if args.layout else None
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        raise ConfigurationError(f"input directory {in_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(in_dir.glob("*.rten"))
    start = time.perf_counter()

    def _one(path: Path):
        try:
            tensor = read_rten(path)
            bytes_in = path.stat().st_size
            result = apply_transform(tensor, op)
            if target_layout is not None:
                result = convert_layout(result, target_layout)
            bytes_out = write_rten(result, out_dir / path.name)
            return (path.name, bytes_in, bytes_out, None)
        except (RetroError, OSError) as err:
            return (path.name, 0, 0, str(err))

    results = _run_file_jobs(files, _one, args.jobs)
    failed = [{"file": name, "error": err} for name, _, _, err in results if err]
    summary = {
        "files": len(files),
        "succeeded": len(files) - len(failed),
        "failed": failed,
        "bytes_in": sum(r[1] for r in results),
        "bytes_out": sum(r[2] for r in results),
        "seconds": round(time.perf_counter() - start, 6),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0 if not failed else ValidationError.exit_code


def cmd_discover(args) -> int:
    m = _load_manifest(args)
    plog = discovery.load_prediction_log(args.pred)
    config = discovery.DiscoveryConfig(args.lam, args.alpha)
    report = discovery.extract_transform(plog, m, args.transform, config)
    discovery.save_discovery_report(report, args.out)
    counts = mf.category_counts(report.map)
    print(
        json.dumps(
            {
                "classes": len(report.map.entries),
                "invariant": counts[0],
                "equivariant": counts[1],
                "novel": counts[2] + counts[3],
                "out": str(args.out),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_sweep(args) -> int:
    m = _load_manifest(args)
    plog = discovery.load_prediction_log(args.pred)
    truth = mf.load_transform_map(args.truth)
    result = discovery.sweep(
        plog,
        m,
        args.transform,
        truth,
        _parse_grid(args.lambda_grid),
        _parse_grid(args.alpha_grid),
    )
    if args.table:
        lines = ["lambda,alpha,tp,fp,fn,tn"]
        lines += [
            f"{p.lam},{p.alpha},{p.counts.tp},{p.counts.fp},{p.counts.fn},{p.counts.tn}"
            for p in result.table
        ]
        Path(args.table).write_text("\n".join(lines) + "\n")
    best = result.best
    _write_json(
        {
            "lambda": best.lam,
            "alpha": best.alpha,
            "tp": best.counts.tp,
            "fp": best.counts.fp,
            "fn": best.counts.fn,
            "tn": best.counts.tn,
        },
        args.out,
    )
    return 0


def cmd_synth_augment(args) -> int:
    m = _load_manifest(args)
    cmap = mf.load_transform_map(args.map)
    examples = synthesis.build_augmented(m, cmap)
    synthesis.save_synthetic_manifest(examples, args.out)
    print(json.dumps({"synthesized": len(examples), "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_synth_zeroshot(args) -> int:
    m = _load_manifest(args)
    cmap = mf.load_transform_map(args.map)
    split = synthesis.build_zero_shot_subset(m, cmap, args.transform)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mf.save_manifest(split.retained, out_dir / "retained_manifest.jsonl")
    synthesis.save_synthetic_manifest(split.synthesized, out_dir / "synthetic.jsonl")
    _write_json(
        {
            "transform": split.transform.value,
            "many_shot": list(split.many_shot_classes),
            "zero_shot": list(split.zero_shot_classes),
            "synthesized": len(split.synthesized),
            "retained_records": len(split.retained),
        },
        out_dir / "split.json",
    )
    print(
        json.dumps(
            {
                "zero_shot_classes": len(split.zero_shot_classes),
                "synthesized": len(split.synthesized),
                "out_dir": str(out_dir),
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_synth_materialize(args) -> int:
    examples = synthesis.load_synthetic_manifest(args.synthetic)
    src_dir, out_dir = Path(args.src), Path(args.out_dir)
    if not src_dir.is_dir():
        raise ConfigurationError(f"source directory {src_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    def _one(ex: synthesis.SyntheticExample):
        source = src_dir / f"{ex.source_video_id}.rten"
        try:
            tensor = read_rten(source)
            bytes_in = source.stat().st_size
            bytes_out = write_rten(
                apply_transform(tensor, ex.applied_transform),
                out_dir / f"{ex.video_id}.rten",
            )
            return (ex.video_id, bytes_in, bytes_out, None)
        except (RetroError, OSError) as err:
            return (ex.video_id, 0, 0, str(err))

    results = _run_file_jobs(examples, _one, args.jobs)
    failed = [{"video_id": vid, "error": err} for vid, _, _, err in results if err]
    summary = {
        "files": len(examples),
        "succeeded": len(examples) - len(failed),
        "failed": failed,
        "bytes_in": sum(r[1] for r in results),
        "bytes_out": sum(r[2] for r in results),
        "seconds": round(time.perf_counter() - start, 6),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0 if not failed else ValidationError.exit_code


def cmd_synth_sample(args) -> int:
    m = _load_manifest(args)
    maps = [mf.load_transform_map(path) for path in args.maps]
    sampler = synthesis.AugmentationSampler(maps, args.p, args.seed)
    lines = []
    transformed = 0
    for rec in m.records:
        if rec.split != "train":
            continue
        out = sampler.sample(rec.video_id, rec.class_id)
        transformed += 1 if out.is_synthetic else 0
        lines.append(
            json.dumps(
                {
                    "video_id": out.video_id,
                    "source": out.source_video_id,
                    "transforms": [t.value for t in out.applied],
                    "class_id": out.class_id,
                },
                sort_keys=True,
            )
        )
    Path(args.out).write_text("".join(line + "\n" for line in lines))
    print(
        json.dumps(
            {"draws": len(lines), "transformed": transformed, "seed": args.seed},
            sort_keys=True,
        )
    )
    return 0


def _write_heatmap(matrix: metrics.ConfusionMatrix, path) -> None:
    # cosmetic output only; requires the optional matplotlib dependency
    try:
        import matplotlib
    except ImportError:
        raise ConfigurationError(
            "heat-map rendering requires matplotlib (install the 'plots' extra)"
        ) from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(matrix.counts, cmap="viridis")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_eval(args) -> int:
    m = _load_manifest(args)
    plog = discovery.load_prediction_log(args.pred)
    cmap = mf.load_transform_map(args.map) if args.map else None
    if args.apply_lt and cmap is None:
        raise ConfigurationError("--apply-lt requires --map")
    variant = args.variant
    transform = args.transform
    if variant == "transformed" and transform is None:
        raise ConfigurationError("--variant transformed requires --transform")
    ks = _parse_topk(args.topk)

    report: dict = {"topk": {}}
    for k in ks:
        report["topk"][str(k)] = metrics.topk_accuracy(
            plog, m, k, variant=variant, transform=transform
        )
    rankings = plog.slice(variant, transform)
    report["n_evaluated"] = sum(1 for rec in m.records if rec.video_id in rankings)

    if args.groups:
        try:
            groups = json.loads(Path(args.groups).read_text())
        except json.JSONDecodeError as err:
            raise ValidationError(f"{args.groups}: invalid JSON: {err}") from None
        rows = metrics.breakdown(plog, m, groups, ks, variant=variant, transform=transform)
        report["groups"] = {
            row.name: {
                "n": row.n_examples,
                **{f"top{k}": row.accuracies[k] for k in ks},
            }
            for row in rows
        }
        if args.breakdown:
            Path(args.breakdown).write_text(metrics.breakdown_to_csv(rows, ks))

    if args.confusion or args.heatmap:
        matrix = metrics.confusion(
            plog,
            m,
            cmap=cmap,
            apply_label_transform=args.apply_lt,
            variant=variant,
            transform=transform,
        )
        report["confusion"] = {
            "total": matrix.total,
            "excluded": matrix.excluded,
            "ordering": matrix.ordering,
        }
        if args.confusion:
            Path(args.confusion).write_text(matrix.to_csv())
        if args.heatmap:
            _write_heatmap(matrix, args.heatmap)

    _write_json(report, args.out)
    return 0


def cmd_perception(args) -> int:
    if args.qc:
        if args.k is None or args.min_correct is None:
            raise ConfigurationError("--qc requires --k and --min-correct")
        submissions = perception.load_submissions(args.qc)
        accepted = perception.qc_filter(submissions, args.k, args.min_correct)
        log.info("qc: accepted %d of %d submissions", len(accepted), len(submissions))
        tallies = perception.tally(accepted)
    elif args.tally:
        tallies = perception.load_tally_csv(args.tally)
    else:
        raise ConfigurationError("perception requires --tally or --qc")

    lines = ["class_id,n_trials,forward_choices,proportion,lower,upper,verdict"]
    for t in tallies:
        lower, upper = perception.reversibility_bounds(t.n)
        verdict = perception.classify_reversibility(t)
        lines.append(
            f"{t.class_id},{t.n},{t.x},{t.x / t.n:.6f},"
            f"{lower:.6f},{upper:.6f},{verdict.value}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retro",
        description="Label-altering video transform toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="apply a transform to a directory of .rten files")
    p.add_argument("--op", required=True, choices=["hf", "tr", "hftr"])
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--layout", choices=["tchw", "cthw"], help="convert outputs to this layout")
    p.add_argument("--jobs", type=int, default=1, help="parallel file jobs (output independent of N)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("discover", help="extract a class-transform map from predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes", help="class-name sidecar JSON array")
    p.add_argument("--pred", required=True, help="prediction log JSONL")
    p.add_argument("--transform", required=True, choices=["hf", "tr", "hftr"])
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="recall threshold")
    p.add_argument("--alpha", type=float, required=True, help="affinity threshold")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("sweep", help="grid-search thresholds against a ground-truth map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes")
    p.add_argument("--pred", required=True)
    p.add_argument("--transform", required=True, choices=["hf", "tr", "hftr"])
    p.add_argument("--truth", required=True, help="ground-truth map JSON")
    p.add_argument("--lambda-grid", required=True, help="VALUE or START:STOP:STEP")
    p.add_argument("--alpha-grid", required=True, help="VALUE or START:STOP:STEP")
    p.add_argument("--out", help="best-point JSON (stdout when omitted)")
    p.add_argument("--table", help="full grid CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="manifest synthesis and materialization")
    synth_sub = p.add_subparsers(dest="mode", required=True)

    q = synth_sub.add_parser("augment", help="build the augmented synthetic manifest")
    q.add_argument("--manifest", required=True)
    q.add_argument("--classes")
    q.add_argument("--map", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_synth_augment)

    q = synth_sub.add_parser("zeroshot", help="build the zero-shot split")
    q.add_argument("--manifest", required=True)
    q.add_argument("--classes")
    q.add_argument("--map", required=True)
    q.add_argument("--transform", choices=["hf", "tr", "hftr"])
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_synth_zeroshot)

    q = synth_sub.add_parser("materialize", help="write tensors for a synthetic manifest")
    q.add_argument("--synthetic", required=True, help="synthetic manifest JSONL")
    q.add_argument("--src", required=True, help="directory of source .rten files")
    q.add_argument("--out-dir", required=True)
    q.add_argument("--jobs", type=int, default=1)
    q.set_defaults(func=cmd_synth_materialize)

    q = synth_sub.add_parser("sample", help="sample one augmentation pass over train records")
    q.add_argument("--manifest", required=True)
    q.add_argument("--classes")
    q.add_argument("--maps", nargs="+", required=True, help="one map file per active transform")
    q.add_argument("--p", type=float, default=0.5, help="per-transform apply probability")
    q.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"sampler seed (default {DEFAULT_SEED})")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_synth_sample)

    p = sub.add_parser("eval", help="accuracy, breakdowns and confusion matrices")
    p.add_argument("--pred", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--map", help="class-transform map JSON")
    p.add_argument("--apply-lt", action="store_true", help="push true labels through the map for the confusion matrix")
    p.add_argument("--groups", help="JSON file {group name: [class ids]}")
    p.add_argument("--topk", default="1,5")
    p.add_argument("--variant", choices=["original", "transformed"], default="original")
    p.add_argument("--transform", choices=["hf", "tr", "hftr"])
    p.add_argument("--out", help="report JSON (stdout when omitted)")
    p.add_argument("--breakdown", help="per-group CSV path")
    p.add_argument("--confusion", help="confusion matrix CSV path")
    p.add_argument("--heatmap", help="confusion matrix PNG path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perception", help="reversibility report from tallies or raw submissions")
    p.add_argument("--tally", help="tally CSV")
    p.add_argument("--qc", help="submissions JSONL to filter and tally")
    p.add_argument("--k", type=int, help="catch trials per submission")
    p.add_argument("--min-correct", type=int, help="catch trials that must be right")
    p.add_argument("--out", help="report CSV (stdout when omitted)")
    p.set_defaults(func=cmd_perception)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RetroError as err:
        print(f"retro: error: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"retro: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
