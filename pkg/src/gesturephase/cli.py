"""Command line surface.

Subcommands:

* synth      generate a synthetic corpus (poses, annotations, truth)
* prepare    windows + labels from poses and annotations -> dataset
* train      train one variant on a prepared dataset -> checkpoint
* evaluate   score a checkpoint against a prepared dataset
* crossval   subject-disjoint k-fold training and evaluation
* predict    decode phases and gesture-unit intervals for new poses
* gradcheck  finite-difference audit of every layer's gradients

Every command is deterministic given (inputs, config file, --seed) and
stamps its outputs with the configuration hash and the seed. Exit
codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure (divergence or gradient-check breach).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import windows as W
from .config import (
    RunConfig,
    WindowSettings,
    config_hash,
    config_to_dict,
    load_run_config,
)
from .dataset import load_dataset, save_dataset
from .diagnostics import GRAD_TOLERANCE, run_gradient_checks
from .errors import (
    AnnotationError,
    CheckpointError,
    ConfigError,
    DataError,
    GesturePhaseError,
    NumericalError,
)
from .graph import default_graph, load_graph
from .metrics import aggregate_folds, evaluate_labels
from .model import all_variants, load_model, save_model
from .pipeline import make_folds, predict_sequences, scheme_sequences, train
from .pose import (
    default_selection,
    load_selection,
    normalize_coords,
    parse_pose_file,
    read_annotations,
    selection_from_dict,
)
from .synth import write_corpus
from .util import dump_json


def _effective_config(args) -> RunConfig:
    cfg = load_run_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _selection(cfg: RunConfig):
    if cfg.selection_file:
        return load_selection(cfg.selection_file)
    return default_selection()


def _graph(cfg: RunConfig):
    if cfg.graph_file:
        return load_graph(cfg.graph_file)
    return default_graph()


def _pick_variant(cfg: RunConfig, slug: str | None):
    if slug is None:
        return cfg.variants[0]
    for v in all_variants():
        if v.slug() == slug:
            return v
    known = ", ".join(v.slug() for v in all_variants())
    raise ConfigError(f"unknown variant {slug!r}; choose one of: {known}")


def build_sequences(skeletons, per_subject_annotations,
                    wcfg: WindowSettings) -> dict[str, list[W.WindowSequence]]:
    """Normalize, window, label and group every subject's recording."""
    known = {seq.subject_id for seq in skeletons}
    unknown = sorted(set(per_subject_annotations) - known)
    if unknown:
        raise AnnotationError(f"annotations reference unknown subjects {unknown}")
    out = {}
    for seq in skeletons:
        if wcfg.normalize:
            seq = normalize_coords(seq, wcfg.center, wcfg.scale_pair)
        wins = W.slide_windows(seq, wcfg.window_len, wcfg.stride)
        W.label_windows(wins, per_subject_annotations.get(seq.subject_id, []))
        out[seq.subject_id] = W.group_into_sequences(seq.subject_id, wins,
                                                     wcfg.seq_len)
    return out


def decode_intervals(labels, starts, window_len: int, scheme: str) -> list[dict]:
    """Maximal runs of non-neutral windows as gesture-unit intervals.

    Window indices are inclusive; frame spans are half-open recording
    coordinates. Each unit carries its phase sub-spans (runs of one
    label inside the unit).
    """
    labels = np.asarray(labels)
    starts = np.asarray(starts)
    names = W.scheme_labels(scheme)
    neutral = W.neutral_code(scheme)
    units = []
    k, t = 0, labels.size
    while k < t:
        if labels[k] == neutral:
            k += 1
            continue
        lo = k
        while k < t and labels[k] != neutral:
            k += 1
        hi = k - 1
        phases = []
        p = lo
        while p <= hi:
            q = p
            while q < hi and labels[q + 1] == labels[p]:
                q += 1
            phases.append({"label": names[int(labels[p])],
                           "start_window": int(p), "end_window": int(q)})
            p = q + 1
        units.append({
            "start_window": int(lo),
            "end_window": int(hi),
            "start_frame": int(starts[lo]),
            "end_frame": int(starts[hi]) + int(window_len),
            "phases": phases,
        })
    return units


def _gathered(per_subject: dict, subjects) -> list[W.WindowSequence]:
    missing = [s for s in subjects if s not in per_subject]
    if missing:
        raise DataError(f"dataset has no subjects {missing}")
    return [s for sid in subjects for s in per_subject[sid]]


def _gold_labels(sequences: list[W.WindowSequence]) -> list[np.ndarray]:
    for s in sequences:
        if s.labels is None:
            raise DataError(f"sequence for subject {s.subject_id!r} is unlabeled")
    return [s.labels for s in sequences]


def cmd_synth(args) -> int:
    cfg = _effective_config(args)
    selection = _selection(cfg)
    summary = write_corpus(args.out, cfg.synth, cfg.seed, selection)
    summary["config_hash"] = config_hash(cfg)
    summary["seed"] = cfg.seed
    dump_json(Path(args.out) / "synth_manifest.json", summary)
    print(f"wrote {summary['subjects']} subjects, "
          f"{summary['gestures']} gestures to {args.out}")
    return 0


def cmd_prepare(args) -> int:
    cfg = _effective_config(args)
    selection = _selection(cfg)
    skeletons = parse_pose_file(args.poses, selection, fps=cfg.window.fps)
    annotations = read_annotations(args.annotations)
    per_subject = build_sequences(skeletons, annotations, cfg.window)
    meta = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "window": dataclasses.asdict(cfg.window),
        "selection": {"indices": list(selection.indices),
                      "source_count": selection.source_count},
    }
    manifest = save_dataset(args.out, per_subject, meta)
    print(f"{'label':<8}{'count':>10}{'percent':>10}")
    total = 0
    for name, row in manifest["label_counts"].items():
        total += row["count"]
        print(f"{name:<8}{row['count']:>10}{row['percent']:>10.2f}")
    print(f"{'total':<8}{total:>10}{100.0 if total else 0.0:>10.2f}")
    print(f"prepared {manifest['n_windows']} windows in "
          f"{manifest['n_sequences']} sequences "
          f"({manifest['n_partial_sequences']} partial) "
          f"for {len(manifest['subjects'])} subjects at {args.out}")
    return 0


def _epoch_printer(record: dict) -> None:
    print(f"epoch {record['epoch']:3d}  lr {record['lr']:.5f}  "
          f"loss {record['loss']:.5f}  "
          f"({record['sequences']} seqs, {record['seconds']:.1f}s)", flush=True)


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    manifest, per_subject = load_dataset(args.data)
    sequences = _gathered(per_subject, manifest["subjects"])
    _gold_labels(sequences)
    variant = _pick_variant(cfg, args.variant)
    graph = _graph(cfg)
    hook = None if args.quiet else _epoch_printer
    model, log = train(sequences, variant, graph, cfg.model, cfg.train,
                       cfg.seed, log_hook=hook)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "config_hash": config_hash(cfg),
        "config": config_to_dict(cfg),
        "dataset": {"window": manifest.get("window"),
                    "selection": manifest.get("selection")},
    }
    save_model(out / "model.zip", model, cfg.seed, snapshot)
    with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    dump_json(out / "train_summary.json", {
        "config_hash": snapshot["config_hash"],
        "seed": cfg.seed,
        "variant": variant.slug(),
        "epochs": len(log),
        "final_loss": log[-1]["loss"],
        "n_sequences": len(sequences),
    })
    print(f"trained {variant.slug()} for {len(log)} epochs, "
          f"final loss {log[-1]['loss']:.5f}; checkpoint at {out / 'model.zip'}")
    return 0


def cmd_evaluate(args) -> int:
    model, manifest = load_model(args.model)
    ds_manifest, per_subject = load_dataset(args.data)
    subjects = args.subjects.split(",") if args.subjects else ds_manifest["subjects"]
    sequences = _gathered(per_subject, subjects)
    if sequences and sequences[0].features.shape[2] != model.graph.n_nodes:
        raise CheckpointError(
            f"dataset has {sequences[0].features.shape[2]} joints but the "
            f"checkpoint expects {model.graph.n_nodes}"
        )
    scheme = model.variant.labeling
    gold = _gold_labels(scheme_sequences(sequences, scheme))
    preds = predict_sequences(model, sequences)
    report = evaluate_labels(gold, preds, scheme)
    run = manifest.get("config", {}).get("run", {})
    payload = {
        "config_hash": run.get("config_hash"),
        "seed": manifest.get("seed"),
        "variant": model.variant.slug(),
        "subjects": list(subjects),
        "report": report,
    }
    if args.out:
        dump_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=1, sort_keys=True))
    print(f"{model.variant.slug()}: stroke F1 "
          f"{report['per_class']['S']['f1']:.4f} "
          f"over {report['n_windows']} windows", file=sys.stderr)
    return 0


def _fold_worker(payload):
    (variant, plan, graph, model_cfg, train_cfg, seed,
     train_seqs, test_seqs) = payload
    model, log = train(train_seqs, variant, graph, model_cfg, train_cfg, seed)
    gold = _gold_labels(scheme_sequences(test_seqs, variant.labeling))
    preds = predict_sequences(model, test_seqs)
    report = evaluate_labels(gold, preds, variant.labeling)
    return {"report": report, "final_train_loss": log[-1]["loss"]}


def cmd_crossval(args) -> int:
    cfg = _effective_config(args)
    manifest, per_subject = load_dataset(args.data)
    plans = make_folds(manifest["subjects"], cfg.folds, cfg.seed)
    graph = _graph(cfg)
    run_hash = config_hash(cfg)
    jobs = []
    for variant in cfg.variants:
        for plan in plans:
            jobs.append((
                variant, plan, graph, cfg.model, cfg.train, cfg.seed,
                _gathered(per_subject, plan.train_subjects),
                _gathered(per_subject, plan.test_subjects),
            ))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_fold_worker, jobs))
    else:
        results = [_fold_worker(job) for job in jobs]
    out = Path(args.out)
    per_variant: dict[str, list[dict]] = {}
    for (variant, plan, *_), res in zip(jobs, results):
        slug = variant.slug()
        vdir = out / slug
        vdir.mkdir(parents=True, exist_ok=True)
        dump_json(vdir / f"fold{plan.fold_index}.json", {
            "config_hash": run_hash,
            "seed": cfg.seed,
            "variant": dataclasses.asdict(variant),
            "fold_index": plan.fold_index,
            "train_subjects": list(plan.train_subjects),
            "test_subjects": list(plan.test_subjects),
            "final_train_loss": res["final_train_loss"],
            "report": res["report"],
        })
        per_variant.setdefault(slug, []).append(res["report"])
    summary = {"config_hash": run_hash, "seed": cfg.seed, "folds": cfg.folds,
               "variants": {}}
    for variant in cfg.variants:
        slug = variant.slug()
        agg = aggregate_folds(per_variant[slug])
        dump_json(out / slug / "aggregate.json", {
            "config_hash": run_hash,
            "seed": cfg.seed,
            "variant": dataclasses.asdict(variant),
            "report": agg,
        })
        entry = {"stroke_f1": agg["per_class"]["S"]["f1"]}
        if variant.labeling == W.MULTI_PHASE:
            entry["unit_f1"] = agg["unit"]["f1"]
        summary["variants"][slug] = entry
        stroke = entry["stroke_f1"]
        print(f"{slug}: stroke F1 {stroke['mean']:.4f} "
              f"± {stroke['std']:.4f} over {len(plans)} folds")
    dump_json(out / "summary.json", summary)
    return 0


def cmd_predict(args) -> int:
    model, manifest = load_model(args.model)
    run = manifest.get("config", {}).get("run", {})
    ds = run.get("dataset") or {}
    raw_window = ds.get("window")
    try:
        wcfg = WindowSettings(**raw_window) if raw_window else WindowSettings()
    except TypeError as e:
        raise CheckpointError(f"bad window settings in checkpoint: {e}") from e
    raw_selection = ds.get("selection")
    selection = (selection_from_dict(raw_selection) if raw_selection
                 else default_selection())
    if len(selection) != model.graph.n_nodes:
        raise CheckpointError(
            f"checkpoint selects {len(selection)} joints but its graph has "
            f"{model.graph.n_nodes} nodes"
        )
    skeletons = parse_pose_file(args.poses, selection, fps=wcfg.fps)
    names = W.scheme_labels(model.variant.labeling)
    subjects = []
    for seq in skeletons:
        norm = (normalize_coords(seq, wcfg.center, wcfg.scale_pair)
                if wcfg.normalize else seq)
        wins = W.slide_windows(norm, wcfg.window_len, wcfg.stride)
        groups = W.group_into_sequences(seq.subject_id, wins, wcfg.seq_len)
        preds = predict_sequences(model, groups)
        labels = np.concatenate(preds)
        starts = np.concatenate([g.starts for g in groups])
        subjects.append({
            "subject_id": seq.subject_id,
            "windows": [{"start_frame": int(s), "label": names[int(c)]}
                        for s, c in zip(starts, labels)],
            "units": decode_intervals(labels, starts, wcfg.window_len,
                                      model.variant.labeling),
        })
    payload = {
        "config_hash": run.get("config_hash"),
        "seed": manifest.get("seed"),
        "variant": model.variant.slug(),
        "scheme": model.variant.labeling,
        "window_len": wcfg.window_len,
        "stride": wcfg.stride,
        "subjects": subjects,
    }
    dump_json(args.out, payload)
    n_units = sum(len(s["units"]) for s in subjects)
    print(f"predicted {sum(len(s['windows']) for s in subjects)} windows, "
          f"{n_units} gesture units for {len(subjects)} subjects; "
          f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = run_gradient_checks(n_seeds=args.seeds, tolerance=args.tolerance)
    for name in sorted(worst):
        print(f"{name:<24} max rel err {worst[name]:.3g}")
    print(f"all {len(worst)} cases within {args.tolerance:g} "
          f"over {args.seeds} seeds")
    return 0


def _add_common(sub, config=True, seed=True):
    if config:
        sub.add_argument("--config", default=None,
                         help="JSON run configuration file (defaults built in)")
    if seed:
        sub.add_argument("--seed", type=int, default=None,
                         help="override the configured random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gesturephase",
        description="Gesture phase detection from skeleton keypoint streams.",
    )
    parser.set_defaults(func=None)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="window and label a pose corpus")
    p.add_argument("--poses", required=True, help="pose JSONL file")
    p.add_argument("--annotations", required=True, help="stroke CSV file")
    p.add_argument("--out", required=True, help="dataset output directory")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one variant on a dataset")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variant", default=None,
                   help="variant slug (default: first configured variant)")
    p.add_argument("--quiet", action="store_true", help="suppress epoch lines")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--out", default=None, help="report file (default: stdout)")
    p.add_argument("--subjects", default=None,
                   help="comma-separated subject subset (default: all)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="k-fold cross-validated training")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel fold workers (default 1)")
    _add_common(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("predict", help="decode phases for new pose data")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--poses", required=True, help="pose JSONL file")
    p.add_argument("--out", required=True, help="prediction output file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="audit analytic gradients")
    p.add_argument("--seeds", type=int, default=20,
                   help="random instances per layer case (default 20)")
    p.add_argument("--tolerance", type=float, default=GRAD_TOLERANCE,
                   help="max relative error allowed (default 1e-5)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    if args.func is None:
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except GesturePhaseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
