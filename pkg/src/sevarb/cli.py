"""Command-line interface.

Exit codes: 0 success, 1 validation error (bad inputs/files), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from sevarb.arbiter import (
    PRESETS,
    ArbiterModel,
    ArbitrationOutcome,
    FeatureConfig,
    OutcomeSource,
    arbitrate,
    assemble_feature_matrix,
    fit_arbiter,
    run_ablation,
    trust_training_mask,
)
from sevarb.confidence import TriageThresholds, format_profile_table, profile
from sevarb.core import (
    PROBE_DIMENSIONS,
    ProbeDimension,
    ProbTriple,
    SeverityLabel,
    ValidationError,
)
from sevarb.fusion import (
    Mode,
    TrainConfig,
    load_params,
    predict_proba_batch,
    save_params,
    train,
    write_training_log,
)
from sevarb.harness import (
    ExperimentConfig,
    FoldAssignment,
    GeoMode,
    collect_oof,
    export_geojson,
    geo_entries_from_outcomes,
    geo_entries_from_predictions,
    run_experiment,
    stratified_folds,
    write_geojson,
)
from sevarb.interchange import (
    Manifest,
    bind_embeddings,
    dumps_canonical,
    read_captions,
    read_embeddings,
    read_manifest,
    read_predictions,
    read_prompt_set,
    write_embeddings,
    write_predictions,
)
from sevarb.metrics import confusion, evaluate, format_metric_table
from sevarb.probes import (
    Pooling,
    ProbeConfig,
    export_phrase_frequencies,
    mine_probes,
    probe_matrix_raw,
    write_prompt_sets,
)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _margin_records_for(manifest: Manifest, probs_by_id: dict[str, ProbTriple], th: TriageThresholds):
    from sevarb.confidence import margin_record

    records = []
    for s in manifest.samples:
        if s.id not in probs_by_id:
            raise ValidationError(f"missing prediction for sample {s.id!r}")
        rec = margin_record(s.id, probs_by_id[s.id], s.label, th)
        if rec is not None:
            records.append(rec)
    return records


def _single_model(pset, path: str) -> str:
    models = pset.models()
    if len(models) == 1:
        return models[0]
    raise ValidationError(f"{path}: holds {models}; pick one with --model")


def _load_pred_matrix(path: str, manifest: Manifest, model: str | None) -> tuple[str, np.ndarray]:
    pset = read_predictions(path, manifest)
    tag = model or _single_model(pset, path)
    if tag not in pset.by_model:
        raise ValidationError(f"{path}: no predictions for model {tag!r}")
    return tag, pset.matrix(tag, manifest)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    manifest = read_manifest(args.manifest)
    counts = manifest.class_counts
    print(f"manifest: {len(manifest)} samples, class counts {counts}")
    for path in args.embeddings or []:
        m = bind_embeddings(manifest, read_embeddings(path), Path(path).name)
        print(f"embeddings {path}: {m.shape[0]} x {m.shape[1]} ok")
    for path in args.predictions or []:
        pset = read_predictions(path, manifest)
        for model in pset.models():
            missing = len(pset.missing.get(model, []))
            note = "full coverage" if missing == 0 else f"{missing} samples missing"
            print(f"predictions {path} [{model}]: {len(pset.by_model[model])} records, {note}")
    if args.captions:
        records, warnings = read_captions(args.captions)
        print(f"captions {args.captions}: {len(records)} records, {len(warnings)} warnings")
        for w in warnings:
            print(f"  warning: {w}")
    for path in args.prompts or []:
        ps = read_prompt_set(path)
        print(f"prompts {path}: {ps.dimension.value}, {len(ps.prompts)} prompts")
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    seed = args.seed if args.seed is not None else 0
    folds = stratified_folds(manifest, args.folds, seed)
    out = _out_dir(args) / "folds.json"
    folds.save(out)
    sizes = [int(np.sum(folds.fold_of == f)) for f in range(folds.k)]
    print(f"wrote {out} (fold sizes: {sizes})")
    return 0


def _train_config_from(args) -> TrainConfig:
    base: dict = {}
    if args.train_config:
        base = json.loads(Path(args.train_config).read_text(encoding="utf-8"))
    base["mode"] = args.mode
    if args.seed is not None:
        base["seed"] = args.seed
    return TrainConfig.from_dict(base)


def cmd_train_head(args) -> int:
    manifest = read_manifest(args.manifest)
    img = bind_embeddings(manifest, read_embeddings(args.images), "images") if args.images else None
    txt = bind_embeddings(manifest, read_embeddings(args.texts), "texts") if args.texts else None
    cfg = _train_config_from(args)
    labels = manifest.labels
    out = _out_dir(args)
    if args.folds_file:
        folds = FoldAssignment.load(args.folds_file)
        for fold in range(folds.k):
            tr = folds.train_indices(fold)
            fold_cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": cfg.seed + fold})
            result = train(
                None if img is None else img[tr],
                None if txt is None else txt[tr],
                labels[tr],
                fold_cfg,
            )
            path = out / f"{args.tag}_fold{fold}.darp"
            save_params(result.params, path, fold_cfg)
            write_training_log(result.log, out / f"{args.tag}_fold{fold}_log.jsonl")
            print(f"fold {fold}: final mean loss {result.log[-1]['mean_loss']:.6f} -> {path}")
    else:
        result = train(img, txt, labels, cfg)
        path = out / f"{args.tag}.darp"
        save_params(result.params, path, cfg)
        write_training_log(result.log, out / f"{args.tag}_log.jsonl")
        print(f"final mean loss {result.log[-1]['mean_loss']:.6f} -> {path}")
    return 0


def cmd_predict(args) -> int:
    manifest = read_manifest(args.manifest)
    img = bind_embeddings(manifest, read_embeddings(args.images), "images") if args.images else None
    txt = bind_embeddings(manifest, read_embeddings(args.texts), "texts") if args.texts else None
    mode = Mode(args.mode)
    out = _out_dir(args) / f"{args.tag}.jsonl"
    if args.folds_file:
        folds = FoldAssignment.load(args.folds_file)
        params_dir = Path(args.params)
        fold_params = [load_params(params_dir / f"{args.tag}_fold{f}.darp") for f in range(folds.k)]
        probs = collect_oof(fold_params, folds, img, txt, mode)
    else:
        params = load_params(args.params)
        probs = predict_proba_batch(params, img, txt, mode)
    write_predictions(
        ((s.id, args.tag, ProbTriple.from_array(probs[s.row])) for s in manifest.samples),
        out,
    )
    print(f"wrote {out} ({len(manifest)} predictions)")
    return 0


def cmd_mine_probes(args) -> int:
    records, warnings = read_captions(args.captions)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    captions = [str(r["description"]) for r in records if str(r["description"]).strip()]
    cfg = ProbeConfig.from_json_file(args.probe_config) if args.probe_config else ProbeConfig()
    selected, prompt_sets = mine_probes(captions, cfg)
    out = _out_dir(args)
    written = write_prompt_sets(prompt_sets, out)
    freq_path = out / "phrase_frequencies.json"
    freq_path.write_bytes(export_phrase_frequencies(selected).encode("utf-8") + b"\n")
    for dim in PROBE_DIMENSIONS:
        print(f"{dim.value}: {len(selected.get(dim, []))} phrases")
    print(f"wrote {len(written)} prompt files and {freq_path}")
    return 0


def _parse_probe_blob_args(pairs: list[str]) -> dict[ProbeDimension, np.ndarray]:
    blobs: dict[ProbeDimension, np.ndarray] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"expected dimension=path, got {pair!r}")
        name, path = pair.split("=", 1)
        blobs[ProbeDimension.from_name(name)] = read_embeddings(path)
    return blobs


def cmd_score_probes(args) -> int:
    manifest = read_manifest(args.manifest)
    img = bind_embeddings(manifest, read_embeddings(args.images), "images")
    blobs = _parse_probe_blob_args(args.prompt_embeddings)
    for dim in PROBE_DIMENSIONS:
        if dim not in blobs:
            raise ValidationError(f"missing prompt embeddings for dimension {dim.value}")
    probes = probe_matrix_raw(img, blobs, Pooling(args.pooling))
    out = _out_dir(args) / "probes.darb"
    write_embeddings(probes.astype(np.float32), out)
    print(f"wrote {out} ({probes.shape[0]} x 4)")
    return 0


def cmd_profile_errors(args) -> int:
    manifest = read_manifest(args.manifest)
    pset = read_predictions(args.predictions, manifest)
    tag = args.model or _single_model(pset, args.predictions)
    th = TriageThresholds(m_hi=args.m_hi, m_lo=args.m_lo)
    records = _margin_records_for(manifest, pset.by_model[tag], th)
    rep = profile(records)
    out = _out_dir(args)
    (out / f"profile_{tag}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    (out / f"profile_{tag}.txt").write_text(format_profile_table([(tag, rep)]), encoding="utf-8")
    with (out / f"margins_{tag}.jsonl").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                dumps_canonical(
                    {
                        "id": rec.id,
                        "predicted": rec.predicted.canonical_name,
                        "truth": rec.truth.canonical_name,
                        "margin": rec.margin,
                        "triage": rec.triage.value,
                    }
                )
                + "\n"
            )
    print(format_profile_table([(tag, rep)]), end="")
    return 0


def _feature_config_from(args) -> FeatureConfig:
    cfg = PRESETS[args.preset]
    if args.tau is not None:
        cfg = FeatureConfig(cfg.use_confidence, cfg.use_uncertainty, cfg.use_probes, args.tau)
    return cfg


def cmd_train_arbiter(args) -> int:
    manifest = read_manifest(args.manifest)
    _, preds_a = _load_pred_matrix(args.pred_a, manifest, args.model_a)
    _, preds_b = _load_pred_matrix(args.pred_b, manifest, args.model_b)
    probes = read_embeddings(args.probes) if args.probes else None
    cfg = _feature_config_from(args)
    labels = manifest.labels
    mask, y = trust_training_mask(labels, preds_a, preds_b)
    x = assemble_feature_matrix(
        preds_a[mask], preds_b[mask], None if probes is None else probes[mask], cfg
    )
    model = fit_arbiter(x, y, cfg, reg_l2=args.reg_l2, seed=args.seed or 0)
    out = _out_dir(args) / "arbiter.json"
    model.save(out)
    print(
        f"wrote {out} ({model.n_train} training disagreements, "
        f"{model.n_iterations} iterations, grad norm {model.final_grad_norm:.2e})"
    )
    return 0


def cmd_arbitrate(args) -> int:
    manifest = read_manifest(args.manifest)
    _, preds_a = _load_pred_matrix(args.pred_a, manifest, args.model_a)
    _, preds_b = _load_pred_matrix(args.pred_b, manifest, args.model_b)
    probes = read_embeddings(args.probes) if args.probes else None
    model = ArbiterModel.load(args.arbiter)
    out_dir = _out_dir(args)
    outcomes = []
    for s in manifest.samples:
        outcomes.append(
            arbitrate(
                ProbTriple.from_array(preds_a[s.row]),
                ProbTriple.from_array(preds_b[s.row]),
                None if probes is None else probes[s.row],
                model,
                sample_id=s.id,
            )
        )
    out = out_dir / "outcomes.jsonl"
    with out.open("w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(
                dumps_canonical(
                    {"id": o.id, "final": o.final.canonical_name, "source": o.source.value, "score": o.score}
                )
                + "\n"
            )
    labels = manifest.labels
    finals = np.array([int(o.final) for o in outcomes])
    rep = evaluate(confusion(labels, finals))
    summary = {
        "n_samples": len(manifest),
        "n_agreement": sum(1 for o in outcomes if o.source is OutcomeSource.AGREEMENT),
        "accuracy": rep.accuracy,
        "macro_f1": rep.f1_macro,
    }
    (out_dir / "arbitration.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}; accuracy {rep.accuracy:.4f}")
    return 0


def cmd_ablate(args) -> int:
    manifest = read_manifest(args.manifest)
    _, preds_a = _load_pred_matrix(args.pred_a, manifest, args.model_a)
    _, preds_b = _load_pred_matrix(args.pred_b, manifest, args.model_b)
    probes = read_embeddings(args.probes) if args.probes else None
    folds = FoldAssignment.load(args.folds_file)
    presets = {name: PRESETS[name] for name in (args.presets or list(PRESETS))}
    table = run_ablation(
        manifest.labels, preds_a, preds_b, probes, folds.fold_of,
        presets=presets, reg_l2=args.reg_l2, seed=args.seed or 0,
    )
    out = _out_dir(args)
    (out / "ablation.json").write_text(table.to_json() + "\n", encoding="utf-8")
    (out / "ablation.txt").write_text(table.to_text(), encoding="utf-8")
    print(table.to_text(), end="")
    return 0


def cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest)
    tag, probs = _load_pred_matrix(args.predictions, manifest, args.model)
    rep = evaluate(confusion(manifest.labels, np.argmax(probs, axis=1)))
    out = _out_dir(args)
    (out / f"metrics_{tag}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    txt = format_metric_table([(tag, rep, None)])
    (out / f"metrics_{tag}.txt").write_text(txt, encoding="utf-8")
    print(txt, end="")
    return 0


def _read_outcomes(path: str, manifest: Manifest) -> list[ArbitrationOutcome]:
    ids = {s.id for s in manifest.samples}
    outcomes = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if rec["id"] not in ids:
                raise ValidationError(f"{path}:{lineno}: unknown id {rec['id']!r}")
            outcomes.append(
                ArbitrationOutcome(
                    id=str(rec["id"]),
                    final=SeverityLabel.from_name(rec["final"]),
                    source=OutcomeSource(rec["source"]),
                    score=rec.get("score"),
                )
            )
    return outcomes


def cmd_export_geo(args) -> int:
    manifest = read_manifest(args.manifest)
    th = TriageThresholds(m_hi=args.m_hi, m_lo=args.m_lo)
    if bool(args.outcomes) == bool(args.predictions):
        raise ValidationError("export-geo needs exactly one of --predictions or --outcomes")
    if args.outcomes:
        entries = geo_entries_from_outcomes(_read_outcomes(args.outcomes, manifest))
    else:
        pset = read_predictions(args.predictions, manifest)
        tag = args.model or _single_model(pset, args.predictions)
        entries = geo_entries_from_predictions(pset.by_model[tag], tag)
    collection = export_geojson(manifest, entries, GeoMode(args.mode), th)
    out = _out_dir(args) / args.name
    write_geojson(collection, out)
    print(f"wrote {out} ({len(collection['features'])} features)")
    return 0


def cmd_run(args) -> int:
    if not args.config:
        raise ValidationError("run requires --config <json>")
    config = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = Path(args.out or "run")
    result = run_experiment(config, out)
    print(f"run complete: {out}")
    for tag in ("model_a", "model_b", "arbitrated"):
        print(f"  {tag}: accuracy {result.metrics[tag].accuracy:.4f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sevarb",
        description="Damage severity classification with disagreement-driven arbitration.",
    )
    parser.add_argument("--config", help="JSON config file (used by: run)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate interchange files against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", nargs="*")
    p.add_argument("--predictions", nargs="*")
    p.add_argument("--captions")
    p.add_argument("--prompts", nargs="*")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="stratified fold assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-head", help="train fusion head (per fold when folds given)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images")
    p.add_argument("--texts")
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--folds-file")
    p.add_argument("--train-config", help="JSON with TrainConfig overrides")
    p.add_argument("--tag", default="model")
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("predict", help="predict probabilities (OOF when folds given)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images")
    p.add_argument("--texts")
    p.add_argument("--mode", required=True, choices=[m.value for m in Mode])
    p.add_argument("--params", required=True, help="params file, or dir with --folds-file")
    p.add_argument("--folds-file")
    p.add_argument("--tag", default="model")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("mine-probes", help="mine dimension phrases and prompt sets")
    p.add_argument("--captions", required=True)
    p.add_argument("--probe-config")
    p.set_defaults(func=cmd_mine_probes)

    p = sub.add_parser("score-probes", help="score images against prompt embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument(
        "--prompt-embeddings", nargs="+", required=True, metavar="DIM=BLOB",
        help="four dimension=path pairs",
    )
    p.add_argument("--pooling", default="max", choices=[po.value for po in Pooling])
    p.set_defaults(func=cmd_score_probes)

    p = sub.add_parser("profile-errors", help="confidence-margin triage profile")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--model")
    p.add_argument("--m-hi", type=float, default=0.5)
    p.add_argument("--m-lo", type=float, default=0.1)
    p.set_defaults(func=cmd_profile_errors)

    p = sub.add_parser("train-arbiter", help="fit the trust meta-classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--model-a")
    p.add_argument("--model-b")
    p.add_argument("--probes")
    p.add_argument("--preset", default="conf", choices=list(PRESETS))
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--reg-l2", type=float, default=1e-2)
    p.set_defaults(func=cmd_train_arbiter)

    p = sub.add_parser("arbitrate", help="arbitrate two prediction files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--model-a")
    p.add_argument("--model-b")
    p.add_argument("--probes")
    p.add_argument("--arbiter", required=True)
    p.set_defaults(func=cmd_arbitrate)

    p = sub.add_parser("ablate", help="feature-preset ablation table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--model-a")
    p.add_argument("--model-b")
    p.add_argument("--probes")
    p.add_argument("--folds-file", required=True)
    p.add_argument("--presets", nargs="*", choices=list(PRESETS))
    p.add_argument("--reg-l2", type=float, default=1e-2)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("evaluate", help="metric report for a prediction file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--model")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-geo", help="GeoJSON export of predictions or outcomes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions")
    p.add_argument("--outcomes")
    p.add_argument("--model")
    p.add_argument("--mode", default="all", choices=[m.value for m in GeoMode])
    p.add_argument("--name", default="export.geojson")
    p.add_argument("--m-hi", type=float, default=0.5)
    p.add_argument("--m-lo", type=float, default=0.1)
    p.set_defaults(func=cmd_export_geo)

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
