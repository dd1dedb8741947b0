"""Command-line interface; `buscad run` drives the full pipeline and the
remaining subcommands expose the individual stages."""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .classic import KNN_EPSILON, KernelSpec, KnnModel, knn_predict_batch, knn_select_k, svm_decision, svm_grid_search, svm_predict, svm_train_ovr
from .data import (
    UNIT,
    ClassLabel,
    GrayImage,
    load_grayscale_image,
    load_manifest,
    load_mask,
    official_split,
    parse_label,
    stratified_split,
    to_raw8,
    write_pgm,
)
from .features import FeatureVector, apply_scaler, fit_scaler
from .metrics import build_report
from .nn import embed_batch, predict_logits, softmax
from .pipeline import (
    PreprocessRecipe,
    RunConfig,
    handcrafted_matrix,
    load_and_preprocess,
    run_config_from_dict,
    run_pipeline,
    validate_external,
    write_gradcam_panels,
)
from .preprocess import AugmentPolicy, augment, extract_roi, median_filter_3x3, normalize_minmax, resize_bilinear
from .synth import SynthConfig, write_dataset


def _load_split(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_feature_csv(path, names, matrix, labels) -> None:
    lines = [",".join(list(names) + ["label"])]
    for row, label in zip(matrix, labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{ClassLabel(label).name.lower()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_feature_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[-1] != "label":
            raise ValueError(f"feature CSV must end with a label column: {path}")
        names = header[:-1]
        rows, labels = [], []
        for row in reader:
            rows.append([float(v) for v in row[:-1]])
            labels.append(int(parse_label(row[-1])))
    if not rows:
        raise ValueError(f"empty feature CSV: {path}")
    return names, np.array(rows), np.array(labels, dtype=int)


# -- subcommand handlers -----------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_normal=args.n_normal, n_benign=args.n_benign, n_malignant=args.n_malignant,
        height=args.size, width=args.size, noise_sigma=args.sigma, seed=args.seed,
    )
    manifest = write_dataset(cfg, args.out)
    print(f"wrote {manifest}")
    return 0


def cmd_split(args) -> int:
    if args.mode == "official":
        spec = official_split(args.manifest)
    else:
        samples = load_manifest(args.manifest)
        ratios = tuple(float(r) for r in args.ratios.split(","))
        spec = stratified_split(samples, ratios, args.seed)
    Path(args.out).write_text(
        json.dumps({"train": spec.train, "val": spec.val, "test": spec.test, "seed": spec.seed}, sort_keys=True),
        encoding="utf-8",
    )
    print(f"wrote {args.out}")
    return 0


def cmd_features(args) -> int:
    samples = load_manifest(args.manifest)
    recipe = PreprocessRecipe(args.target_size, not args.no_median, args.roi)
    images, masks, labels = load_and_preprocess(samples, recipe)
    names, matrix = handcrafted_matrix(images, masks, args.glcm_levels, args.hist_bins)
    _write_feature_csv(args.out, names, matrix, labels)
    print(f"wrote {args.out} ({len(matrix)} rows, {len(names)} features)")
    return 0


def cmd_train_classic(args) -> int:
    names, x, y = _read_feature_csv(args.features)
    if args.split:
        idx = _load_split(args.split)["train"]
        x, y = x[idx], y[idx]
    scaler = None
    if args.scale:
        rows = [FeatureVector(names, r) for r in x]
        scaler = fit_scaler(rows)
        x = np.stack([apply_scaler(scaler, r).values for r in rows])
    if args.model == "svm":
        c, gamma, cv_acc = svm_grid_search(x, y, folds=args.folds, seed=args.seed, kind=args.kernel)
        model = svm_train_ovr(x, y, c, KernelSpec(args.kernel, gamma), seed=args.seed)
        ckpt.save_svm(args.out, model, scaler, names)
        print(f"svm: C={c} gamma={gamma} cv_accuracy={cv_acc:.4f} -> {args.out}")
    else:
        k, cv_acc = knn_select_k(x, y, k_range=range(1, args.k_max + 1),
                                 folds=args.folds, seed=args.seed, epsilon=args.epsilon)
        model = KnnModel(x, y, k, args.epsilon)
        ckpt.save_knn(args.out, model, scaler, names)
        print(f"knn: k={k} cv_accuracy={cv_acc:.4f} -> {args.out}")
    return 0


def cmd_train_cnn(args) -> int:
    from .pipeline import train_cnn_transfer

    samples = load_manifest(args.manifest)
    recipe = PreprocessRecipe(args.target_size, not args.no_median, args.roi)
    images, masks, labels = load_and_preprocess(samples, recipe)
    split = _load_split(args.split) if args.split else None
    if split:
        tr, va = split["train"], split["val"]
    else:
        spec = stratified_split(samples, seed=args.seed)
        tr, va = spec.train, spec.val
    cfg = run_config_from_dict(
        {"data": {"manifest": str(args.manifest)},
         "train": {"max_epochs": args.epochs, "pretext_epochs": args.pretext_epochs},
         "preprocess": {"target_size": args.target_size, "median_filter": not args.no_median, "use_roi": args.roi}},
        outdir=".", seed=args.seed,
    )
    model, histories = train_cnn_transfer(cfg, (images[tr], labels[tr]), (images[va], labels[va]))
    deep = embed_batch(model, images[tr])
    ckpt.save_checkpoint(args.out, model, recipe.to_dict(), {"max_epochs": args.epochs, "seed": args.seed},
                         embed_mean=deep.mean(axis=0))
    print(f"wrote {args.out}")
    return 0


def cmd_embed(args) -> int:
    loaded = ckpt.load_checkpoint(args.checkpoint)
    samples = load_manifest(args.manifest)
    recipe = PreprocessRecipe.from_dict(loaded["preprocess"])
    images, _, labels = load_and_preprocess(samples, recipe)
    emb = embed_batch(loaded["model"], images)
    pad = len(str(emb.shape[1] - 1))
    names = [f"deep_{i:0{pad}d}" for i in range(emb.shape[1])]
    _write_feature_csv(args.out, names, emb, labels)
    print(f"wrote {args.out} ({emb.shape[0]} rows, {emb.shape[1]} dims)")
    return 0


def cmd_eval(args) -> int:
    model_path = Path(args.model)
    if model_path.suffix == ".npz":
        loaded = ckpt.load_checkpoint(model_path)
        samples = load_manifest(args.manifest)
        recipe = PreprocessRecipe.from_dict(loaded["preprocess"])
        images, _, y = load_and_preprocess(samples, recipe)
        if args.split:
            idx = _load_split(args.split)[args.subset]
            images, y = images[idx], y[idx]
        logits = predict_logits(loaded["model"], images)
        preds = logits.argmax(axis=1)
        scores = softmax(logits)
        name = "cnn"
    else:
        loaded = ckpt.load_classic(model_path)
        names, x, y = _read_feature_csv(args.features)
        if args.split:
            idx = _load_split(args.split)[args.subset]
            x, y = x[idx], y[idx]
        if loaded["scaler"] is not None:
            rows = [FeatureVector(names, r) for r in x]
            x = np.stack([apply_scaler(loaded["scaler"], r).values for r in rows])
        if loaded["type"] == "svm_ovr":
            preds = svm_predict(loaded["model"], x)
            scores = svm_decision(loaded["model"], x)
        else:
            preds, scores = knn_predict_batch(loaded["model"], x)
        name = loaded["type"]
    have_all = all((y == c).any() for c in range(scores.shape[1]))
    report = build_report(name, y, preds, scores if have_all else None)
    out = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(out)
    return 0


def cmd_gradcam(args) -> int:
    loaded = ckpt.load_checkpoint(args.checkpoint)
    samples = load_manifest(args.manifest)
    recipe = PreprocessRecipe.from_dict(loaded["preprocess"])
    images, masks, labels = load_and_preprocess(samples, recipe)
    records = write_gradcam_panels(loaded["model"], images, masks, labels,
                                   Path(args.out), args.alpha, args.max_images)
    Path(args.out, "peaks.json").write_text(json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(records)} panels to {args.out}")
    return 0


def _apply_override(doc: dict, assignment: str) -> None:
    """Apply a dotted-path override like train.max_epochs=10; the value is
    parsed as JSON with a plain-string fallback."""
    if "=" not in assignment:
        raise ValueError(f"override must look like key.path=value: {assignment!r}")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot override through non-object key {key!r}")
    node[keys[-1]] = value


def cmd_run(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.manifest:
        doc.setdefault("data", {})["manifest"] = args.manifest
    if args.roster:
        doc["roster"] = args.roster.split(",")
    for assignment in args.set or []:
        _apply_override(doc, assignment)
    cfg = run_config_from_dict(doc, args.out, args.seed)
    out = run_pipeline(cfg)
    print(f"run complete: {out}")
    return 0


def cmd_validate_external(args) -> int:
    report, delta = validate_external(args.checkpoint, args.manifest)
    doc = {"report": report.to_dict(), "delta_mu": delta.delta_mu}
    out = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "external_validation.json").write_text(out + "\n", encoding="utf-8")
        print(f"wrote {args.out}/external_validation.json")
    else:
        print(out)
    return 0


def _image_op(args, op) -> int:
    img = load_grayscale_image(args.input)
    out = op(img)
    write_pgm(to_raw8(out), args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_normalize(args) -> int:
    return _image_op(args, normalize_minmax)


def cmd_median(args) -> int:
    return _image_op(args, lambda im: median_filter_3x3(normalize_minmax(im)))


def cmd_resize(args) -> int:
    return _image_op(args, lambda im: resize_bilinear(normalize_minmax(im), args.width, args.height))


def cmd_roi(args) -> int:
    mask = load_mask(args.mask)
    return _image_op(args, lambda im: extract_roi(im, mask))


def cmd_augment(args) -> int:
    policy = AugmentPolicy(args.hflip_prob, args.vflip_prob, args.rot_deg_max, args.zoom_frac_max, args.seed)
    return _image_op(args, lambda im: augment(normalize_minmax(im), policy, args.draw_index))


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="buscad", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n-normal", type=int, default=20)
    s.add_argument("--n-benign", type=int, default=20)
    s.add_argument("--n-malignant", type=int, default=20)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--sigma", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="write a stratified or official split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--ratios", default="0.8,0.1,0.1")
    s.add_argument("--mode", choices=("stratified", "official"), default="stratified")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("features", help="write the handcrafted feature CSV")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--target-size", type=int, default=64)
    s.add_argument("--glcm-levels", type=int, default=8)
    s.add_argument("--hist-bins", type=int, default=32)
    s.add_argument("--no-median", action="store_true")
    s.add_argument("--roi", action="store_true")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train-classic", help="grid-searched SVM or CV-selected KNN from a feature CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--model", choices=("svm", "knn"), required=True)
    s.add_argument("--split", help="split JSON; train indices are used")
    s.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--k-max", type=int, default=10)
    s.add_argument("--epsilon", type=float, default=KNN_EPSILON)
    s.add_argument("--scale", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_classic)

    s = sub.add_parser("train-cnn", help="pretext-pretrain + fine-tune the mini-CNN")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", help="split JSON with train/val indices")
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--pretext-epochs", type=int, default=12)
    s.add_argument("--target-size", type=int, default=64)
    s.add_argument("--no-median", action="store_true")
    s.add_argument("--roi", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_cnn)

    s = sub.add_parser("embed", help="write penultimate embeddings as a feature CSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("eval", help="evaluate a model file and print/write the report")
    s.add_argument("--model", required=True, help="cnn .npz checkpoint or classic .json")
    s.add_argument("--manifest", help="required for cnn checkpoints")
    s.add_argument("--features", help="required for classic models")
    s.add_argument("--split", help="optional split JSON")
    s.add_argument("--subset", choices=("train", "val", "test"), default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcam", help="write Grad-CAM heat and blend PGMs")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--alpha", type=float, default=0.4)
    s.add_argument("--max-images", type=int, default=16)
    s.set_defaults(func=cmd_gradcam)

    s = sub.add_parser("run", help="full pipeline; --seed is mandatory")
    s.add_argument("--config", help="run-config JSON (see README schema)")
    s.add_argument("--manifest", help="override data.manifest")
    s.add_argument("--roster", help="comma-separated roster override")
    s.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                   help="override any config option, e.g. --set train.max_epochs=10")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("validate-external", help="evaluate a checkpoint on an external manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_validate_external)

    for name, fn in (("normalize", cmd_normalize), ("median", cmd_median)):
        s = sub.add_parser(name, help=f"{name} one image (PGM in, PGM out)")
        s.add_argument("--input", required=True)
        s.add_argument("--out", required=True)
        s.set_defaults(func=fn)

    s = sub.add_parser("resize", help="bilinear resize one image")
    s.add_argument("--input", required=True)
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--height", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_resize)

    s = sub.add_parser("roi", help="mask-and-crop one image")
    s.add_argument("--input", required=True)
    s.add_argument("--mask", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_roi)

    s = sub.add_parser("augment", help="one deterministic augmentation draw")
    s.add_argument("--input", required=True)
    s.add_argument("--hflip-prob", type=float, default=0.5)
    s.add_argument("--vflip-prob", type=float, default=0.5)
    s.add_argument("--rot-deg-max", type=float, default=10.0)
    s.add_argument("--zoom-frac-max", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--draw-index", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # uniform nonzero-exit error contract
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
