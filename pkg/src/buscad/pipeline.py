"""End-to-end orchestration: split, preprocess, features/embeddings, model
roster training, evaluation, Grad-CAM panels, selection, and external
validation with the domain-shift indicator."""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import checkpoint as ckpt
from .classic import (
    KNN_EPSILON,
    SVM_C_GRID,
    SVM_GAMMA_GRID,
    KernelSpec,
    KnnModel,
    knn_predict_batch,
    knn_select_k,
    svm_decision,
    svm_grid_search,
    svm_predict,
    svm_train_ovr,
)
from .data import (
    UNIT,
    BinaryMask,
    ClassLabel,
    GrayImage,
    LabeledSample,
    SplitSpec,
    load_grayscale_image,
    load_manifest,
    load_mask,
    official_split,
    stratified_kfold_indices,
    stratified_split,
    to_raw8,
    write_pgm,
)
from .features import FeatureVector, apply_scaler, fit_scaler, handcrafted_vector
from .gradcam import grad_cam, heatmap_peak, upsample_overlay
from .metrics import (
    DomainShiftIndicator,
    EvalReport,
    build_report,
    domain_shift_delta,
    select_best_model,
)
from .nn import TrainConfig, build_mini_cnn, embed_batch, predict_logits, replace_head, softmax, train
from .preprocess import AugmentPolicy, extract_roi, median_filter_3x3, normalize_minmax, resize_bilinear
from .synth import SynthConfig, write_dataset

ROSTER_ALL = ("svm-handcrafted", "svm-deep", "knn-handcrafted", "knn-deep", "cnn")


@dataclass
class PreprocessRecipe:
    target_size: int = 64
    median_filter: bool = True
    use_roi: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessRecipe":
        return cls(**d)


@dataclass
class RunConfig:
    outdir: str
    seed: int = 0
    manifest: Optional[str] = None
    synth: Optional[SynthConfig] = None
    ratios: tuple = (0.8, 0.1, 0.1)
    split_mode: str = "stratified"  # or "official"
    recipe: PreprocessRecipe = field(default_factory=PreprocessRecipe)
    glcm_levels: int = 8
    hist_bins: int = 32
    roster: tuple = ROSTER_ALL
    svm_kind: str = "rbf"
    svm_c_grid: tuple = SVM_C_GRID
    svm_gamma_grid: tuple = SVM_GAMMA_GRID
    cv_folds: int = 5
    knn_k_range: tuple = tuple(range(1, 11))
    knn_epsilon: float = KNN_EPSILON
    train: TrainConfig = field(default_factory=TrainConfig)
    pretext_epochs: int = 12
    pretext_per_class: int = 150  # size of the generated pretext corpus
    finetune_mode: str = "full"  # "full": anchored L2-SP over all theta;
    # "head-only": backbone stays frozen until plateau-driven unfreezing
    head_warmup_epochs: int = 2  # head-only epochs before "full" fine-tuning
    head_warmup_lr: float = 1e-2
    conv_channels: tuple = (8, 16)
    embed_dim: int = 32
    residual: bool = True
    gradcam_max_images: int = 16
    gradcam_alpha: float = 0.4

    def __post_init__(self):
        if not self.roster:
            raise ValueError("model roster must be nonempty")
        unknown = set(self.roster) - set(ROSTER_ALL)
        if unknown:
            raise ValueError(f"unknown roster entries: {sorted(unknown)}")
        if self.manifest is None and self.synth is None:
            raise ValueError("config needs either a manifest or a synth section")


def run_config_from_dict(d: dict, outdir, seed: int) -> RunConfig:
    """Build a RunConfig from the documented JSON schema (see README)."""
    data = d.get("data", {})
    synth = None
    if "synth" in data:
        synth = SynthConfig(**{**data["synth"], "seed": seed})
    split = d.get("split", {})
    recipe = PreprocessRecipe.from_dict(d.get("preprocess", {})) if d.get("preprocess") else PreprocessRecipe()
    feats = d.get("features", {})
    svm = d.get("svm", {})
    knn = d.get("knn", {})
    tr = dict(d.get("train", {}))
    pretext_epochs = tr.pop("pretext_epochs", 12)
    pretext_per_class = tr.pop("pretext_per_class", 150)
    finetune_mode = tr.pop("finetune_mode", "full")
    head_warmup_epochs = tr.pop("head_warmup_epochs", 2)
    head_warmup_lr = tr.pop("head_warmup_lr", 1e-2)
    aug = tr.pop("augment", None)
    policy = AugmentPolicy(**{**aug, "seed": seed}) if aug else None
    max_epochs = tr.get("max_epochs", 50)
    tr.setdefault("patience", min(5, max_epochs))
    train_cfg = TrainConfig(**tr, seed=seed, augmentation=policy)
    gc = d.get("gradcam", {})
    arch = d.get("arch", {})
    return RunConfig(
        outdir=str(outdir),
        seed=seed,
        manifest=data.get("manifest"),
        synth=synth,
        ratios=tuple(split.get("ratios", (0.8, 0.1, 0.1))),
        split_mode=split.get("mode", "stratified"),
        recipe=recipe,
        glcm_levels=feats.get("glcm_levels", 8),
        hist_bins=feats.get("hist_bins", 32),
        roster=tuple(d.get("roster", ROSTER_ALL)),
        svm_kind=svm.get("kind", "rbf"),
        svm_c_grid=tuple(svm.get("c_grid", SVM_C_GRID)),
        svm_gamma_grid=tuple(svm.get("gamma_grid", SVM_GAMMA_GRID)),
        cv_folds=d.get("cv_folds", 5),
        knn_k_range=tuple(knn.get("k_range", range(1, 11))),
        knn_epsilon=knn.get("epsilon", KNN_EPSILON),
        train=train_cfg,
        pretext_epochs=pretext_epochs,
        pretext_per_class=pretext_per_class,
        finetune_mode=finetune_mode,
        head_warmup_epochs=head_warmup_epochs,
        head_warmup_lr=head_warmup_lr,
        conv_channels=tuple(arch.get("conv_channels", (8, 16))),
        embed_dim=arch.get("embed_dim", 32),
        residual=arch.get("residual", True),
        gradcam_max_images=gc.get("max_images", 16),
        gradcam_alpha=gc.get("alpha", 0.4),
    )


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def preprocess_image(img: GrayImage, mask: Optional[BinaryMask], recipe: PreprocessRecipe) -> GrayImage:
    """normalize -> median -> (ROI at native mask scale) -> resize."""
    out = normalize_minmax(img)
    if recipe.median_filter:
        out = median_filter_3x3(out)
    if recipe.use_roi and mask is not None and not mask.is_empty():
        out = extract_roi(out, mask)
    return resize_bilinear(out, recipe.target_size, recipe.target_size)


def load_and_preprocess(samples: list[LabeledSample], recipe: PreprocessRecipe):
    """Returns (images (N,1,S,S) float64, masks list, labels (N,) int)."""
    xs, masks, ys = [], [], []
    for s in samples:
        img = load_grayscale_image(s.image_path)
        mask = load_mask(s.mask_path) if s.mask_path else None
        xs.append(preprocess_image(img, mask, recipe).pixels)
        masks.append(mask)
        ys.append(int(s.label))
    return np.stack(xs)[:, None], masks, np.array(ys, dtype=int)


def handcrafted_matrix(images: np.ndarray, masks: list, levels: int, bins: int):
    """Unscaled handcrafted rows; shape features come from the native-scale mask."""
    rows = [
        handcrafted_vector(GrayImage(images[i, 0], UNIT), masks[i], levels, bins)
        for i in range(len(images))
    ]
    return rows[0].names, np.stack([r.values for r in rows])


# ---------------------------------------------------------------------------
# CNN training (pretext anchor + fine-tune)
# ---------------------------------------------------------------------------

def _pretext_corpus(cfg: RunConfig):
    """A dedicated lesion/no-lesion corpus from the generator, preprocessed
    with the run's recipe; the desk-scale stand-in for a pretraining set."""
    from .synth import generate

    base = cfg.synth
    synth_cfg = SynthConfig(
        n_normal=cfg.pretext_per_class,
        n_benign=cfg.pretext_per_class,
        n_malignant=cfg.pretext_per_class,
        height=base.height if base else cfg.recipe.target_size,
        width=base.width if base else cfg.recipe.target_size,
        noise_sigma=base.noise_sigma if base else 0.05,
        seed=cfg.seed + 90001,
    )
    images, labels = [], []
    for img, mask, label in generate(synth_cfg):
        images.append(preprocess_image(img, mask, cfg.recipe).pixels)
        labels.append(int(label != ClassLabel.NORMAL))
    return np.stack(images)[:, None], np.array(labels, dtype=int)


def train_cnn_transfer(
    cfg: RunConfig,
    train_xy: tuple[np.ndarray, np.ndarray],
    val_xy: tuple[np.ndarray, np.ndarray],
    eval_xy: Optional[tuple[np.ndarray, np.ndarray]] = None,
):
    """Pretext pretraining (lesion vs no-lesion) followed by head replacement
    and anchored fine-tuning.

    Synth-backed runs pretrain on a dedicated generated corpus; manifest
    runs binarize their own train/val splits. Falls back to a random-init
    anchor when the pretext task is degenerate (a single pretext class)."""
    size = cfg.recipe.target_size
    model = build_mini_cnn(
        input_hw=(size, size),
        conv_channels=cfg.conv_channels,
        embed_dim=cfg.embed_dim,
        n_classes=2,
        residual=cfg.residual,
        seed=cfg.seed,
    )
    tx, ty = train_xy
    vx, vy = val_xy
    if cfg.synth is not None and cfg.pretext_per_class > 0:
        px, py = _pretext_corpus(cfg)
        n_val = max(1, len(px) // 10)
        order = np.random.default_rng([cfg.seed, 41]).permutation(len(px))
        pre_tx, pre_ty = px[order[n_val:]], py[order[n_val:]]
        pre_vx, pre_vy = px[order[:n_val]], py[order[:n_val]]
    else:
        pre_tx, pre_ty = tx, (ty != int(ClassLabel.NORMAL)).astype(int)
        pre_vx, pre_vy = vx, (vy != int(ClassLabel.NORMAL)).astype(int)
    pretext_history = None
    if cfg.pretext_epochs > 0 and len(np.unique(pre_ty)) == 2 and len(np.unique(pre_vy)) == 2:
        pre_cfg = TrainConfig(
            learning_rate=1e-3,
            l2sp_lambda=0.0,
            max_epochs=cfg.pretext_epochs,
            patience=cfg.pretext_epochs,
            plateau_epochs=cfg.train.plateau_epochs,
            batch_size=cfg.train.batch_size,
            seed=cfg.seed,
            augmentation=None,
        )
        model, pretext_history = train(model, (pre_tx, pre_ty), (pre_vx, pre_vy), pre_cfg)

    replace_head(model, n_classes=3, seed=cfg.seed)
    warmup_history = None
    if cfg.finetune_mode == "full":
        if cfg.head_warmup_epochs > 0:
            # settle the fresh head on frozen features first so its large
            # early gradients cannot corrupt the pretrained backbone
            warm_cfg = TrainConfig(
                learning_rate=cfg.head_warmup_lr,
                l2sp_lambda=cfg.train.l2sp_lambda,
                max_epochs=cfg.head_warmup_epochs,
                patience=cfg.head_warmup_epochs,
                plateau_epochs=max(cfg.head_warmup_epochs, 1),
                batch_size=cfg.train.batch_size,
                seed=cfg.seed,
                augmentation=None,
            )
            model, warmup_history = train(model, (tx, ty), (vx, vy), warm_cfg, eval_set=eval_xy)
        # the anchored penalty, not freezing, keeps theta near theta0
        model.freeze_all(False)
    model, history = train(model, (tx, ty), (vx, vy), cfg.train, eval_set=eval_xy)
    return model, {"pretext": pretext_history, "warmup": warmup_history, "finetune": history}


# ---------------------------------------------------------------------------
# Model roster evaluation
# ---------------------------------------------------------------------------

def _median_latency(predict_one, xs, cap: int = 40) -> float:
    times = []
    for i in range(min(len(xs), cap)):
        t0 = time.perf_counter()
        predict_one(xs[i])
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _classic_fold_variance(train_fn, predict_fn, x, y, folds: int, seed: int) -> Optional[dict]:
    """Per-fold variance of (malignant recall, macro AUC, accuracy) at the
    chosen hyperparameters; None when folds are not constructible."""
    try:
        fold_indices = stratified_kfold_indices(y, folds, seed)
    except ValueError:
        return None
    rec, auc, acc = [], [], []
    for tr, va in fold_indices:
        model = train_fn(x[tr], y[tr])
        preds, scores = predict_fn(model, x[va])
        r = build_report("fold", y[va], preds, scores)
        rec.append(r.malignant_recall)
        auc.append(r.macro_auc)
        acc.append(r.accuracy_standard)
    return {
        "malignant_recall": float(np.var(rec)),
        "macro_auc": float(np.var(auc)),
        "accuracy": float(np.var(acc)),
    }


@dataclass
class RosterResult:
    name: str
    report: EvalReport
    model: object
    extras: dict = field(default_factory=dict)


def _eval_svm(name, x_train, y_train, x_test, y_test, cfg: RunConfig) -> RosterResult:
    c, gamma, cv_acc = svm_grid_search(
        x_train, y_train, cfg.svm_c_grid, cfg.svm_gamma_grid, cfg.cv_folds, cfg.seed, cfg.svm_kind
    )
    spec = KernelSpec(cfg.svm_kind, gamma)
    model = svm_train_ovr(x_train, y_train, c, spec, seed=cfg.seed)
    preds = svm_predict(model, x_test)
    scores = svm_decision(model, x_test)
    latency = _median_latency(lambda v: svm_predict(model, v[None]), x_test)
    variance = _classic_fold_variance(
        lambda xs, ys: svm_train_ovr(xs, ys, c, spec, seed=cfg.seed),
        lambda m, xs: (svm_predict(m, xs), svm_decision(m, xs)),
        x_train, y_train, cfg.cv_folds, cfg.seed,
    )
    report = build_report(name, y_test, preds, scores, latency_s=latency, fold_variance=variance)
    return RosterResult(name, report, model, {"C": c, "gamma": gamma, "cv_accuracy": cv_acc})


def _eval_knn(name, x_train, y_train, x_test, y_test, cfg: RunConfig) -> RosterResult:
    k, cv_acc = knn_select_k(x_train, y_train, cfg.knn_k_range, cfg.cv_folds, cfg.seed, cfg.knn_epsilon)
    model = KnnModel(x_train, y_train, k, cfg.knn_epsilon)
    preds, scores = knn_predict_batch(model, x_test)
    latency = _median_latency(lambda v: knn_predict_batch(model, v[None]), x_test)
    variance = _classic_fold_variance(
        lambda xs, ys: KnnModel(xs, ys, min(k, len(xs)), cfg.knn_epsilon),
        lambda m, xs: knn_predict_batch(m, xs),
        x_train, y_train, cfg.cv_folds, cfg.seed,
    )
    report = build_report(name, y_test, preds, scores, latency_s=latency, fold_variance=variance)
    return RosterResult(name, report, model, {"k": k, "cv_accuracy": cv_acc})


def _eval_cnn(name, model, x_test, y_test) -> RosterResult:
    logits = predict_logits(model, x_test)
    preds = logits.argmax(axis=1)
    scores = softmax(logits)
    latency = _median_latency(lambda v: predict_logits(model, v[None]), x_test)
    report = build_report(name, y_test, preds, scores, latency_s=latency)
    return RosterResult(name, report, model)


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------

def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_confusion_csv(path, cm: np.ndarray) -> None:
    lines = ["true\\pred," + ",".join(str(c) for c in range(cm.shape[1]))]
    for t in range(cm.shape[0]):
        lines.append(str(t) + "," + ",".join(str(int(v)) for v in cm[t]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_roc_csvs(outdir: Path, safe_name: str, y_test, scores) -> None:
    from .metrics import roc_auc

    for c in range(scores.shape[1]):
        curve, _ = roc_auc(scores[:, c], np.asarray(y_test) == c)
        lines = ["threshold,fpr,tpr"]
        for t, f, tp in zip(curve.thresholds, curve.fpr, curve.tpr):
            lines.append(f"{float(t)!r},{float(f)!r},{float(tp)!r}")
        (outdir / f"roc_{safe_name}_class{c}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_summary_csv(path, reports: list[EvalReport]) -> None:
    cols = [
        "model", "accuracy_standard", "accuracy_paper", "macro_precision",
        "macro_recall", "macro_f1", "malignant_recall", "macro_auc", "malignant_vs_rest_auc",
    ]
    lines = [",".join(cols)]
    for r in reports:
        lines.append(
            ",".join(
                [
                    r.name,
                    repr(r.accuracy_standard),
                    repr(r.accuracy_paper),
                    repr(r.macro_precision),
                    repr(r.macro_recall),
                    repr(r.macro_f1),
                    repr(r.malignant_recall),
                    repr(r.macro_auc) if r.macro_auc is not None else "",
                    repr(r.malignant_vs_rest_auc) if r.malignant_vs_rest_auc is not None else "",
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_gradcam_panels(model, images, masks, labels, outdir: Path, alpha: float, max_images: int) -> list[dict]:
    """Heat + blend PGMs for up to max_images test samples; returns peak info."""
    outdir.mkdir(parents=True, exist_ok=True)
    records = []
    logits = predict_logits(model, images)
    preds = logits.argmax(axis=1)
    for i in range(min(len(images), max_images)):
        img = GrayImage(images[i, 0], UNIT)
        cls = int(preds[i])
        hm = grad_cam(model, img, cls)
        blend, heat = upsample_overlay(hm, img, alpha)
        write_pgm(to_raw8(blend), outdir / f"sample{i:03d}_class{cls}_blend.pgm")
        write_pgm(to_raw8(GrayImage(heat, UNIT)), outdir / f"sample{i:03d}_class{cls}_heat.pgm")
        peak = heatmap_peak(heat)
        rec = {"index": i, "true": int(labels[i]), "pred": cls, "peak_row": peak[0], "peak_col": peak[1]}
        if masks[i] is not None and not masks[i].is_empty():
            ys, xs = np.nonzero(masks[i].bits)
            rec["mask_bbox"] = [int(ys.min()), int(xs.min()), int(ys.max()), int(xs.max())]
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def run_pipeline(cfg: RunConfig) -> Path:
    """Execute the full flow and write all artifacts; returns the run dir."""
    out = Path(cfg.outdir)
    stage = "output"
    try:
        out.mkdir(parents=True, exist_ok=True)

        stage = "data"
        if cfg.synth is not None:
            manifest_path = write_dataset(cfg.synth, out / "dataset")
        else:
            manifest_path = Path(cfg.manifest)
        samples = load_manifest(manifest_path)

        stage = "split"
        if cfg.split_mode == "official":
            split = official_split(manifest_path)
        else:
            split = stratified_split(samples, cfg.ratios, cfg.seed)
        _write_json(out / "split.json", {"train": split.train, "val": split.val, "test": split.test, "seed": split.seed})

        stage = "preprocess"
        images, masks, labels = load_and_preprocess(samples, cfg.recipe)
        tr, va, te = split.train, split.val, split.test
        x_tr, y_tr = images[tr], labels[tr]
        x_va, y_va = images[va], labels[va]
        x_te, y_te = images[te], labels[te]

        stage = "features"
        names, hand = handcrafted_matrix(images, masks, cfg.glcm_levels, cfg.hist_bins)
        hand_rows = [FeatureVector(names, hand[i]) for i in range(len(hand))]
        scaler = fit_scaler([hand_rows[i] for i in tr])
        hand_scaled = np.stack([apply_scaler(scaler, r).values for r in hand_rows])

        needs_cnn = any(m == "cnn" or m.endswith("-deep") for m in cfg.roster)
        cnn_model = None
        histories = None
        deep = None
        if needs_cnn:
            stage = "train-cnn"
            cnn_model, histories = train_cnn_transfer(cfg, (x_tr, y_tr), (x_va, y_va))
            deep = embed_batch(cnn_model, images)

        stage = "train-eval"
        results: list[RosterResult] = []
        for name in cfg.roster:
            if name == "svm-handcrafted":
                results.append(_eval_svm(name, hand_scaled[tr], y_tr, hand_scaled[te], y_te, cfg))
            elif name == "svm-deep":
                results.append(_eval_svm(name, deep[tr], y_tr, deep[te], y_te, cfg))
            elif name == "knn-handcrafted":
                results.append(_eval_knn(name, hand_scaled[tr], y_tr, hand_scaled[te], y_te, cfg))
            elif name == "knn-deep":
                results.append(_eval_knn(name, deep[tr], y_tr, deep[te], y_te, cfg))
            elif name == "cnn":
                results.append(_eval_cnn(name, cnn_model, x_te, y_te))

        stage = "artifacts"
        timings = {}
        for res in results:
            safe = res.name.replace("-", "_")
            _write_json(out / f"metrics_{safe}.json", res.report.to_dict())
            _write_confusion_csv(out / f"confusion_{safe}.csv", res.report.confusion)
            scores = _scores_for(res, images, te, hand_scaled, deep)
            _write_roc_csvs(out, safe, y_te, scores)
            timings[res.name] = res.report.latency_s
            if res.name.startswith("svm"):
                ckpt.save_svm(out / f"model_{safe}.json", res.model,
                              scaler if res.name.endswith("handcrafted") else None, names)
            elif res.name.startswith("knn"):
                ckpt.save_knn(out / f"model_{safe}.json", res.model,
                              scaler if res.name.endswith("handcrafted") else None, names)
        _write_summary_csv(out / "metrics_summary.csv", [r.report for r in results])
        _write_json(out / "timings.json", timings)

        if cnn_model is not None:
            stage = "checkpoint"
            ckpt.save_checkpoint(
                out / "cnn.npz",
                cnn_model,
                preprocess_recipe=cfg.recipe.to_dict(),
                train_config=_train_config_dict(cfg.train),
                embed_mean=deep[tr].mean(axis=0),
            )
            _write_json(out / "history_cnn.json", histories)

            stage = "gradcam"
            records = write_gradcam_panels(
                cnn_model, x_te, [masks[i] for i in te], y_te,
                out / "gradcam", cfg.gradcam_alpha, cfg.gradcam_max_images,
            )
            _write_json(out / "gradcam" / "peaks.json", records)

        stage = "selection"
        winner, rationale = select_best_model([r.report for r in results])
        (out / "selection.txt").write_text(rationale + "\n", encoding="utf-8")
        _write_json(out / "run_config.json", _config_echo(cfg))
    except Exception as e:
        raise RuntimeError(f"[{stage}] {e}") from e
    return out


def _scores_for(res: RosterResult, images, te, hand_scaled, deep):
    if res.name == "cnn":
        return softmax(predict_logits(res.model, images[te]))
    x = hand_scaled[te] if res.name.endswith("handcrafted") else deep[te]
    if res.name.startswith("svm"):
        return svm_decision(res.model, x)
    _, mass = knn_predict_batch(res.model, x)
    return mass


def _train_config_dict(tc: TrainConfig) -> dict:
    d = {
        "learning_rate": tc.learning_rate,
        "l2sp_lambda": tc.l2sp_lambda,
        "max_epochs": tc.max_epochs,
        "patience": tc.patience,
        "plateau_epochs": tc.plateau_epochs,
        "batch_size": tc.batch_size,
        "seed": tc.seed,
    }
    if tc.augmentation is not None:
        d["augment"] = asdict(tc.augmentation)
    return d


def _config_echo(cfg: RunConfig) -> dict:
    d = {
        "seed": cfg.seed,
        "manifest": cfg.manifest,
        "synth": asdict(cfg.synth) if cfg.synth else None,
        "ratios": list(cfg.ratios),
        "split_mode": cfg.split_mode,
        "preprocess": cfg.recipe.to_dict(),
        "glcm_levels": cfg.glcm_levels,
        "hist_bins": cfg.hist_bins,
        "roster": list(cfg.roster),
        "svm": {"kind": cfg.svm_kind, "c_grid": list(cfg.svm_c_grid), "gamma_grid": list(cfg.svm_gamma_grid)},
        "knn": {"k_range": list(cfg.knn_k_range), "epsilon": cfg.knn_epsilon},
        "cv_folds": cfg.cv_folds,
        "train": _train_config_dict(cfg.train),
        "pretext_epochs": cfg.pretext_epochs,
        "pretext_per_class": cfg.pretext_per_class,
        "finetune_mode": cfg.finetune_mode,
        "head_warmup_epochs": cfg.head_warmup_epochs,
        "head_warmup_lr": cfg.head_warmup_lr,
        "arch": {"conv_channels": list(cfg.conv_channels), "embed_dim": cfg.embed_dim, "residual": cfg.residual},
    }
    return d


# ---------------------------------------------------------------------------
# External validation
# ---------------------------------------------------------------------------

def validate_external(checkpoint_path, manifest_path) -> tuple[EvalReport, DomainShiftIndicator]:
    """Evaluate a CNN checkpoint on an external manifest with its recorded
    preprocessing, and compute the embedding-mean shift vs the training set."""
    loaded = ckpt.load_checkpoint(checkpoint_path)
    model = loaded["model"]
    recipe = PreprocessRecipe.from_dict(loaded["preprocess"])
    if loaded["embed_mean"] is None:
        raise ValueError("checkpoint lacks the training embedding mean")
    samples = load_manifest(manifest_path)
    images, _, labels = load_and_preprocess(samples, recipe)
    logits = predict_logits(model, images)
    preds = logits.argmax(axis=1)
    scores = softmax(logits)
    have_all = all((labels == c).any() for c in range(model.n_classes))
    report = build_report("external", labels, preds, scores if have_all else None)
    emb = embed_batch(model, images)
    delta = domain_shift_delta(loaded["embed_mean"][None, :], emb)
    return report, delta
