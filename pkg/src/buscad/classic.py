"""Classical models: soft-margin kernel SVM trained by simplified SMO with
one-vs-rest reduction, and inverse-distance-weighted KNN, plus the CV-based
hyperparameter searches."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import stratified_kfold_indices

SVM_C_GRID = (0.1, 1.0, 10.0, 100.0)
SVM_GAMMA_GRID = (0.001, 0.01, 0.1, 1.0)
KNN_EPSILON = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "linear" | "rbf"
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValueError("rbf kernel requires gamma > 0")


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "linear":
        return float(x @ y)
    return float(np.exp(-spec.gamma * np.sum((x - y) ** 2)))


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if spec.kind == "linear":
        return a @ b.T
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySvmModel:
    """Dual soft-margin SVM: f(x) = sum_i coef_i k(sv_i, x) + b."""

    sv_x: np.ndarray  # (n_sv, d)
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelSpec
    C: float
    sv_index: np.ndarray  # positions of the SVs in the training set

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return kernel_matrix(self.kernel, x, self.sv_x) @ self.dual_coef + self.bias


def _smo_step(i: int, j: int, alpha, y, k_mat, err, b: float, c: float) -> Optional[float]:
    """Optimize the (i, j) pair in place; returns the new bias or None if the
    pair cannot make progress."""
    if y[i] != y[j]:
        lo = max(0.0, alpha[j] - alpha[i])
        hi = min(c, c + alpha[j] - alpha[i])
    else:
        lo = max(0.0, alpha[i] + alpha[j] - c)
        hi = min(c, alpha[i] + alpha[j])
    if lo == hi:
        return None
    eta = 2.0 * k_mat[i, j] - k_mat[i, i] - k_mat[j, j]
    if eta >= 0:
        return None
    aj_old = alpha[j]
    ai_old = alpha[i]
    aj = aj_old - y[j] * (err[i] - err[j]) / eta
    aj = min(hi, max(lo, aj))
    if abs(aj - aj_old) < 1e-5:
        return None
    ai = ai_old + y[i] * y[j] * (aj_old - aj)
    di = y[i] * (ai - ai_old)
    dj = y[j] * (aj - aj_old)
    b1 = b - err[i] - di * k_mat[i, i] - dj * k_mat[i, j]
    b2 = b - err[j] - di * k_mat[i, j] - dj * k_mat[j, j]
    if 0.0 < ai < c:
        b_new = b1
    elif 0.0 < aj < c:
        b_new = b2
    else:
        b_new = (b1 + b2) / 2.0
    err += di * k_mat[i] + dj * k_mat[j] + (b_new - b)
    alpha[i] = ai
    alpha[j] = aj
    return b_new


def _smo(k_mat: np.ndarray, y: np.ndarray, c: float, rng, tol: float, max_passes: int) -> tuple[np.ndarray, float]:
    """Sequential minimal optimization on a precomputed kernel matrix.

    For each KKT violator the partner index is drawn at random (seeded); if
    that pair makes no progress the remaining indices are scanned in the
    same random order, so a stagnant sweep means no pair anywhere can move.
    Terminates after `max_passes` consecutive stagnant sweeps; the hard
    sweep cap is a safety bound for pathological inputs only.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < 10_000:
        changed = 0
        err = (alpha * y) @ k_mat + b - y  # fresh cache each sweep, no drift
        for i in range(n):
            r = y[i] * err[i]
            if not ((r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0)):
                continue
            for j in rng.permutation(n):
                if j == i:
                    continue
                b_new = _smo_step(i, int(j), alpha, y, k_mat, err, b, c)
                if b_new is not None:
                    b = b_new
                    changed += 1
                    break
        passes = passes + 1 if changed == 0 else 0
        sweeps += 1
    return alpha, b


def svm_train_binary(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    spec: KernelSpec,
    seed: int = 0,
    tol: float = 1e-3,
    max_passes: int = 10,
) -> BinarySvmModel:
    """Train one soft-margin SVM on +/-1 labels via simplified SMO."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("binary SVM requires both +1 and -1 labels")
    if c <= 0:
        raise ValueError(f"C must be positive, got {c}")
    k_mat = kernel_matrix(spec, x, x)
    rng = np.random.default_rng([seed, len(y)])
    alpha, b = _smo(k_mat, y, c, rng, tol, max_passes)

    # final bias from unbounded support vectors, falling back to the SMO bias
    f_nobias = (alpha * y) @ k_mat
    unbounded = (alpha > 1e-8) & (alpha < c - 1e-8)
    if unbounded.any():
        b = float(np.mean(y[unbounded] - f_nobias[unbounded]))

    sv = alpha > 1e-12
    return BinarySvmModel(
        sv_x=x[sv].copy(),
        dual_coef=(alpha * y)[sv].copy(),
        bias=float(b),
        kernel=spec,
        C=float(c),
        sv_index=np.nonzero(sv)[0],
    )


@dataclass
class SvmOvrModel:
    models: list[BinarySvmModel]

    @property
    def n_classes(self) -> int:
        return len(self.models)


def svm_train_ovr(x: np.ndarray, y: Sequence[int], c: float, spec: KernelSpec, seed: int = 0, n_classes: int = 3) -> SvmOvrModel:
    """One binary class-vs-rest model per class."""
    y = np.asarray(y, dtype=int)
    models = []
    for cls in range(n_classes):
        y_bin = np.where(y == cls, 1.0, -1.0)
        models.append(svm_train_binary(x, y_bin, c, spec, seed=seed + cls))
    return SvmOvrModel(models)


def svm_decision(model: SvmOvrModel, x: np.ndarray) -> np.ndarray:
    """Per-class decision scores, shape (n_samples, n_classes)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.stack([m.decision(x) for m in model.models], axis=1)


def svm_predict(model: SvmOvrModel, x: np.ndarray) -> np.ndarray:
    """Argmax of the decision scores; ties go to the lowest class index."""
    return np.argmax(svm_decision(model, x), axis=1)


def svm_grid_search(
    x: np.ndarray,
    y: Sequence[int],
    c_grid: Sequence[float] = SVM_C_GRID,
    gamma_grid: Sequence[float] = SVM_GAMMA_GRID,
    folds: int = 5,
    seed: int = 0,
    kind: str = "rbf",
    n_classes: int = 3,
) -> tuple[float, Optional[float], float]:
    """Exhaustive CV over (C, gamma); ties prefer smaller C, then smaller gamma."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    fold_indices = stratified_kfold_indices(y, folds, seed)
    gammas: Sequence[Optional[float]] = sorted(gamma_grid) if kind == "rbf" else [None]
    best = None
    for c in sorted(c_grid):
        for gamma in gammas:
            spec = KernelSpec(kind, gamma)
            accs = []
            for train_idx, val_idx in fold_indices:
                m = svm_train_ovr(x[train_idx], y[train_idx], c, spec, seed=seed, n_classes=n_classes)
                pred = svm_predict(m, x[val_idx])
                accs.append(float(np.mean(pred == y[val_idx])))
            mean_acc = float(np.mean(accs))
            if best is None or mean_acc > best[2]:
                best = (c, gamma, mean_acc)
    return best


@dataclass
class KnnModel:
    x: np.ndarray
    y: np.ndarray
    k: int
    epsilon: float = KNN_EPSILON
    n_classes: int = 3

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=int)
        if not (1 <= self.k <= len(self.x)):
            raise ValueError(f"k={self.k} outside [1, {len(self.x)}]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def knn_predict(model: KnnModel, x: np.ndarray) -> tuple[int, np.ndarray]:
    """Inverse-distance-weighted vote among the k nearest neighbors.

    Distance ties are broken by lower training index; vote-mass ties by
    smaller total neighbor distance, then lower class index.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.x.shape[1:]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {model.x.shape[1:]}")
    d = np.sqrt(np.sum((model.x - x) ** 2, axis=1))
    order = np.argsort(d, kind="stable")[: model.k]
    w = 1.0 / (d[order] + model.epsilon)
    mass = np.zeros(model.n_classes)
    dist_total = np.zeros(model.n_classes)
    for idx, weight in zip(order, w):
        cls = model.y[idx]
        mass[cls] += weight
        dist_total[cls] += d[idx]
    winner = min(range(model.n_classes), key=lambda cls: (-mass[cls], dist_total[cls], cls))
    return int(winner), mass


def knn_predict_batch(model: KnnModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized batch form of knn_predict; also returns normalized vote mass."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    preds = np.empty(len(x), dtype=int)
    masses = np.empty((len(x), model.n_classes))
    for i, row in enumerate(x):
        preds[i], masses[i] = knn_predict(model, row)
    return preds, masses / masses.sum(axis=1, keepdims=True)


def knn_select_k(
    x: np.ndarray,
    y: Sequence[int],
    k_range: Sequence[int] = range(1, 11),
    folds: int = 5,
    seed: int = 0,
    epsilon: float = KNN_EPSILON,
    n_classes: int = 3,
) -> tuple[int, float]:
    """Pick k by mean CV accuracy; ties prefer the smaller k."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    k_range = sorted(k_range)
    fold_indices = stratified_kfold_indices(y, folds, seed)
    smallest_train = min(len(tr) for tr, _ in fold_indices)
    if not k_range or k_range[0] < 1 or k_range[-1] > smallest_train:
        raise ValueError(
            f"infeasible k range {k_range}: training folds have >= {smallest_train} samples"
        )
    best = None
    for k in k_range:
        accs = []
        for train_idx, val_idx in fold_indices:
            m = KnnModel(x[train_idx], y[train_idx], k, epsilon, n_classes)
            preds, _ = knn_predict_batch(m, x[val_idx])
            accs.append(float(np.mean(preds == y[val_idx])))
        mean_acc = float(np.mean(accs))
        if best is None or mean_acc > best[1]:
            best = (k, mean_acc)
    return best
