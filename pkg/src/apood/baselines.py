"""Embedding-space reference detectors over mean-pooled sequences.

Unsupervised: Gaussian fit with Mahalanobis scoring, k-nearest-neighbor
distance on L2-normalized features, and a linear one-class hypersphere
model (fixed center, no bias, weight decay as collapse guard).
Supervised: the hypersphere model with an auxiliary repulsion term,
binary logistic regression, and relative Mahalanobis against a
background fit.

Also provides the directional decomposition of a Gaussian fit: weight
vectors w_j = sqrt(1/lambda_j) v_j from the eigensystem of the
(ridge-regularized) covariance satisfy sum_j w_j w_j^T = Sigma^{-1}, so
the Mahalanobis quadratic form equals a sum of squared projections. The
eigensolver is a self-contained cyclic Jacobi iteration.

All scores follow the shared convention: higher means more in-distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ArgumentError,
    DegenerateParamsError,
    DivergenceError,
    FormatError,
    IoError,
    NumericalError,
    ShapeError,
)
from .model import AdamState, cosine_lr, Hyperparams
from .pooling import _tokens64

RIDGE_REL = 1e-6
WEIGHT_DECAY = 1e-4
SAD_EPS = 1e-6


def mean_pool(Z) -> np.ndarray:
    """Arithmetic mean of the tokens of one sequence."""
    toks = _tokens64(Z)
    return toks.mean(axis=0)


def _as_matrix(vectors) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        X = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    return X


# ---------------------------------------------------------------------------
# Gaussian fit / Mahalanobis
# ---------------------------------------------------------------------------

@dataclass
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray  # lower factor of cov + ridge*I
    ridge: float


def maha_fit(means) -> GaussianFit:
    """Sample mean and covariance (denominator N), ridge-regularized factor."""
    X = _as_matrix(means)
    n, d = X.shape
    if n < 2:
        raise ArgumentError("maha_fit needs at least 2 vectors")
    mu = X.mean(axis=0)
    Xc = X - mu
    cov = Xc.T @ Xc / n
    ridge = RIDGE_REL * float(np.trace(cov)) / d
    try:
        chol = np.linalg.cholesky(cov + ridge * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance factorization failed: {exc}") from exc
    return GaussianFit(mean=mu, cov=cov, chol=chol, ridge=ridge)


def maha_score(z, fit: GaussianFit) -> float:
    """Negative squared Mahalanobis distance via triangular solves."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != fit.mean.shape:
        raise ShapeError(f"vector dim {z.shape} != fit dim {fit.mean.shape}")
    y = solve_triangular(fit.chol, z - fit.mean, lower=True)
    return -float(y @ y)


def relative_maha_score(z, fit_id: GaussianFit, fit_bg: GaussianFit) -> float:
    """Mahalanobis scored against an ID fit relative to a background fit."""
    return maha_score(z, fit_id) - maha_score(z, fit_bg)


# ---------------------------------------------------------------------------
# Jacobi eigendecomposition and the directional decomposition
# ---------------------------------------------------------------------------

def jacobi_eigh(A: np.ndarray, rel_tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigensystem of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop when the off-diagonal Frobenius norm falls below
    rel_tol times the Frobenius norm of the input; exceeding max_sweeps
    raises NumericalError. Returns (eigenvalues ascending, V with
    matching columns).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ArgumentError("jacobi_eigh needs a square matrix")
    n = A.shape[0]
    A = 0.5 * (A + A.T)  # enforce exact symmetry of the working copy
    norm = float(np.linalg.norm(A))
    V = np.eye(n)
    if n == 1 or norm == 0.0:
        return np.diag(A).copy(), V

    def off_norm(M):
        # direct sum over off-diagonal entries; subtracting the diagonal
        # from the total squared norm cancels catastrophically near
        # convergence
        off = M.copy()
        np.fill_diagonal(off, 0.0)
        return float(np.linalg.norm(off))

    converged = False
    for _ in range(max_sweeps):
        if off_norm(A) <= rel_tol * norm:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                v_p = V[:, p].copy()
                V[:, p] = c * v_p - s * V[:, q]
                V[:, q] = s * v_p + c * V[:, q]
    if not converged and off_norm(A) > rel_tol * norm:
        raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps")
    vals = np.diag(A).copy()
    order = np.argsort(vals)
    return vals[order], V[:, order]


@dataclass
class Decomposition:
    """Rows are the direction vectors w_j; sum_j w_j w_j^T = Sigma_reg^{-1}."""

    weights: np.ndarray

    def quadratic(self, z, mu) -> float:
        proj = self.weights @ (np.asarray(z, float) - np.asarray(mu, float))
        return float(proj @ proj)


def decompose_covariance(fit: GaussianFit) -> Decomposition:
    """Directional weights from the eigensystem of the regularized covariance."""
    d = fit.cov.shape[0]
    sigma = fit.cov + fit.ridge * np.eye(d)
    vals, vecs = jacobi_eigh(sigma)
    if np.any(vals <= 0.0):
        raise NumericalError("regularized covariance is not positive definite")
    weights = (vecs / np.sqrt(vals)[None, :]).T  # row j = v_j / sqrt(lambda_j)
    return Decomposition(weights=weights)


# ---------------------------------------------------------------------------
# KNN
# ---------------------------------------------------------------------------

def _l2_normalize(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    return np.where(norms > 0, X / np.where(norms == 0, 1.0, norms), X)


def knn_score(z, bank, k: int = 10) -> float:
    """Negative distance to the k-th nearest L2-normalized bank vector."""
    bank = _as_matrix(bank)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != bank.shape[1]:
        raise ShapeError(f"query dim {z.shape[0]} != bank dim {bank.shape[1]}")
    if not (1 <= k <= bank.shape[0]):
        raise ArgumentError(f"k={k} outside [1, {bank.shape[0]}]")
    q = _l2_normalize(z[None])[0]
    nb = _l2_normalize(bank)
    d = np.linalg.norm(nb - q, axis=1)
    return -float(np.partition(d, k - 1)[k - 1])


# ---------------------------------------------------------------------------
# hypersphere models (one-class, and the auxiliary-aware extension)
# ---------------------------------------------------------------------------

@dataclass
class SvddModel:
    map: np.ndarray      # (out_dim, D) linear encoder, no bias
    center: np.ndarray   # fixed from initialization
    aux_eta: float = 0.0

    def __post_init__(self):
        if np.any(np.all(self.map == 0.0, axis=1)):
            raise DegenerateParamsError("encoder has an all-zero row")


def sad_train(id_means, aux_means, out_dim: int | None, hp: Hyperparams,
              eta: float = 1.0, init_map: np.ndarray | None = None) -> SvddModel:
    """Hypersphere training with optional auxiliary repulsion.

    loss = mean_ID ||W z - c||^2 + wd ||W||_F^2
         + eta * mean_AUX 1 / (||W z - c||^2 + eps)
    with center c fixed at the mean of the initially mapped ID vectors.
    Empty aux (or eta = 0) reduces to the plain one-class objective.
    """
    X = _as_matrix(id_means)
    n, d = X.shape
    if n < 1:
        raise ArgumentError("sad_train needs non-empty id means")
    A = _as_matrix(aux_means) if aux_means is not None and len(aux_means) else None
    if A is not None and A.shape[1] != d:
        raise ShapeError("aux dim does not match id dim")
    if out_dim is None:
        out_dim = (d + 1) // 2
    if init_map is not None:
        W = np.asarray(init_map, dtype=np.float64).copy()
        if W.shape != (out_dim, d):
            raise ShapeError(f"init_map shape {W.shape} != ({out_dim}, {d})")
    else:
        rng = np.random.default_rng(hp.seed)
        W = rng.standard_normal((out_dim, d)) / math.sqrt(d)
    center = (X @ W.T).mean(axis=0)

    adam = AdamState(W.shape)
    use_aux = A is not None and eta > 0.0
    for step in range(hp.steps):
        R = X @ W.T - center                       # (n, out_dim)
        loss = float((R ** 2).sum(axis=1).mean()) + WEIGHT_DECAY * float((W ** 2).sum())
        g = (2.0 / n) * R.T @ X + 2.0 * WEIGHT_DECAY * W
        if use_aux:
            Ra = A @ W.T - center
            r2 = (Ra ** 2).sum(axis=1) + SAD_EPS
            loss += eta * float((1.0 / r2).mean())
            coef = -eta / len(A) / (r2 ** 2)
            g += 2.0 * (coef[:, None] * Ra).T @ A
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step=step)
        W = W - adam.update(g, cosine_lr(hp.lr, step, hp.steps))
    return SvddModel(map=W, center=center, aux_eta=eta if use_aux else 0.0)


def svdd_train(means, out_dim: int | None, hp: Hyperparams,
               init_map: np.ndarray | None = None) -> SvddModel:
    """One-class hypersphere model (no auxiliary data)."""
    return sad_train(means, None, out_dim, hp, eta=0.0, init_map=init_map)


def svdd_score(z, model: SvddModel) -> float:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != model.map.shape[1]:
        raise ShapeError("vector dim does not match encoder")
    u = model.map @ z - model.center
    return -float(u @ u)


# ---------------------------------------------------------------------------
# binary logistic regression
# ---------------------------------------------------------------------------

@dataclass
class LogitModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise DegenerateParamsError("logit parameters must be finite")


def logit_train(id_means, aux_means, hp: Hyperparams) -> LogitModel:
    """Logistic regression, ID = 1 vs AUX = 0, full-batch gradient training."""
    Xi = _as_matrix(id_means)
    Xa = _as_matrix(aux_means) if aux_means is not None and len(aux_means) else None
    if Xa is None or len(Xi) == 0:
        raise ArgumentError("logit_train needs non-empty id and aux means")
    if Xa.shape[1] != Xi.shape[1]:
        raise ShapeError("aux dim does not match id dim")
    X = np.vstack([Xi, Xa])
    y = np.concatenate([np.ones(len(Xi)), np.zeros(len(Xa))])
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    adam_w = AdamState(d)
    adam_b = AdamState(())
    for step in range(hp.steps):
        z = X @ w + b
        # BCE via logaddexp(0, z) - y z; sigmoid via stable exp
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) \
            + WEIGHT_DECAY * float(w @ w)
        p = np.exp(-np.logaddexp(0.0, -z))
        resid = (p - y) / n
        gw = X.T @ resid + 2.0 * WEIGHT_DECAY * w
        gb = float(resid.sum())
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step=step)
        lr_t = cosine_lr(hp.lr, step, hp.steps)
        w = w - adam_w.update(gw, lr_t)
        b = b - float(adam_b.update(np.asarray(gb), lr_t))
    return LogitModel(weights=w, bias=b)


def logit_score(z, model: LogitModel) -> float:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != model.weights.shape[0]:
        raise ShapeError("vector dim does not match model")
    return float(model.weights @ z + model.bias)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _maha_doc(fit: GaussianFit) -> dict:
    return {"mean": fit.mean.tolist(), "cov": fit.cov.tolist(),
            "ridge": fit.ridge}


def _maha_from_doc(doc: dict) -> GaussianFit:
    mean = np.asarray(doc["mean"], dtype=np.float64)
    cov = np.asarray(doc["cov"], dtype=np.float64)
    ridge = float(doc["ridge"])
    chol = np.linalg.cholesky(cov + ridge * np.eye(len(mean)))
    return GaussianFit(mean=mean, cov=cov, chol=chol, ridge=ridge)


def save_baseline(model, path, extra: dict | None = None) -> None:
    if isinstance(model, GaussianFit):
        doc = {"format": "maha-v1", **_maha_doc(model)}
    elif isinstance(model, SvddModel):
        tag = "sad-v1" if model.aux_eta > 0 else "svdd-v1"
        doc = {"format": tag, "map": model.map.tolist(),
               "center": model.center.tolist(), "aux_eta": model.aux_eta}
    elif isinstance(model, LogitModel):
        doc = {"format": "logit-v1", "weights": model.weights.tolist(),
               "bias": model.bias}
    elif isinstance(model, dict) and model.get("format") in ("knn-v1", "relmaha-v1"):
        doc = model
    else:
        raise ArgumentError(f"cannot serialize {type(model).__name__}")
    if extra:
        doc.update(extra)
    try:
        with open(path, "w") as f:
            json.dump(doc, f)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def knn_doc(bank: np.ndarray, k: int) -> dict:
    return {"format": "knn-v1", "bank": np.asarray(bank).tolist(), "k": k}


def relmaha_doc(fit_id: GaussianFit, fit_bg: GaussianFit) -> dict:
    return {"format": "relmaha-v1", "id": _maha_doc(fit_id), "bg": _maha_doc(fit_bg)}


def load_baseline(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    tag = doc.get("format")
    try:
        if tag == "maha-v1":
            return _maha_from_doc(doc)
        if tag in ("svdd-v1", "sad-v1"):
            return SvddModel(map=np.asarray(doc["map"], dtype=np.float64),
                             center=np.asarray(doc["center"], dtype=np.float64),
                             aux_eta=float(doc.get("aux_eta", 0.0)))
        if tag == "logit-v1":
            return LogitModel(weights=np.asarray(doc["weights"], dtype=np.float64),
                              bias=float(doc["bias"]))
        if tag in ("knn-v1", "relmaha-v1"):
            return doc
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad baseline schema: {exc}") from exc
    raise FormatError(f"{path}: unknown baseline format {tag!r}")
