"""Learnable attention-pooled OOD detector.

A model holds M query blocks W_j (each T queries of dimension D), an
inverse temperature beta, and per-head reference values mu_j frozen over
the training corpus. The squared detection distance of a sequence Z is

    d^2(Z) = sum_j (h_j(Z) - mu_j)^2,

where h_j is the similarity-pooled head value (see pooling). The score
returned to callers is s(Z) = -d^2(Z) + sum_j log ||W_j||_F^2; higher
means more in-distribution. A min-over-heads variant s_min is provided
as well.

Training minimizes, over mini-batches B with batch-local references
mu_B computed on the concatenation of the batch,

    L      = (1/|B|) sum_i d^2(Z_i; mu_B) - sum_j log ||W_j||_F^2
    L_SUP  = (1/(N+N')) [ sum_ID d^2 - lambda * sum_AUX log(1 - exp(-d^2)) ]

with hand-derived gradients (verified against central finite differences):
for one head with softmax weights p, similarities a and head value h,

    dh/dw_t = sum_s p_st (1 + beta (a_st - h)) * da_st/dw_t,

and the chain rule runs through the batch-local references (no stop
gradient), the regularizer -2 W / ||W||_F^2, and the AUX factor
-lambda exp(-d^2) / (1 - exp(-d^2)). The AUX term clamps d^2 at a small
floor: its value diverges as d^2 -> 0 and the clamp keeps both the loss
and the gradient direction bounded.

The optimizer is Adam (beta1 0.9, beta2 0.999, eps 1e-8, no weight decay)
under a cosine schedule from lr to 0 with no warmup. Training is a pure
function of (corpus, hyperparameters): reruns are bitwise identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import BatchSampler, Corpus, SamplerMode
from .errors import (
    ArgumentError,
    DegenerateParamsError,
    DivergenceError,
    FormatError,
    IoError,
    ShapeError,
    StateError,
)
from .pooling import Similarity, _tokens64, head_value, stream_head_value

AUX_D2_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# configuration and parameters
# ---------------------------------------------------------------------------

@dataclass
class Hyperparams:
    beta: float = 0.5
    heads: int = 1
    queries_per_head: int = 1
    lambda_aux: float = 1.0
    lr: float = 0.01
    steps: int = 1000
    batch_size: int = 512
    seed: int = 0
    init_scale: float | None = None  # None: 1/sqrt(D) at train time

    def validate(self) -> None:
        if self.beta < 0:
            raise ArgumentError("beta must be >= 0")
        if self.heads < 1 or self.queries_per_head < 1:
            raise ArgumentError("heads and queries_per_head must be >= 1")
        if self.lambda_aux < 0:
            raise ArgumentError("lambda_aux must be >= 0")
        if self.lr <= 0:
            raise ArgumentError("lr must be > 0")
        if self.steps < 0:
            raise ArgumentError("steps must be >= 0")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ArgumentError("init_scale must be > 0")


def default_grid(dim: int) -> list[Hyperparams]:
    """Search grid: beta in {1/sqrt(D), .25, .5, 1, 2}, T in {1,4,16,64}, M*T = D."""
    grid = []
    for beta in (1.0 / math.sqrt(dim), 0.25, 0.5, 1.0, 2.0):
        for t in (1, 4, 16, 64):
            if dim % t == 0:
                grid.append(Hyperparams(beta=beta, heads=dim // t, queries_per_head=t))
    return grid


def in_default_grid(hp: Hyperparams, dim: int) -> bool:
    return any(
        g.beta == hp.beta
        and g.heads == hp.heads
        and g.queries_per_head == hp.queries_per_head
        for g in default_grid(dim)
    )


def _as_params(heads) -> np.ndarray:
    arr = np.asarray(heads, dtype=np.float64)
    if arr.ndim != 3:
        raise ArgumentError(f"params must have shape (M, T, D), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("params must be finite")
    return arr


@dataclass
class ApoodParams:
    """M query blocks as one (M, T, D) array."""

    heads: np.ndarray

    def __post_init__(self):
        self.heads = _as_params(self.heads)
        with np.errstate(over="ignore"):
            norms = (self.heads ** 2).sum(axis=(1, 2))
        if np.any(norms == 0.0):
            raise DegenerateParamsError("a query block has zero Frobenius norm")

    @property
    def n_heads(self) -> int:
        return self.heads.shape[0]

    @property
    def dim(self) -> int:
        return self.heads.shape[2]

    def log_norms(self) -> np.ndarray:
        return np.log((self.heads ** 2).sum(axis=(1, 2)))


@dataclass
class ApoodModel:
    """Frozen detector: parameters plus corpus reference values."""

    params: ApoodParams
    beta: float
    mu: np.ndarray | None = None
    log_norms: np.ndarray | None = None
    similarity: Similarity = "dot"

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def n_heads(self) -> int:
        return self.params.n_heads

    def _require_frozen(self) -> None:
        m = self.params.n_heads
        if self.mu is None or self.log_norms is None:
            raise StateError("model is not frozen: corpus references missing")
        if len(self.mu) != m or len(self.log_norms) != m:
            raise StateError("model reference vectors do not match head count")


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_head_err: np.ndarray


# ---------------------------------------------------------------------------
# head-value engine (values and gradients)
# ---------------------------------------------------------------------------

def _sims_batch(X: np.ndarray, W: np.ndarray, kind: Similarity) -> np.ndarray:
    """(B, S, D) tokens x (T, D) queries -> (B, S, T) similarities."""
    if kind == "dot":
        return np.einsum("bsd,td->bst", X, W)
    if kind == "euclid":
        x2 = (X ** 2).sum(axis=2)[:, :, None]
        w2 = (W ** 2).sum(axis=1)[None, None, :]
        xw = np.einsum("bsd,td->bst", X, W)
        return -0.5 * (x2 - 2.0 * xw + w2)
    raise ArgumentError(f"unknown similarity kind {kind!r}")


def _head_stats_stacked(X: np.ndarray, W: np.ndarray, beta: float,
                        kind: Similarity) -> tuple[np.ndarray, np.ndarray]:
    """Head values and gradients for uniformly shaped sequences.

    X: (B, S, D), W: (T, D). Returns h (B,) and dh/dW (B, T, D).
    """
    B = X.shape[0]
    a = _sims_batch(X, W, kind)                     # (B, S, T)
    flat = a.reshape(B, -1)
    m = flat.max(axis=1, keepdims=True)
    e = np.exp(beta * (flat - m))
    p = (e / e.sum(axis=1, keepdims=True)).reshape(a.shape)
    h = np.einsum("bst,bst->b", p, a)
    coef = p * (1.0 + beta * (a - h[:, None, None]))
    g = np.einsum("bst,bsd->btd", coef, X)
    if kind == "euclid":
        g -= coef.sum(axis=1)[:, :, None] * W[None, :, :]
    return h, g


def _head_stats(toks: np.ndarray, W: np.ndarray, beta: float,
                kind: Similarity) -> tuple[float, np.ndarray]:
    h, g = _head_stats_stacked(toks[None], W, beta, kind)
    return float(h[0]), g[0]


def _batch_head_stats(seqs: list[np.ndarray], W: np.ndarray, beta: float,
                      kind: Similarity) -> tuple[np.ndarray, np.ndarray]:
    """Per-sequence head values and gradients; fast path for uniform lengths."""
    lengths = {s.shape[0] for s in seqs}
    if len(lengths) == 1:
        return _head_stats_stacked(np.stack(seqs), W, beta, kind)
    hs = np.empty(len(seqs))
    gs = np.empty((len(seqs),) + W.shape)
    for i, toks in enumerate(seqs):
        hs[i], gs[i] = _head_stats(toks, W, beta, kind)
    return hs, gs


def _batch_tokens(batch) -> list[np.ndarray]:
    out = []
    for Z in batch:
        out.append(_tokens64(Z))
    return out


# ---------------------------------------------------------------------------
# losses and gradients
# ---------------------------------------------------------------------------

def _unsup_loss_grad(seqs: list[np.ndarray], heads: np.ndarray, beta: float,
                     kind: Similarity, regularize: bool,
                     want_grad: bool) -> tuple[float, np.ndarray | None]:
    B = len(seqs)
    conc = np.concatenate(seqs, axis=0)
    loss = 0.0
    grads = np.zeros_like(heads) if want_grad else None
    for j in range(heads.shape[0]):
        W = heads[j]
        mu, gmu = _head_stats(conc, W, beta, kind)
        hs, ghs = _batch_head_stats(seqs, W, beta, kind)
        r = hs - mu
        loss += float((r ** 2).mean())
        if regularize:
            sq = float((W ** 2).sum())
            if sq == 0.0:
                raise DegenerateParamsError(f"head {j} has zero norm")
            loss -= math.log(sq)
        if want_grad:
            g = (2.0 / B) * np.einsum("n,ntd->td", r, ghs)
            g -= (2.0 / B) * r.sum() * gmu
            if regularize:
                g -= 2.0 * W / (W ** 2).sum()
            grads[j] = g
    return loss, grads


def _sup_loss_grad(id_seqs: list[np.ndarray], aux_seqs: list[np.ndarray],
                   heads: np.ndarray, beta: float, lam: float, kind: Similarity,
                   want_grad: bool) -> tuple[float, np.ndarray | None]:
    n_id, n_aux = len(id_seqs), len(aux_seqs)
    denom = n_id + n_aux
    conc = np.concatenate(id_seqs, axis=0)
    M = heads.shape[0]
    r_id = np.empty((M, n_id))
    r_aux = np.empty((M, n_aux))
    gh_id = [None] * M
    gh_aux = [None] * M
    gmu = [None] * M
    for j in range(M):
        mu, gm = _head_stats(conc, heads[j], beta, kind)
        hs, ghs = _batch_head_stats(id_seqs, heads[j], beta, kind)
        r_id[j] = hs - mu
        if n_aux:
            ha, gha = _batch_head_stats(aux_seqs, heads[j], beta, kind)
            r_aux[j] = ha - mu
            gh_aux[j] = gha
        gh_id[j], gmu[j] = ghs, gm

    loss = float((r_id ** 2).sum()) / denom
    if n_aux and lam > 0.0:
        d2 = (r_aux ** 2).sum(axis=0)
        d2c = np.maximum(d2, AUX_D2_FLOOR)
        # log(1 - exp(-x)) via log(-expm1(-x)) for stability
        loss -= lam / denom * float(np.log(-np.expm1(-d2c)).sum())
    if not want_grad:
        return loss, None

    grads = np.zeros_like(heads)
    if n_aux and lam > 0.0:
        d2 = (r_aux ** 2).sum(axis=0)
        d2c = np.maximum(d2, AUX_D2_FLOOR)
        fac = -lam / denom * np.exp(-d2c) / (-np.expm1(-d2c))
        fac = np.where(d2 >= AUX_D2_FLOOR, fac, 0.0)  # clamped region is flat
    for j in range(M):
        g = (2.0 / denom) * np.einsum("n,ntd->td", r_id[j], gh_id[j])
        g -= (2.0 / denom) * r_id[j].sum() * gmu[j]
        if n_aux and lam > 0.0:
            g += np.einsum("n,ntd->td", fac * 2.0 * r_aux[j], gh_aux[j])
            g -= float((fac * 2.0 * r_aux[j]).sum()) * gmu[j]
        grads[j] = g
    return loss, grads


def loss_unsup(batch, params: ApoodParams, beta: float,
               kind: Similarity = "dot") -> float:
    """Mean batch-local squared distance minus the log-norm regularizer."""
    if len(batch) == 0:
        raise ArgumentError("loss_unsup needs a non-empty batch")
    loss, _ = _unsup_loss_grad(_batch_tokens(batch), params.heads, beta, kind,
                               regularize=True, want_grad=False)
    return loss


def loss_sup(id_batch, aux_batch, params: ApoodParams, beta: float,
             lambda_aux: float, kind: Similarity = "dot") -> float:
    """Jointly normalized ID distance term plus the AUX repulsion term.

    With an empty aux_batch (or lambda 0) this is the plain mean squared
    distance with no regularizer.
    """
    if len(id_batch) == 0:
        raise ArgumentError("loss_sup needs a non-empty id_batch")
    loss, _ = _sup_loss_grad(_batch_tokens(id_batch), _batch_tokens(aux_batch or []),
                             params.heads, beta, lambda_aux, kind, want_grad=False)
    return loss


def grad_loss(id_batch, params: ApoodParams, beta: float, aux_batch=None,
              lambda_aux: float = 0.0, kind: Similarity = "dot") -> np.ndarray:
    """Gradient of the applicable loss with respect to every query block.

    aux_batch None selects the unsupervised loss (with regularizer);
    otherwise the supervised loss (no regularizer) is differentiated.
    """
    if len(id_batch) == 0:
        raise ArgumentError("grad_loss needs a non-empty id batch")
    if aux_batch is None:
        _, g = _unsup_loss_grad(_batch_tokens(id_batch), params.heads, beta, kind,
                                regularize=True, want_grad=True)
    else:
        _, g = _sup_loss_grad(_batch_tokens(id_batch), _batch_tokens(aux_batch),
                              params.heads, beta, lambda_aux, kind, want_grad=True)
    return g


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def distance_sq(Z, model: ApoodModel) -> tuple[float, np.ndarray]:
    """Total squared distance and its per-head components."""
    model._require_frozen()
    toks = _tokens64(Z)
    if toks.shape[1] != model.dim:
        raise ShapeError(f"sequence dim {toks.shape[1]} != model dim {model.dim}")
    per_head = np.empty(model.n_heads)
    for j in range(model.n_heads):
        h = head_value(toks, model.params.heads[j], model.beta, model.similarity).value
        per_head[j] = (h - model.mu[j]) ** 2
    return float(per_head.sum()), per_head


def score(Z, model: ApoodModel) -> float:
    """s(Z) = -d^2(Z) + sum_j log ||W_j||_F^2. Higher means more in-distribution."""
    total, _ = distance_sq(Z, model)
    return float(-total + model.log_norms.sum())


def score_min(Z, model: ApoodModel) -> float:
    """Min over heads of the per-head score -d_j^2 + log ||W_j||_F^2."""
    _, per_head = distance_sq(Z, model)
    return float(np.min(-per_head + model.log_norms))


# ---------------------------------------------------------------------------
# freezing, training, checking
# ---------------------------------------------------------------------------

def _token_chunks(corpus: Corpus, chunk_tokens: int):
    buf: list[np.ndarray] = []
    have = 0
    for seq in corpus:
        buf.append(seq.tokens64())
        have += seq.length
        if have >= chunk_tokens:
            yield np.concatenate(buf, axis=0)
            buf, have = [], 0
    if buf:
        yield np.concatenate(buf, axis=0)


def corpus_head_value(corpus: Corpus, W: np.ndarray, beta: float,
                      kind: Similarity = "dot", chunk_tokens: int = 8192) -> float:
    """Head value pooled over the whole corpus without materializing it.

    beta > 0 streams with bounded memory; beta = 0 is the uniform mean of
    the similarities, accumulated chunk by chunk.
    """
    if len(corpus) == 0:
        raise ArgumentError("corpus_head_value needs a non-empty corpus")
    if beta > 0:
        return stream_head_value(_token_chunks(corpus, chunk_tokens), W, beta, kind)
    total = 0.0
    count = 0
    from .pooling import similarities as _sims
    for chunk in _token_chunks(corpus, chunk_tokens):
        a = _sims(chunk, W, kind)
        total += float(a.sum())
        count += a.size
    return total / count


def freeze_model(params: ApoodParams, beta: float, corpus: Corpus,
                 kind: Similarity = "dot", chunk_tokens: int = 8192) -> ApoodModel:
    """Fix per-head corpus references and cache the log norms."""
    mu = np.array([
        corpus_head_value(corpus, params.heads[j], beta, kind, chunk_tokens)
        for j in range(params.n_heads)
    ])
    return ApoodModel(params=params, beta=beta, mu=mu,
                      log_norms=params.log_norms(), similarity=kind)


class AdamState:
    """Adam with bias correction; beta1 0.9, beta2 0.999, eps 1e-8."""

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad * grad
        mhat = self.m / (1.0 - 0.9 ** self.t)
        vhat = self.v / (1.0 - 0.999 ** self.t)
        return lr * mhat / (np.sqrt(vhat) + 1e-8)


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    if total_steps <= 0:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def train(id_corpus: Corpus, aux_corpus: Corpus | None, hp: Hyperparams,
          kind: Similarity = "dot", optimizer: str = "adam",
          regularize: bool = True,
          init_params: np.ndarray | None = None,
          step_callback=None) -> ApoodModel:
    """Mini-batch training followed by reference freezing over the ID corpus.

    The unsupervised loss is used when aux_corpus is None or empty,
    otherwise the supervised loss with hp.lambda_aux. Deterministic in
    (corpus contents, hp): identical seeds give bitwise-identical models.
    """
    hp.validate()
    if len(id_corpus) == 0:
        raise ArgumentError("training needs a non-empty ID corpus")
    if aux_corpus is not None and len(aux_corpus) > 0 and aux_corpus.dim != id_corpus.dim:
        raise ShapeError(
            f"aux dim {aux_corpus.dim} does not match id dim {id_corpus.dim}"
        )
    if optimizer not in ("adam", "sgd"):
        raise ArgumentError(f"unknown optimizer {optimizer!r}")

    D = id_corpus.dim
    scale = hp.init_scale if hp.init_scale is not None else 1.0 / math.sqrt(D)
    seeds = np.random.SeedSequence(hp.seed).spawn(3)
    if init_params is None:
        rng = np.random.default_rng(seeds[0])
        heads = rng.standard_normal((hp.heads, hp.queries_per_head, D)) * scale
    else:
        heads = _as_params(init_params).copy()
        if heads.shape != (hp.heads, hp.queries_per_head, D):
            raise ShapeError(
                f"init_params shape {heads.shape} does not match "
                f"({hp.heads}, {hp.queries_per_head}, {D})"
            )
    params = ApoodParams(heads)

    use_aux = aux_corpus is not None and len(aux_corpus) > 0
    id_sampler = BatchSampler(len(id_corpus), hp.batch_size,
                              int(seeds[1].generate_state(1)[0]))
    aux_sampler = None
    if use_aux:
        # keep per-batch class proportions close to the corpus proportions
        aux_bs = int(round(hp.batch_size * len(aux_corpus) / len(id_corpus)))
        aux_bs = max(1, min(aux_bs, hp.batch_size))
        aux_sampler = BatchSampler(len(aux_corpus), aux_bs,
                                   int(seeds[2].generate_state(1)[0]),
                                   SamplerMode.WITH_REPLACEMENT)

    adam = AdamState(params.heads.shape) if optimizer == "adam" else None
    for step in range(hp.steps):
        idx = id_sampler.next_batch()
        id_seqs = [id_corpus.sequences[i].tokens64() for i in idx]
        # overflow to inf is caught below as divergence, not warned about
        with np.errstate(over="ignore", invalid="ignore"):
            if use_aux:
                aidx = aux_sampler.next_batch()
                aux_seqs = [aux_corpus.sequences[i].tokens64() for i in aidx]
                loss, grads = _sup_loss_grad(id_seqs, aux_seqs, params.heads,
                                             hp.beta, hp.lambda_aux, kind,
                                             want_grad=True)
            else:
                loss, grads = _unsup_loss_grad(id_seqs, params.heads, hp.beta, kind,
                                               regularize=regularize,
                                               want_grad=True)
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", step=step)
        if step_callback is not None:
            step_callback(step, loss)
        lr_t = cosine_lr(hp.lr, step, hp.steps)
        if adam is not None:
            params.heads = params.heads - adam.update(grads, lr_t)
        else:
            params.heads = params.heads - lr_t * grads

    return freeze_model(ApoodParams(params.heads), hp.beta, id_corpus, kind)


def gradient_check(dim: int, hp: Hyperparams, trials: int, seed: int,
                   kind: Similarity = "dot") -> GradCheckReport:
    """Analytic gradients against central finite differences (step 1e-4).

    Random small instances are drawn per trial; the supervised path is
    exercised whenever hp.lambda_aux > 0. The reported error is
    max |g - g_fd| / (1 + max |g_fd|), overall and per head.
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    M, T = hp.heads, hp.queries_per_head
    worst = 0.0
    per_head = np.zeros(M)
    h_fd = 1e-4
    for _ in range(trials):
        id_seqs = [rng.standard_normal((int(rng.integers(2, 6)), dim))
                   for _ in range(3)]
        heads = rng.standard_normal((M, T, dim)) / math.sqrt(dim)
        if hp.lambda_aux > 0:
            aux_seqs = [rng.standard_normal((int(rng.integers(2, 6)), dim)) + 0.5
                        for _ in range(2)]
            _, g = _sup_loss_grad(id_seqs, aux_seqs, heads, hp.beta,
                                  hp.lambda_aux, kind, want_grad=True)
            def f(h):
                v, _ = _sup_loss_grad(id_seqs, aux_seqs, h, hp.beta,
                                      hp.lambda_aux, kind, want_grad=False)
                return v
        else:
            _, g = _unsup_loss_grad(id_seqs, heads, hp.beta, kind,
                                    regularize=True, want_grad=True)
            def f(h):
                v, _ = _unsup_loss_grad(id_seqs, h, hp.beta, kind,
                                        regularize=True, want_grad=False)
                return v
        g_fd = np.zeros_like(heads)
        it = np.nditer(heads, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            hp_ = heads.copy(); hp_[ix] += h_fd
            hm_ = heads.copy(); hm_[ix] -= h_fd
            g_fd[ix] = (f(hp_) - f(hm_)) / (2.0 * h_fd)
            it.iternext()
        scale_ = 1.0 + np.abs(g_fd).max()
        err = np.abs(g - g_fd)
        worst = max(worst, float(err.max() / scale_))
        per_head = np.maximum(per_head, err.reshape(M, -1).max(axis=1) / scale_)
    return GradCheckReport(max_rel_err=worst, per_head_err=per_head)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MODEL_FORMAT = "apood-model-v1"


def save_model(model: ApoodModel, path) -> None:
    model._require_frozen()
    doc = {
        "format": MODEL_FORMAT,
        "dim": model.dim,
        "beta": model.beta,
        "similarity": model.similarity,
        "heads": model.params.heads.tolist(),
        "mu": model.mu.tolist(),
        "log_norms": model.log_norms.tolist(),
    }
    try:
        with open(path, "w") as f:
            json.dump(doc, f)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> ApoodModel:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc

    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: missing or unknown format tag")
    try:
        heads = np.asarray(doc["heads"], dtype=np.float64)
        beta = float(doc["beta"])
        dim = int(doc["dim"])
        mu = np.asarray(doc["mu"], dtype=np.float64)
        log_norms = np.asarray(doc["log_norms"], dtype=np.float64)
        kind = doc.get("similarity", "dot")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad model schema: {exc}") from exc
    if heads.ndim != 3:
        raise FormatError(f"{path}: heads must be M x T x D")
    if heads.shape[2] != dim:
        raise FormatError(f"{path}: heads dim {heads.shape[2]} != declared {dim}")
    m = heads.shape[0]
    if mu.shape != (m,) or log_norms.shape != (m,):
        raise FormatError(f"{path}: mu/log_norms length does not match {m} heads")
    if not (np.all(np.isfinite(heads)) and np.all(np.isfinite(mu))
            and np.all(np.isfinite(log_norms))):
        raise FormatError(f"{path}: non-finite model values")
    if beta < 0:
        raise FormatError(f"{path}: beta must be >= 0")
    if kind not in ("dot", "euclid"):
        raise FormatError(f"{path}: unknown similarity {kind!r}")
    try:
        params = ApoodParams(heads)
    except DegenerateParamsError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return ApoodModel(params=params, beta=beta, mu=mu, log_norms=log_norms,
                      similarity=kind)
