"""Identity suites tying the numerical core together.

Each suite checks an analytic identity at a fixed tolerance on seeded
random instances: gradient correctness against finite differences,
streaming / batch pooling equivalence, the two head-value formulations,
the covariance decomposition round trip, the beta = 0 reduction of the
attention distance to the Mahalanobis distance, and the rank-statistic
AUROC against pairwise enumeration. Deterministic across runs.
"""

from __future__ import annotations

import numpy as np

from .baselines import decompose_covariance, maha_fit, maha_score, mean_pool
from .corpus import Corpus, EmbeddingSequence
from .metrics import auroc, auroc_pairwise, fpr_at_tpr
from .model import (
    ApoodParams,
    Hyperparams,
    distance_sq,
    freeze_model,
    gradient_check,
)
from .pooling import head_value, head_value_sequence_form, stream_head_value


def _suite(name: str, max_err: float, tol: float) -> dict:
    return {"name": name, "max_err": float(max_err), "tolerance": float(tol),
            "passed": bool(max_err <= tol)}


def check_gradients() -> list[dict]:
    out = []
    rep = gradient_check(3, Hyperparams(beta=0.0, heads=1, queries_per_head=1,
                                        lambda_aux=0.0), trials=4, seed=11)
    out.append(_suite("grad-unsup-beta0", rep.max_rel_err, 1e-6))
    rep = gradient_check(6, Hyperparams(beta=1.0, heads=3, queries_per_head=2,
                                        lambda_aux=0.0), trials=4, seed=12)
    out.append(_suite("grad-unsup-beta1", rep.max_rel_err, 1e-4))
    rep = gradient_check(4, Hyperparams(beta=0.5, heads=2, queries_per_head=2,
                                        lambda_aux=1.0), trials=4, seed=13)
    out.append(_suite("grad-supervised", rep.max_rel_err, 1e-4))
    return out


def check_streaming(trials: int = 20) -> dict:
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(trials):
        toks = rng.standard_normal((int(rng.integers(5, 60)), 4))
        W = rng.standard_normal((2, 4))
        beta = float(rng.uniform(0.1, 2.0))
        batch = head_value(toks, W, beta).value
        n_chunks = int(rng.integers(1, len(toks) + 1))
        cuts = np.sort(rng.choice(np.arange(1, len(toks)), size=n_chunks - 1,
                                  replace=False)) if n_chunks > 1 else []
        chunks = np.split(toks, cuts)
        streamed = stream_head_value(iter(chunks), W, beta)
        worst = max(worst, abs(streamed - batch) / (1.0 + abs(batch)))
    return _suite("streaming-equivalence", worst, 1e-8)


def check_dual_formulation(trials: int = 200) -> dict:
    rng = np.random.default_rng(22)
    worst = 0.0
    for _ in range(trials):
        toks = rng.standard_normal((int(rng.integers(1, 9)), 3))
        W = rng.standard_normal((int(rng.integers(1, 4)), 3))
        beta = float(rng.uniform(0.0, 2.0))
        a = head_value(toks, W, beta).value
        b = head_value_sequence_form(toks, W, beta)
        worst = max(worst, abs(a - b))
    return _suite("dual-formulation", worst, 1e-10)


def check_decomposition() -> dict:
    rng = np.random.default_rng(23)
    worst = 0.0
    for d in (4, 16):
        A = rng.standard_normal((d, d))
        sigma = A @ A.T / d + 0.1 * np.eye(d)
        X = rng.multivariate_normal(np.zeros(d), sigma, size=4 * d)
        fit = maha_fit(X)
        dec = decompose_covariance(fit)
        for _ in range(100):
            z = rng.standard_normal(d) * 2.0
            direct = -maha_score(z, fit)
            via = dec.quadratic(z, fit.mean)
            worst = max(worst, abs(direct - via) / (1.0 + abs(direct)))
    return _suite("decomposition-roundtrip", worst, 1e-6)


def check_beta0_reduction() -> dict:
    rng = np.random.default_rng(24)
    d, n, s = 8, 50, 6
    seqs = [EmbeddingSequence(rng.standard_normal((s, d)).astype(np.float32))
            for _ in range(n)]
    corpus = Corpus(dim=d, sequences=seqs)
    fit = maha_fit([mean_pool(q) for q in corpus])
    dec = decompose_covariance(fit)
    params = ApoodParams(dec.weights[:, None, :])  # M = D heads, T = 1
    detector = freeze_model(params, beta=0.0, corpus=corpus)
    worst = 0.0
    for q in corpus:
        d2_attn, _ = distance_sq(q, detector)
        d2_maha = -maha_score(mean_pool(q), fit)
        worst = max(worst, abs(d2_attn - d2_maha) / (1.0 + d2_maha))
    return _suite("beta0-reduction", worst, 1e-6)


def check_metrics() -> dict:
    rng = np.random.default_rng(25)
    worst = 0.0
    for _ in range(20):
        a = rng.integers(0, 6, size=int(rng.integers(1, 40))).astype(float)
        b = rng.integers(0, 6, size=int(rng.integers(1, 40))).astype(float)
        worst = max(worst, abs(auroc(a, b) - auroc_pairwise(a, b)))
    fpr, gamma = fpr_at_tpr(np.arange(1.0, 101.0), np.arange(1.0, 101.0))
    if gamma != 6.0 or abs(fpr - 0.95) > 1e-12:
        worst = max(worst, 1.0)
    return _suite("metrics-oracle", worst, 0.0)


def run_selfcheck() -> tuple[bool, list[dict]]:
    suites = []
    suites.extend(check_gradients())
    suites.append(check_streaming())
    suites.append(check_dual_formulation())
    suites.append(check_decomposition())
    suites.append(check_beta0_reduction())
    suites.append(check_metrics())
    return all(s["passed"] for s in suites), suites
