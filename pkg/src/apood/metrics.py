"""Detection metrics: tie-corrected rank AUROC and FPR at a TPR level.

AUROC is Pr(id > ood) + 0.5 Pr(id = ood) over all pairs. The rank-sum
form with average ranks for ties equals pairwise enumeration exactly
(both numerators are half-integers, so float64 arithmetic is exact);
the O(n^2) enumeration is kept as an oracle.

Threshold convention for FPR-at-TPR: gamma is the largest score value
such that at least `level` of the ID scores are >= gamma, i.e. the
(n - ceil(level*n))-th smallest ID score (0-indexed), ties resolved
toward classifying ID. The FPR is the fraction of OOD scores >= gamma.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Label
from .errors import ArgumentError, FormatError, IoError


def _scores(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise ArgumentError("score list must be non-empty")
    if not np.all(np.isfinite(a)):
        raise ArgumentError("scores must be finite")
    return a


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values assigned their average rank."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(id_scores, ood_scores) -> float:
    """Rank-sum AUROC with tie correction."""
    a = _scores(id_scores)
    b = _scores(ood_scores)
    ranks = _average_ranks(np.concatenate([a, b]))
    r_id = ranks[: len(a)].sum()
    num = r_id - len(a) * (len(a) + 1) / 2.0
    return float(num / (len(a) * len(b)))


def auroc_pairwise(id_scores, ood_scores) -> float:
    """O(n^2) enumeration over all (id, ood) pairs; oracle for auroc."""
    a = _scores(id_scores)
    b = _scores(ood_scores)
    wins = float((a[:, None] > b[None, :]).sum())
    ties = float((a[:, None] == b[None, :]).sum())
    return (wins + 0.5 * ties) / (len(a) * len(b))


def fpr_at_tpr(id_scores, ood_scores, level: float = 0.95) -> tuple[float, float]:
    """FPR on OOD at the largest threshold keeping TPR >= level on ID.

    Returns (fpr, threshold).
    """
    a = _scores(id_scores)
    b = _scores(ood_scores)
    if not (0.0 < level < 1.0):
        raise ArgumentError(f"level must be in (0, 1), got {level}")
    n = len(a)
    m = int(math.ceil(level * n - 1e-9))  # epsilon guards float ceil(0.9*10)=10
    m = max(1, min(m, n))
    gamma = float(np.sort(a)[n - m])
    fpr = float((b >= gamma).mean())
    return fpr, gamma


def classify(score: float, threshold: float) -> Label:
    """ID iff score >= threshold."""
    if not (math.isfinite(score) and math.isfinite(threshold)):
        raise ArgumentError("classify needs finite inputs")
    return Label.ID if score >= threshold else Label.OOD


@dataclass
class EvalReport:
    auroc: float
    fpr95: float
    threshold: float
    n_id: int
    n_ood: int

    def to_json(self) -> dict:
        return {
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "threshold": self.threshold,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }


def evaluate(id_scores, ood_scores, level: float = 0.95) -> EvalReport:
    a = _scores(id_scores)
    b = _scores(ood_scores)
    fpr, gamma = fpr_at_tpr(a, b, level)
    return EvalReport(auroc=auroc(a, b), fpr95=fpr, threshold=gamma,
                      n_id=len(a), n_ood=len(b))


# ---------------------------------------------------------------------------
# score file IO (CSV: sequence_index,score,label)
# ---------------------------------------------------------------------------

def write_scores_csv(path, scores, label: Label, indices=None) -> None:
    scores = list(scores)
    if indices is None:
        indices = range(len(scores))
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sequence_index", "score", "label"])
            for i, s in zip(indices, scores):
                w.writerow([i, repr(float(s)), label.value])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_scores_csv(path) -> tuple[list[int], np.ndarray, list[str]]:
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["sequence_index", "score", "label"]:
        raise FormatError(f"{path}: missing scores header")
    idx: list[int] = []
    vals: list[float] = []
    labels: list[str] = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise FormatError(f"{path}: line {ln}: expected 3 columns")
        try:
            idx.append(int(row[0]))
            vals.append(float(row[1]))
        except ValueError as exc:
            raise FormatError(f"{path}: line {ln}: {exc}") from exc
        labels.append(row[2])
    return idx, np.asarray(vals, dtype=np.float64), labels
