"""Command-line surface: train, score, eval, baseline, toy, selfcheck.

Configuration comes from a single JSON file (--config) overridable by
flags (flags win). All randomness funnels through the one `seed` field.
Exit codes are a stable contract: 0 ok, 2 io, 3 shape, 4 format,
5 selfcheck failure, 1 anything else; failures emit a machine-readable
{"error": {"kind", "message"}} object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baselines as bl
from .corpus import Corpus, Label, load_corpus
from .errors import ApoodError, ArgumentError, IoError, ShapeError
from .metrics import evaluate, read_scores_csv, write_scores_csv
from .model import Hyperparams, load_model, save_model, score, score_min, train
from .selfcheck import run_selfcheck
from .toy import ToyConfig, run_toy_experiment

EXIT_BY_KIND = {"io": 2, "shape": 3, "format": 4}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ApoodError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ApoodError(f"config {path} must be a JSON object")
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, keys: dict[str, str]) -> dict:
    """Overlay parsed flags (when given) onto the config dict; flags win."""
    merged = dict(cfg)
    for attr, key in keys.items():
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    return merged


def _hyperparams(cfg: dict) -> Hyperparams:
    hp = Hyperparams(
        beta=float(cfg.get("beta", 0.5)),
        heads=int(cfg.get("heads", 1)),
        queries_per_head=int(cfg.get("queries_per_head", 1)),
        lambda_aux=float(cfg.get("lambda_aux", 1.0)),
        lr=float(cfg.get("lr", 0.01)),
        steps=int(cfg.get("steps", 1000)),
        batch_size=int(cfg.get("batch_size", 512)),
        seed=int(cfg.get("seed", 0)),
        init_scale=(float(cfg["init_scale"]) if cfg.get("init_scale") is not None
                    else None),
    )
    hp.validate()
    return hp


def _require(cfg: dict, key: str) -> str:
    if key not in cfg or cfg[key] is None:
        raise ArgumentError(f"missing required config key {key!r}")
    return cfg[key]


def _mean_vectors(corpus: Corpus) -> np.ndarray:
    return np.stack([bl.mean_pool(s) for s in corpus])


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("APOOD_THREADS", "1")))
    except ValueError:
        return 1


def _score_corpus(model, corpus: Corpus, use_min: bool) -> list[float]:
    fn = score_min if use_min else score
    threads = _n_threads()
    seqs = corpus.sequences
    if threads == 1 or len(seqs) < 2 * threads:
        return [fn(s, model) for s in seqs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(s, model), seqs))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _merge(_load_config(args.config), args, {
        "id": "id_corpus", "aux": "aux_corpus", "model_out": "model_out",
        "beta": "beta", "heads": "heads", "queries": "queries_per_head",
        "lambda_aux": "lambda_aux", "lr": "lr", "steps": "steps",
        "batch_size": "batch_size", "seed": "seed", "init_scale": "init_scale",
    })
    id_corpus = load_corpus(_require(cfg, "id_corpus"), Label.ID)
    aux_corpus = None
    if cfg.get("aux_corpus"):
        aux_corpus = load_corpus(cfg["aux_corpus"], Label.AUX)
    hp = _hyperparams(cfg)
    if aux_corpus is not None and len(aux_corpus) > 0 and hp.lambda_aux == 0.0:
        print("warning: aux corpus provided but lambda_aux = 0; "
              "the auxiliary term is inert", file=sys.stderr)
    last_loss = [math.nan]

    def record(step, loss):
        last_loss[0] = loss

    t0 = time.perf_counter()
    model = train(id_corpus, aux_corpus, hp, step_callback=record)
    wall = time.perf_counter() - t0
    save_model(model, _require(cfg, "model_out"))
    print(f"final_loss={last_loss[0]:.6g} wall_time_s={wall:.2f}")
    return 0


def cmd_score(args) -> int:
    cfg = _merge(_load_config(args.config), args, {
        "model": "model", "inp": "score_in", "out": "scores_out",
    })
    model = load_model(_require(cfg, "model"))
    label = Label(args.label)
    corpus = load_corpus(_require(cfg, "score_in"), label)
    if len(corpus) > 0 and corpus.dim != model.dim:
        raise ShapeError(
            f"corpus dim {corpus.dim} does not match model dim {model.dim}")
    values = _score_corpus(model, corpus, args.min_score)
    write_scores_csv(_require(cfg, "scores_out"), values, label)
    return 0


def cmd_eval(args) -> int:
    _, id_scores, _ = read_scores_csv(args.id_scores)
    _, ood_scores, _ = read_scores_csv(args.ood_scores)
    report = evaluate(id_scores, ood_scores, level=args.level)
    doc = report.to_json()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f)
    print(f"auroc={report.auroc * 100:.2f}% fpr95={report.fpr95 * 100:.2f}% "
          f"threshold={report.threshold:.6g}")
    if not args.out:
        print(json.dumps(doc))
    return 0


def cmd_baseline(args) -> int:
    cfg = _merge(_load_config(args.config), args, {
        "method": "method", "id": "id_corpus", "aux": "aux_corpus",
        "inp": "score_in", "out": "scores_out", "model_out": "model_out",
        "knn_k": "knn_k", "out_dim": "out_dim", "eta": "eta",
        "seed": "seed", "lr": "lr", "steps": "steps",
    })
    method = cfg.get("method", "maha")
    id_corpus = load_corpus(_require(cfg, "id_corpus"), Label.ID)
    if len(id_corpus) == 0:
        raise ArgumentError("baseline fitting needs a non-empty id corpus")
    target_label = Label(args.label)
    target = load_corpus(_require(cfg, "score_in"), target_label)
    if len(target) > 0 and target.dim != id_corpus.dim:
        raise ShapeError(
            f"corpus dim {target.dim} does not match id dim {id_corpus.dim}")
    aux_corpus = None
    if cfg.get("aux_corpus"):
        aux_corpus = load_corpus(cfg["aux_corpus"], Label.AUX)

    id_means = _mean_vectors(id_corpus)
    aux_means = _mean_vectors(aux_corpus) if aux_corpus and len(aux_corpus) else None
    target_means = [bl.mean_pool(s) for s in target]
    hp = Hyperparams(lr=float(cfg.get("lr", 0.01)),
                     steps=int(cfg.get("steps", 1000)),
                     seed=int(cfg.get("seed", 0)))

    model_doc = None
    if method == "maha":
        fit = bl.maha_fit(id_means)
        values = [bl.maha_score(z, fit) for z in target_means]
        model_doc = fit
    elif method == "knn":
        k = int(cfg.get("knn_k", 10))
        values = [bl.knn_score(z, id_means, k) for z in target_means]
        model_doc = bl.knn_doc(id_means, k)
    elif method == "svdd":
        m = bl.svdd_train(id_means, cfg.get("out_dim"), hp)
        values = [bl.svdd_score(z, m) for z in target_means]
        model_doc = m
    elif method == "sad":
        if aux_means is None:
            raise ArgumentError("method sad needs aux_corpus")
        m = bl.sad_train(id_means, aux_means, cfg.get("out_dim"), hp,
                         eta=float(cfg.get("eta", 1.0)))
        values = [bl.svdd_score(z, m) for z in target_means]
        model_doc = m
    elif method == "logit":
        if aux_means is None:
            raise ArgumentError("method logit needs aux_corpus")
        m = bl.logit_train(id_means, aux_means, hp)
        values = [bl.logit_score(z, m) for z in target_means]
        model_doc = m
    elif method == "relmaha":
        if aux_means is None:
            raise ArgumentError("method relmaha needs aux_corpus")
        fit_id = bl.maha_fit(id_means)
        fit_bg = bl.maha_fit(np.vstack([id_means, aux_means]))
        values = [bl.relative_maha_score(z, fit_id, fit_bg) for z in target_means]
        model_doc = bl.relmaha_doc(fit_id, fit_bg)
    else:
        raise ArgumentError(f"unknown baseline method {method!r}")

    write_scores_csv(_require(cfg, "scores_out"), values, target_label)
    if cfg.get("model_out"):
        bl.save_baseline(model_doc, cfg["model_out"])
    return 0


def cmd_toy(args) -> int:
    cfg = _merge(_load_config(args.config), args, {
        "n": "toy_n", "sigma": "toy_sigma", "seed": "seed",
        "beta": "toy_beta", "resolution": "toy_resolution", "out": "toy_out",
    })
    toy_cfg = ToyConfig(n_per_class=int(cfg.get("toy_n", 500)),
                        sigma=float(cfg.get("toy_sigma", 0.1)),
                        seed=int(cfg.get("seed", 0)))
    report = run_toy_experiment(toy_cfg, beta=float(cfg.get("toy_beta", 5.0)),
                                resolution=int(cfg.get("toy_resolution", 100)))
    doc = report.to_json()
    out = cfg.get("toy_out")
    if out:
        with open(out, "w") as f:
            json.dump(doc, f)
    print(f"auroc_maha={report.auroc_maha * 100:.2f}% "
          f"auroc_apood={report.auroc_apood * 100:.2f}%")
    return 0


def cmd_selfcheck(_args) -> int:
    ok, suites = run_selfcheck()
    for s in suites:
        mark = "ok  " if s["passed"] else "FAIL"
        print(f"{mark} {s['name']}: max_err={s['max_err']:.3g} "
              f"tol={s['tolerance']:.3g}")
    if not ok:
        failures = [s["name"] for s in suites if not s["passed"]]
        print(json.dumps({"error": {"kind": "selfcheck",
                                    "message": f"failing suites: {failures}"}}),
              file=sys.stderr)
        return 5
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="apood",
        description="attention-pooled OOD detection over token-embedding corpora")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a detector and write the model file")
    tr.add_argument("--config")
    tr.add_argument("--id", dest="id")
    tr.add_argument("--aux", dest="aux")
    tr.add_argument("--model-out", dest="model_out")
    tr.add_argument("--beta", type=float)
    tr.add_argument("--heads", type=int)
    tr.add_argument("--queries", type=int)
    tr.add_argument("--lambda-aux", dest="lambda_aux", type=float)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--init-scale", dest="init_scale", type=float)
    tr.set_defaults(func=cmd_train)

    sc = sub.add_parser("score", help="score a corpus with a trained model")
    sc.add_argument("--config")
    sc.add_argument("--model")
    sc.add_argument("--in", dest="inp")
    sc.add_argument("--out", dest="out")
    sc.add_argument("--label", default="ID", choices=[l.value for l in Label])
    sc.add_argument("--min-score", action="store_true",
                    help="use the min-over-heads score instead of the sum form")
    sc.set_defaults(func=cmd_score)

    ev = sub.add_parser("eval", help="AUROC / FPR95 from two score files")
    ev.add_argument("--id-scores", required=True)
    ev.add_argument("--ood-scores", required=True)
    ev.add_argument("--out")
    ev.add_argument("--level", type=float, default=0.95)
    ev.set_defaults(func=cmd_eval)

    ba = sub.add_parser("baseline", help="fit and score a reference detector")
    ba.add_argument("--config")
    ba.add_argument("--method",
                    choices=["maha", "knn", "svdd", "sad", "logit", "relmaha"])
    ba.add_argument("--id", dest="id")
    ba.add_argument("--aux", dest="aux")
    ba.add_argument("--in", dest="inp")
    ba.add_argument("--out", dest="out")
    ba.add_argument("--label", default="ID", choices=[l.value for l in Label])
    ba.add_argument("--model-out", dest="model_out")
    ba.add_argument("--knn-k", dest="knn_k", type=int)
    ba.add_argument("--out-dim", dest="out_dim", type=int)
    ba.add_argument("--eta", type=float)
    ba.add_argument("--seed", type=int)
    ba.add_argument("--lr", type=float)
    ba.add_argument("--steps", type=int)
    ba.set_defaults(func=cmd_baseline)

    ty = sub.add_parser("toy", help="run the 2-d toy experiment")
    ty.add_argument("--config")
    ty.add_argument("--n", type=int)
    ty.add_argument("--sigma", type=float)
    ty.add_argument("--seed", type=int)
    ty.add_argument("--beta", type=float)
    ty.add_argument("--resolution", type=int)
    ty.add_argument("--out")
    ty.set_defaults(func=cmd_toy)

    sf = sub.add_parser("selfcheck", help="run the numerical identity suites")
    sf.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ApoodError as exc:
        print(json.dumps({"error": {"kind": exc.kind, "message": str(exc)}}),
              file=sys.stderr)
        return EXIT_BY_KIND.get(exc.kind, 1)
    except Exception as exc:  # noqa: BLE001 - stable nonzero exit contract
        print(json.dumps({"error": {"kind": "other", "message": str(exc)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
