"""Leave-last-out evaluation: recall@K and DCG@K over a test session set.

Each test session contributes one prediction task: the model sees all views
but the last and must rank the held-out final view.  Latent-variable models
are scored on the {AE, EM} x {MC, mean} grid (posterior construction x
next-item approximation); baselines produce a single row.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines as _baselines
from .bouchard import em_infer
from .data import Session, SessionSet, to_counts
from .encoders import Encoder, encode
from .model import ModelParams
from .predict import predict_mc, predict_mean, top_k


def recall_at_k(predicted, truth: int) -> int:
    """1 iff the held-out item appears in the ranked list."""
    return 1 if truth in list(predicted) else 0


def dcg_at_k(predicted, truth: int) -> float:
    """Binary-gain discounted cumulative gain: 1/log2(rank+1) on a hit."""
    predicted = list(predicted)
    if truth not in predicted:
        return 0.0
    rank = predicted.index(truth) + 1
    return 1.0 / math.log2(rank + 1)


def dcg_literal_at_k(top_probs, hit: bool) -> float:
    """Alternative gain form where the exponent is the predicted probability.

    Sums (2^(r_i * hit) - 1) / (ln(i) + 1) over ranks i, r_i being the i-th
    highest predicted probability.  Kept for auditability next to the
    standard binary-gain form; selected with dcg="literal".
    """
    total = 0.0
    for i, r in enumerate(top_probs, start=1):
        total += (2.0 ** (r * (1.0 if hit else 0.0)) - 1.0) / (math.log(i) + 1.0)
    return total


@dataclass
class EvalConfig:
    k: int = 5
    mc_samples: int = 100
    em_iters: int = 100
    seed: int = 0
    dcg: str = "binary"  # or "literal"
    threads: int = 1

    def __post_init__(self):
        if self.dcg not in ("binary", "literal"):
            raise ValueError(f"unknown dcg mode {self.dcg!r}")
        if self.k < 1 or self.mc_samples < 1 or self.em_iters < 1 or self.threads < 1:
            raise ValueError("bad evaluation configuration")


@dataclass
class EvalRow:
    train_algorithm: str
    online_latent: str
    online_next_item: str
    rc_at_k: float
    dcg_at_k: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    k: int
    num_sessions: int
    num_skipped: int

    def row(self, latent: str, next_item: str) -> EvalRow:
        for r in self.rows:
            if r.online_latent == latent and r.online_next_item == next_item:
                return r
        raise KeyError(f"no row for ({latent}, {next_item})")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("train_algorithm,online_latent,online_next_item,rc_at_k,dcg_at_k\n")
        for r in self.rows:
            out.write(
                f"{r.train_algorithm},{r.online_latent},{r.online_next_item},"
                f"{r.rc_at_k:.6f},{r.dcg_at_k:.6f}\n"
            )
        return out.getvalue()

    def to_text(self) -> str:
        lines = [
            f"evaluated {self.num_sessions} sessions at K={self.k}"
            + (f" ({self.num_skipped} skipped: fewer than 2 views)" if self.num_skipped else ""),
            f"{'algorithm':<14}{'latent':<8}{'next item':<11}{'RC@K':>8}{'DCG@K':>9}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.train_algorithm:<14}{r.online_latent:<8}{r.online_next_item:<11}"
                f"{r.rc_at_k:>8.3f}{r.dcg_at_k:>9.3f}"
            )
        return "\n".join(lines) + "\n"


def evaluate_predictors(predictors, test: SessionSet, cfg: EvalConfig) -> EvalReport:
    """Score named predictors with shared leave-last-out tasks.

    `predictors` maps (train_algorithm, online_latent, online_next_item) to a
    function (history Session, session index) -> probability vector.
    Sessions with fewer than 2 views are skipped and counted.
    """
    names = list(predictors)
    tasks = []
    skipped = 0
    for idx, s in enumerate(test):
        if len(s.views) < 2:
            skipped += 1
            continue
        history = Session(s.session_id, s.views[:-1])
        tasks.append((idx, history, s.views[-1]))

    def score(task):
        idx, history, truth = task
        out = []
        for name in names:
            probs = predictors[name](history, idx)
            ids = top_k(probs, cfg.k)
            rc = recall_at_k(ids, truth)
            if cfg.dcg == "binary":
                dcg = dcg_at_k(ids, truth)
            else:
                dcg = dcg_literal_at_k(np.asarray(probs)[ids], bool(rc))
            out.append((rc, dcg))
        return out

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(score, tasks))
    else:
        results = [score(t) for t in tasks]

    n = len(tasks)
    rows = []
    for j, (algo, latent, next_item) in enumerate(names):
        rc_total = sum(r[j][0] for r in results)
        dcg_total = sum(r[j][1] for r in results)
        rows.append(
            EvalRow(algo, latent, next_item, rc_total / max(n, 1), dcg_total / max(n, 1))
        )
    return EvalReport(rows, cfg.k, n, skipped)


def lvm_predictors(
    params: ModelParams,
    cfg: EvalConfig,
    encoder: Encoder | None = None,
    algorithm: str = "lvm",
):
    """The {AE, EM} x {MC, mean} prediction grid (AE only with an encoder).

    Posteriors are memoized per (latent method, session) so the MC and mean
    rows of one method share a single inference pass.
    """
    posterior_cache: dict[tuple[str, int], object] = {}

    def get_posterior(method: str, history: Session, idx: int):
        key = (method, idx)
        if key not in posterior_cache:
            if method == "EM":
                q, _, _ = em_infer(params, history, iters=cfg.em_iters)
            else:
                counts = to_counts(history, params.num_items)
                q, _ = encode(encoder, counts)
            posterior_cache[key] = q
        return posterior_cache[key]

    def make(method: str, approx: str):
        def fn(history: Session, idx: int):
            q = get_posterior(method, history, idx)
            if approx == "MC":
                return predict_mc(params, q, cfg.mc_samples, seed=[cfg.seed, idx])
            return predict_mean(params, q)

        return fn

    methods = (["AE"] if encoder is not None else []) + ["EM"]
    return {
        (algorithm, method, approx): make(method, approx)
        for method in methods
        for approx in ("MC", "mean")
    }


def evaluate_lvm(
    params: ModelParams,
    test: SessionSet,
    cfg: EvalConfig,
    encoder: Encoder | None = None,
    algorithm: str = "lvm",
) -> EvalReport:
    return evaluate_predictors(lvm_predictors(params, cfg, encoder, algorithm), test, cfg)


def evaluate_baseline(name: str, model, test: SessionSet, cfg: EvalConfig) -> EvalReport:
    if name == "pop":
        fn = lambda history, idx: model.predict(history)
    elif name == "itemknn":
        fn = lambda history, idx: _baselines.predict_itemknn(model, history)
    else:
        raise ValueError(f"unknown baseline {name!r}")
    return evaluate_predictors({(name, "", ""): fn}, test, cfg)
