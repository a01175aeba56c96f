"""Command-line pipeline: simulate, split, train, infer, predict, eval,
case-study.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Tunable options resolve as flags > JSON config file (--config) > defaults,
and every file-writing run drops a resolved-config JSON next to its primary
output for provenance.  Log lines go to stderr, data to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import baselines, encoders, metrics, simulator as sim, training
from .bouchard import em_infer
from .data import load_sessions, split_by_session, to_counts, write_sessions, Session
from .errors import NumericError, SessionDataError
from .model import load_params, save_params
from .predict import predict_mc, predict_mean, top_k


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is exit 1
        raise _UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Option resolution: flags > config file > defaults.

class Opt:
    def __init__(self, flag, type=str, default=None, help="", choices=None, required=False):
        self.flag = flag
        self.name = flag.lstrip("-").replace("-", "_")
        self.type = type
        self.default = default
        self.help = help
        self.choices = choices
        self.required = required


def _add_opts(parser, opts):
    parser.add_argument("--config", default=None, help="JSON file of option defaults")
    for o in opts:
        shown = f" (default: {o.default})" if o.default is not None else ""
        parser.add_argument(
            o.flag,
            dest=o.name,
            type=o.type,
            default=None,
            choices=o.choices,
            required=o.required,
            help=o.help + shown,
        )


def _resolve(args, opts):
    from_file = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise _UsageError(f"cannot read config {args.config}: {exc}") from None
        known = {o.name for o in opts}
        unknown = set(from_file) - known
        if unknown:
            raise _UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for o in opts:
        value = getattr(args, o.name)
        if value is None and o.name in from_file:
            value = o.type(from_file[o.name])
            if o.choices and value not in o.choices:
                raise _UsageError(f"config {o.name}={value!r} not in {o.choices}")
        if value is None:
            value = o.default
        resolved[o.name] = value
    return resolved


def _write_run_config(primary_out: str, command: str, resolved: dict) -> None:
    doc = {"command": command}
    doc.update({k: v for k, v in sorted(resolved.items())})
    with open(str(primary_out) + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# Subcommands.

_SIMULATE_OPTS = [
    Opt("--num-items", int, 20, "catalog size for a random ground truth"),
    Opt("--k", int, 5, "embedding dimension for a random ground truth"),
    Opt("--sessions", int, 100, "number of sessions to generate"),
    Opt("--length", str, "10", 'session length spec: "N", "fixed:N" or "poisson:RATE"'),
    Opt("--seed", int, 0, "random seed"),
    Opt("--psi-scale", float, 1.0, "std of random ground-truth embeddings"),
    Opt("--rho-scale", float, 0.0, "std of random ground-truth popularity shifts"),
    Opt("--ground-truth", str, None, "read ground-truth parameters from this file instead"),
    Opt("--out", str, None, "session CSV to write", required=True),
    Opt("--gt-out", str, None, "where to write the ground truth used (default <out>.gt.txt)"),
]


def _cmd_simulate(args):
    r = _resolve(args, _SIMULATE_OPTS)
    if r["ground_truth"] is not None:
        params = load_params(r["ground_truth"])
    else:
        params = sim.random_ground_truth(
            r["num_items"], r["k"], r["seed"], r["psi_scale"], r["rho_scale"]
        ).params
    gt = sim.GroundTruth(params, r["seed"])
    data = sim.simulate(gt, r["sessions"], r["length"])
    write_sessions(data, r["out"])
    gt_out = r["gt_out"] or (r["out"] + ".gt.txt")
    save_params(params, gt_out)
    r["gt_out"] = gt_out
    _write_run_config(r["out"], "simulate", r)
    _log(f"wrote {len(data)} sessions ({data.total_views()} views) to {r['out']}")
    return 0


_SPLIT_OPTS = [
    Opt("--in", str, None, "session CSV to split", required=True),
    Opt("--test-fraction", float, 0.2, "fraction of sessions for the test side"),
    Opt("--seed", int, 0, "random seed"),
    Opt("--num-items", int, None, "explicit catalog size"),
    Opt("--train-out", str, None, "train CSV", required=True),
    Opt("--test-out", str, None, "test CSV", required=True),
]


def _cmd_split(args):
    r = _resolve(args, _SPLIT_OPTS)
    data = load_sessions(r["in"], num_items=r["num_items"])
    train, test = split_by_session(data, r["test_fraction"], r["seed"])
    write_sessions(train, r["train_out"])
    write_sessions(test, r["test_out"])
    _write_run_config(r["train_out"], "split", r)
    _log(f"split {len(data)} sessions into {len(train)} train / {len(test)} test")
    return 0


_TRAIN_OPTS = [
    Opt("--in", str, None, "training session CSV", required=True),
    Opt("--bound", str, "bouchard", "objective", choices=list(training.BOUNDS)),
    Opt("--encoder", str, "linear_bouchard", "encoder kind", choices=list(encoders.KINDS)),
    Opt("--k", int, 10, "embedding dimension"),
    Opt("--epochs", int, 100, "training epochs"),
    Opt("--lr", float, 0.001, "learning rate"),
    Opt("--l2", float, 0.0, "L2 penalty on embeddings and encoder weights"),
    Opt("--batch-size", int, 10, "sessions per gradient step"),
    Opt("--mc-samples", int, 1, "posterior draws per step (reparam bound)"),
    Opt("--seed", int, 0, "random seed"),
    Opt("--num-items", int, None, "explicit catalog size"),
    Opt("--out", str, None, "model parameters file to write", required=True),
    Opt("--encoder-out", str, None, "encoder file (default <out>.encoder.json)"),
    Opt("--loss-out", str, None, "loss curve CSV (default <out>.loss.csv)"),
]


def _cmd_train(args):
    r = _resolve(args, _TRAIN_OPTS)
    data = load_sessions(r["in"], num_items=r["num_items"])
    try:
        cfg = training.TrainConfig(
            bound=r["bound"],
            encoder_kind=r["encoder"],
            dim=r["k"],
            epochs=r["epochs"],
            learning_rate=r["lr"],
            l2=r["l2"],
            batch_size=r["batch_size"],
            mc_samples_train=r["mc_samples"],
            seed=r["seed"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    _log(
        f"training {cfg.bound} bound / {cfg.encoder_kind} encoder on "
        f"{len(data)} sessions, K={cfg.dim}, {cfg.epochs} epochs"
    )
    result = training.train(data, cfg)
    save_params(result.params, r["out"])
    enc_out = r["encoder_out"] or (r["out"] + ".encoder.json")
    encoders.save_encoder(result.encoder, enc_out)
    loss_out = r["loss_out"] or (r["out"] + ".loss.csv")
    with open(loss_out, "w", encoding="utf-8") as fh:
        fh.write("epoch,objective\n")
        for epoch, value in enumerate(result.loss_curve):
            fh.write(f"{epoch},{_fmt(value)}\n")
    r["encoder_out"], r["loss_out"] = enc_out, loss_out
    _write_run_config(r["out"], "train", r)
    if result.loss_curve:
        _log(f"final mean objective {result.loss_curve[-1]:.4f}")
    return 0


_INFER_OPTS = [
    Opt("--model", str, None, "model parameters file", required=True),
    Opt("--in", str, None, "session CSV", required=True),
    Opt("--iters", int, 100, "fixed-point iterations per session"),
    Opt("--threads", int, 1, "parallel inference workers"),
    Opt("--out", str, None, "posterior CSV to write", required=True),
]


def _cmd_infer(args):
    r = _resolve(args, _INFER_OPTS)
    params = load_params(r["model"])
    data = load_sessions(r["in"], num_items=params.num_items)
    k = params.dim

    def one(session):
        q, _, trace = em_infer(params, session, iters=r["iters"])
        return q, trace[-1]

    if r["threads"] > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=r["threads"]) as pool:
            results = list(pool.map(one, data.sessions))
    else:
        results = [one(s) for s in data.sessions]

    with open(r["out"], "w", encoding="utf-8") as fh:
        header = (
            ["session_id"]
            + [f"mu_{i}" for i in range(k)]
            + [f"var_{i}" for i in range(k)]
            + ["bound"]
        )
        fh.write(",".join(header) + "\n")
        for session, (q, bound) in zip(data.sessions, results):
            cells = (
                [session.session_id]
                + [_fmt(x) for x in q.mu]
                + [_fmt(x) for x in q.variances()]
                + [_fmt(bound)]
            )
            fh.write(",".join(cells) + "\n")
    _write_run_config(r["out"], "infer", r)
    _log(f"inferred posteriors for {len(data)} sessions")
    return 0


_PREDICT_OPTS = [
    Opt("--model", str, None, "model parameters file", required=True),
    Opt("--in", str, None, "session CSV (each session is a full history)", required=True),
    Opt("--latent", str, "em", "posterior construction", choices=["em", "ae"]),
    Opt("--encoder", str, None, "encoder file (required for --latent ae)"),
    Opt("--method", str, "mc", "next-item approximation", choices=["mc", "mean"]),
    Opt("--mc-samples", int, 100, "posterior draws for --method mc"),
    Opt("--iters", int, 100, "fixed-point iterations for --latent em"),
    Opt("--top-k", int, 5, "list length to report"),
    Opt("--seed", int, 0, "random seed"),
    Opt("--out", str, None, "prediction CSV to write", required=True),
]


def _cmd_predict(args):
    r = _resolve(args, _PREDICT_OPTS)
    params = load_params(r["model"])
    if r["latent"] == "ae" and not r["encoder"]:
        raise _UsageError("--latent ae needs --encoder")
    encoder = encoders.load_encoder(r["encoder"]) if r["latent"] == "ae" else None
    data = load_sessions(r["in"], num_items=params.num_items)
    with open(r["out"], "w", encoding="utf-8") as fh:
        fh.write("session_id,rank,item_id,probability\n")
        for idx, session in enumerate(data.sessions):
            if r["latent"] == "em":
                q, _, _ = em_infer(params, session, iters=r["iters"])
            else:
                q, _ = encoders.encode(encoder, to_counts(session, params.num_items))
            if r["method"] == "mc":
                probs = predict_mc(params, q, r["mc_samples"], seed=[r["seed"], idx])
            else:
                probs = predict_mean(params, q)
            for rank, item in enumerate(top_k(probs, r["top_k"]), start=1):
                fh.write(f"{session.session_id},{rank},{item},{_fmt(probs[item])}\n")
    _write_run_config(r["out"], "predict", r)
    _log(f"wrote top-{r['top_k']} predictions for {len(data)} sessions")
    return 0


_EVAL_OPTS = [
    Opt("--algorithm", str, "lvm", "what to evaluate", choices=["lvm", "pop", "itemknn"]),
    Opt("--model", str, None, "model parameters file (lvm)"),
    Opt("--encoder", str, None, "encoder file (adds the AE rows)"),
    Opt("--train-in", str, None, "training session CSV (baselines fit on it)"),
    Opt("--in", str, None, "test session CSV", required=True),
    Opt("--k-metric", int, 5, "metric cutoff K"),
    Opt("--mc-samples", int, 100, "posterior draws for the MC rows"),
    Opt("--em-iters", int, 100, "fixed-point iterations for the EM rows"),
    Opt("--dcg", str, "binary", "DCG gain form", choices=["binary", "literal"]),
    Opt("--seed", int, 0, "random seed"),
    Opt("--threads", int, 1, "parallel evaluation workers"),
    Opt("--num-items", int, None, "explicit catalog size"),
    Opt("--out", str, None, "report CSV to write", required=True),
]


def _cmd_eval(args):
    r = _resolve(args, _EVAL_OPTS)
    cfg = metrics.EvalConfig(
        k=r["k_metric"],
        mc_samples=r["mc_samples"],
        em_iters=r["em_iters"],
        seed=r["seed"],
        dcg=r["dcg"],
        threads=r["threads"],
    )
    if r["algorithm"] == "lvm":
        if not r["model"]:
            raise _UsageError("--algorithm lvm needs --model")
        params = load_params(r["model"])
        test = load_sessions(r["in"], num_items=params.num_items)
        encoder = encoders.load_encoder(r["encoder"]) if r["encoder"] else None
        report = metrics.evaluate_lvm(params, test, cfg, encoder=encoder)
    else:
        if not r["train_in"]:
            raise _UsageError(f"--algorithm {r['algorithm']} needs --train-in")
        train = load_sessions(r["train_in"], num_items=r["num_items"])
        test = load_sessions(r["in"], num_items=train.num_items)
        if r["algorithm"] == "pop":
            model = baselines.fit_popularity(train)
        else:
            model = baselines.fit_itemknn(train)
        report = metrics.evaluate_baseline(r["algorithm"], model, test, cfg)
    with open(r["out"], "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    _write_run_config(r["out"], "eval", r)
    sys.stdout.write(report.to_text())
    return 0


_CASE_STUDY_OPTS = [
    Opt("--iters", int, 100, "fixed-point iterations per scenario"),
    Opt("--mc-samples", int, 100, "posterior draws for next-item prediction"),
    Opt("--seed", int, 0, "random seed"),
]


def _cmd_case_study(args):
    r = _resolve(args, _CASE_STUDY_OPTS)
    gt, labels = sim.case_study_fixture()
    params = gt.params
    width = max(len(name) for name in labels)

    def show_probs(probs):
        for item, label in enumerate(labels):
            print(f"    {label:<{width}}  {probs[item]:.4f}")

    prior_q, _, _ = em_infer(params, Session("empty", []), iters=1)
    print("prior predictive (empty history):")
    show_probs(predict_mc(params, prior_q, r["mc_samples"], seed=[r["seed"], 0]))
    for idx, (name, history) in enumerate(sim.CASE_STUDY_SCENARIOS):
        session = Session(f"scenario-{idx}", history)
        q, _, trace = em_infer(params, session, iters=r["iters"])
        probs = predict_mc(params, q, r["mc_samples"], seed=[r["seed"], idx + 1])
        print(f"\nscenario: {name}")
        print(f"  history: {', '.join(labels[v] for v in history)}")
        print(f"  posterior mean: {np.array2string(q.mu, precision=3)}")
        print(f"  posterior variances: {np.array2string(q.variances(), precision=3)}")
        print(f"  trace of covariance: {q.trace():.4f}   bound: {trace[-1]:.4f}")
        print("  next-item probabilities:")
        show_probs(probs)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="sessionlvm",
        description="Latent-state session recommender: simulate, train, infer, "
        "predict and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    table = [
        ("simulate", "generate sessions from a ground-truth model", _SIMULATE_OPTS, _cmd_simulate),
        ("split", "partition a session file into train/test", _SPLIT_OPTS, _cmd_split),
        ("train", "learn embeddings and an encoder", _TRAIN_OPTS, _cmd_train),
        ("infer", "fixed-point posterior inference per session", _INFER_OPTS, _cmd_infer),
        ("predict", "next-item predictions per session", _PREDICT_OPTS, _cmd_predict),
        ("eval", "leave-last-out metrics over a test set", _EVAL_OPTS, _cmd_eval),
        ("case-study", "run the seven-product demo scenarios", _CASE_STUDY_OPTS, _cmd_case_study),
    ]
    for name, help_text, opts, fn in table:
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_opts(p, opts)
        p.set_defaults(func=fn)
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            _log("error: a subcommand is required")
            return 1
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except _UsageError as exc:
        _log(f"usage error: {exc}")
        return 1
    except SessionDataError as exc:
        _log(f"data error: {exc}")
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        _log(f"data error: {exc}")
        return 2
    except NumericError as exc:
        _log(f"numeric failure: {exc}")
        return 3
    except ValueError as exc:
        _log(f"usage error: {exc}")
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
