"""Command line entry point: ``robust-sinkhorn <subcommand> [flags]``.

Every subcommand writes a deterministic ``results.json`` (sorted keys, the
resolved configuration, no timings) into the output directory.  The output
directory is ``--out``, else ``$ROBUST_SINKHORN_OUT``, else the working
directory.  ``--config FILE`` reads ``key = value`` lines named like the long
flags; flags given on the command line win.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import cpd, experiments, sinkhorn_dual
from .detector import DetectorModel, decide_batch
from .distributions import DataError, load_csv, make_rng
from .generating import Family
from .lfd import LFDPair, LFDProblem, SolverConfig, discretize, solve_lfd

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "ROBUST_SINKHORN_OUT"
FAMILIES = [f.value for f in Family]
# keys that describe where things go rather than what is computed
_UNRECORDED = {"out", "config", "jobs", "command", "func"}


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}")
    return [int(v) for v in vals]


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", choices=FAMILIES, default="quad")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory (or model path for fit)")
    common.add_argument("--config", default=None, help="key = value file mirroring the flags")
    common.add_argument("--jobs", type=int, default=_default_jobs())

    lfd_opts = argparse.ArgumentParser(add_help=False)
    lfd_opts.add_argument("--epsilon", type=float, default=0.1)
    lfd_opts.add_argument("--m", type=int, default=100)
    lfd_opts.add_argument("--K", type=int, default=5)
    lfd_opts.add_argument("--max-iters", type=int, default=2000)
    lfd_opts.add_argument("--gap-tol", type=float, default=1e-6)

    parser = argparse.ArgumentParser(prog="robust-sinkhorn",
                                     description="Robust hypothesis testing with Sinkhorn ambiguity sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, lfd_opts], help="fit LFDs and a detector model")
    p.add_argument("--h0", required=True)
    p.add_argument("--h1", required=True)
    p.add_argument("--rho-bar0", type=float, default=0.03)
    p.add_argument("--rho-bar1", type=float, default=0.03)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", parents=[common], help="score test points with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--batch-size", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("dro-eval", parents=[common], help="worst-case expectation over a Sinkhorn ball")
    p.add_argument("--input", required=True, help="CSV of nominal points")
    p.add_argument("--function", choices=["mean", "indicator"], default="mean")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--rho-bar", type=float, default=0.05)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--samples", type=int, default=0, help="also emit this many worst-case draws")
    p.set_defaults(func=cmd_dro_eval)

    p = sub.add_parser("lfd-dump", parents=[common, lfd_opts], help="write LFDs as plot-ready TSV")
    p.add_argument("--model", default=None)
    p.add_argument("--h0", default=None)
    p.add_argument("--h1", default=None)
    p.add_argument("--rho-bar0", type=float, default=0.03)
    p.add_argument("--rho-bar1", type=float, default=0.03)
    p.set_defaults(func=cmd_lfd_dump)

    p = sub.add_parser("cpd", parents=[common], help="offline change-point detection")
    p.add_argument("--case", type=int, choices=[1, 2, 3, 4], default=1)
    p.add_argument("--input", default=None, help="CSV series to scan instead of synthetic data")
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--change-at", type=int, default=100)
    p.add_argument("--window", type=int, default=cpd.ScanConfig.window)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--fa-trials", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=cpd.ScanConfig.epsilon)
    p.add_argument("--rho-bar", type=float, default=cpd.ScanConfig.rho_bar)
    p.add_argument("--m", type=int, default=cpd.ScanConfig.m)
    p.add_argument("--K", type=int, default=cpd.ScanConfig.k)
    p.add_argument("--max-iters", type=int, default=cpd.ScanConfig.max_iters)
    p.add_argument("--gap-tol", type=float, default=cpd.ScanConfig.gap_tol)
    p.add_argument("--score-window", action="store_true")
    p.add_argument("--tune-seed", type=int, default=None,
                   help="pick --epsilon/--rho-bar by cross validation on pilot windows drawn with this seed")
    p.set_defaults(func=cmd_cpd)

    p = sub.add_parser("bench-hdgm", parents=[common], help="Gaussian-mixture composite testing")
    p.add_argument("--ns", type=_int_list, default="1 2 3 4 5 6 7 8 9 10")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=experiments.FitConfig.epsilon)
    p.add_argument("--rho-bar", type=float, default=experiments.FitConfig.rho_bar)
    p.add_argument("--m", type=int, default=experiments.FitConfig.m)
    p.add_argument("--K", type=int, default=experiments.FitConfig.k)
    p.set_defaults(func=cmd_bench_hdgm)

    p = sub.add_parser("bench-mnist", parents=[common], help="MNIST batch classification")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--digits", type=_int_list, default="1 2")
    p.add_argument("--n-train", type=int, default=5)
    p.add_argument("--batch-sizes", type=_int_list, default="1 2 3 4 5 6 7 8 9 10")
    p.add_argument("--batches", type=int, default=1000)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--rho-bar", type=float, default=0.03)
    p.add_argument("--m", type=int, default=experiments.FitConfig.m)
    p.add_argument("--K", type=int, default=experiments.FitConfig.k)
    p.set_defaults(func=cmd_bench_mnist)

    p = sub.add_parser("toy-lfd", parents=[common], help="two-sample toy LFDs at several epsilons")
    p.add_argument("--epsilons", type=_float_list, default="0.01 0.1 1")
    p.add_argument("--rho-bar", type=float, default=0.03)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_toy_lfd)

    p = sub.add_parser("cv", parents=[common], help="choose rho_bar and epsilon by validation risk")
    p.add_argument("--h0", required=True)
    p.add_argument("--h1", required=True)
    p.add_argument("--rho-bars", type=_float_list, default="0 0.01 0.03 0.1 0.3")
    p.add_argument("--epsilons", type=_float_list, default="0.01 0.1 1 10")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--m", type=int, default=experiments.FitConfig.m)
    p.add_argument("--K", type=int, default=experiments.FitConfig.k)
    p.set_defaults(func=cmd_cv)
    return parser


def read_config_file(path) -> dict:
    """``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _config_path(argv) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    path = _config_path(argv)
    if path is not None:
        try:
            values = read_config_file(path)
        except OSError as exc:
            raise DataError(f"cannot read config file {path}: {exc}") from exc
        args = parser.parse_args(argv)  # validates argv and tells us the subcommand
        sub = _subparser(parser, args.command)
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise UsageError(f"unknown keys in {path}: {', '.join(unknown)}")
        # string defaults go through each flag's type conversion; flags still win
        for key, value in values.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes", "on")
            elif action.choices is not None and action.type is int:
                value = int(value)
            sub.set_defaults(**{key: value})
        return parser.parse_args(argv)
    return parser.parse_args(argv)


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)  # pragma: no cover


# --------------------------------------------------------------------- helpers


def resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _UNRECORDED}
    cfg["command"] = args.command
    return cfg


def output_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "."
    path = Path(out)
    if path.suffix == ".json":
        path = path.parent
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Family):
        return obj.value
    return obj


def dumps(payload) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=1) + "\n"


def write_results(args, payload: dict) -> Path:
    path = output_dir(args) / "results.json"
    payload = {**payload, "config": resolved_config(args)}
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def _require(cond: bool, message: str):
    if not cond:
        raise UsageError(message)


def _check_common(args):
    for name in ("epsilon",):
        if hasattr(args, name):
            _require(getattr(args, name) > 0, f"--{name} must be positive")
    for name in ("rho_bar", "rho_bar0", "rho_bar1"):
        if hasattr(args, name):
            _require(getattr(args, name) >= 0, f"--{name.replace('_', '-')} must be nonnegative")
    if hasattr(args, "epsilons"):
        _require(len(args.epsilons) > 0 and min(args.epsilons) > 0, "--epsilons must be positive")
    if hasattr(args, "rho_bars"):
        _require(len(args.rho_bars) > 0 and min(args.rho_bars) >= 0, "--rho-bars must be nonnegative")
    for name in ("m", "K", "trials", "max_iters", "batch_size", "n_test", "n_train", "batches"):
        if hasattr(args, name) and getattr(args, name) is not None:
            _require(getattr(args, name) >= 1, f"--{name.replace('_', '-')} must be at least 1")
    _require(args.jobs >= 1, "--jobs must be at least 1")


def _finite(*values):
    for v in values:
        if not np.all(np.isfinite(np.asarray(v, dtype=float))):
            raise NumericFailure("computation produced non-finite values")


def _solver(args) -> SolverConfig:
    return SolverConfig(max_iters=args.max_iters, gap_tol=args.gap_tol)


def _fit_pair(args) -> LFDPair:
    _require(args.h0 is not None and args.h1 is not None, "--h0 and --h1 are required")
    s0, s1 = load_csv(args.h0), load_csv(args.h1)
    _require(len(s0) == len(s1), "--h0 and --h1 must hold the same number of samples")
    _require(s0.dim == s1.dim, "--h0 and --h1 differ in dimension")
    problem = LFDProblem(s0, s1, args.epsilon, (args.rho_bar0, args.rho_bar1),
                         args.family, args.m, args.seed)
    lfd = solve_lfd(discretize(problem), problem.family, _solver(args))
    _finite(lfd.p0, lfd.p1, lfd.tstar, lfd.objective)
    return lfd


def _diagnostics(lfd: LFDPair) -> dict:
    return {"objective": lfd.objective, "entropy": list(lfd.entropy), "budget": list(lfd.budget),
            "iterations": lfd.iterations, "gap": lfd.gap, "converged": lfd.converged,
            "n_atoms": int(lfd.atoms.shape[0])}


# -------------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    lfd = _fit_pair(args)
    _require(args.K <= lfd.atoms.shape[0], "--K exceeds the number of support atoms")
    model = DetectorModel.from_lfd(lfd, args.K)
    out = output_dir(args)
    model_path = Path(args.out) if args.out and Path(args.out).suffix == ".json" else out / "model.json"
    model.save(model_path, resolved_config(args))
    write_results(args, {"model": model_path.name, "diagnostics": _diagnostics(lfd)})
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        model = DetectorModel.load(args.model)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot load model {args.model}: {exc}") from exc
    pts = load_csv(args.input).points
    _require(pts.shape[1] == model.dim, f"--input has dimension {pts.shape[1]}, model expects {model.dim}")
    b = args.batch_size
    rows = []
    for j, start in enumerate(range(0, pts.shape[0], b)):
        d = decide_batch(model, pts[start:start + b])
        rows.append({"batch_index": j, "score": d.score, "verdict": d.verdict})
    _finite([r["score"] for r in rows])
    for row in rows:
        sys.stdout.write(json.dumps(row, sort_keys=True) + "\n")
    write_results(args, {"decisions": rows})
    return EXIT_OK


def cmd_dro_eval(args) -> int:
    nominal = load_csv(args.input)
    f = sinkhorn_dual.f_mean if args.function == "mean" else sinkhorn_dual.f_indicator(args.threshold)
    problem = sinkhorn_dual.DroProblem.from_function(
        nominal, f, args.epsilon, args.rho_bar, args.m, make_rng(args.seed, 0))
    sol = sinkhorn_dual.worst_case_value(problem)
    _finite(sol.value)
    payload = {"value": sol.value, "lambda_star": sol.lambda_star, "bounded": sol.bounded,
               "smoothed_mean": problem.smoothed_mean}
    if args.samples:
        out = output_dir(args)
        if sol.bounded:
            dist = sinkhorn_dual.worst_case_sample(problem, sol.lambda_star, make_rng(args.seed, 1),
                                                   args.samples)
            pts = dist.atoms
        else:
            idx = make_rng(args.seed, 1).integers(0, problem.draws.shape[0] * problem.draws.shape[1],
                                                  size=args.samples)
            pts = problem.draws.reshape(-1, problem.draws.shape[-1])[idx]
        lines = ["\t".join(repr(float(v)) for v in row) for row in pts]
        (out / "worst_case_samples.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        payload["samples_file"] = "worst_case_samples.tsv"
    write_results(args, payload)
    return EXIT_OK


def cmd_lfd_dump(args) -> int:
    out = output_dir(args)
    if args.model is not None:
        try:
            data = json.loads(Path(args.model).read_text(encoding="utf-8"))
            atoms = np.array(data["atoms"], dtype=float)
            cols = [np.array(data[k], dtype=float) for k in ("p0", "p1", "r", "Tstar")]
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot load model {args.model}: {exc}") from exc
        except KeyError as exc:
            raise DataError(f"model {args.model} lacks LFD masses ({exc})") from exc
        diagnostics = data.get("diagnostics", {})
        text = _tsv(atoms, *cols)
    else:
        lfd = _fit_pair(args)
        diagnostics = _diagnostics(lfd)
        text = experiments.lfd_tsv(lfd)
    (out / "lfd.tsv").write_text(text, encoding="utf-8")
    write_results(args, {"tsv": "lfd.tsv", "diagnostics": diagnostics})
    return EXIT_OK


def _tsv(atoms, p0, p1, r, t):
    head = [f"x{j}" for j in range(atoms.shape[1])] + ["p0", "p1", "r", "Tstar"]
    cols = np.column_stack([atoms, p0, p1, r, t])
    return "\n".join(["\t".join(head)] + ["\t".join(repr(float(v)) for v in row) for row in cols]) + "\n"


def cmd_cpd(args) -> int:
    config = cpd.ScanConfig(window=args.window, epsilon=args.epsilon, rho_bar=args.rho_bar,
                            m=args.m, family=args.family, k=args.K, max_iters=args.max_iters,
                            gap_tol=args.gap_tol, score_window=args.score_window)
    _require(0 < args.alpha <= 1, "--alpha must lie in (0, 1]")
    _require(args.horizon >= 2 * args.window, "--horizon must hold two windows")
    tuning = None
    if args.tune_seed is not None:
        config, tuning = experiments.tune_scan_config(args.case, config, seed=args.tune_seed)
    series = None
    if args.input is not None:
        series = load_csv(args.input).points
        _require(series.shape[0] >= 2 * args.window, "--input series is shorter than two windows")
    else:
        _require(0 <= args.change_at < args.horizon, "--change-at must lie in [0, horizon)")
    result = cpd.run_cpd(args.case, config, T=args.horizon, K=args.change_at, alpha=args.alpha,
                         trials=args.trials, fa_trials=args.fa_trials, seed=args.seed,
                         jobs=args.jobs, series=series)
    _finite(result.threshold)
    payload = result.to_dict()
    payload.pop("config", None)
    if tuning is not None:
        payload["tuned"] = {"epsilon": config.epsilon, "rho_bar": config.rho_bar, "table": tuning}
    write_results(args, payload)
    return EXIT_OK


def _fit_config(args, epsilon, rho_bar):
    return experiments.FitConfig(epsilon=epsilon, rho_bar=rho_bar, m=args.m,
                                 family=args.family, k=args.K)


def _risk_tsv(path: Path, key: str, table: dict):
    rows = [f"{key}\tmean_risk"] + [f"{k}\t{v['mean_risk']!r}" for k, v in sorted(table.items())]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def cmd_bench_hdgm(args) -> int:
    _require(args.dim >= 2 and args.dim % 2 == 0, "--dim must be even")
    res = experiments.run_hdgm(args.ns, args.trials, args.n_test,
                               _fit_config(args, args.epsilon, args.rho_bar), args.seed, args.dim)
    _risk_tsv(output_dir(args) / "hdgm_risk.tsv", "n", res["risk"])
    write_results(args, {"risk": res["risk"], "tsv": "hdgm_risk.tsv"})
    return EXIT_OK


def cmd_bench_mnist(args) -> int:
    _require(len(args.digits) == 2, "--digits takes two digits")
    res = experiments.run_mnist(args.images, args.labels, tuple(args.digits), args.n_train,
                                args.batch_sizes, args.batches, args.trials,
                                _fit_config(args, args.epsilon, args.rho_bar), args.seed)
    _risk_tsv(output_dir(args) / "mnist_risk.tsv", "batch_size", res["risk"])
    write_results(args, {"risk": res["risk"], "tsv": "mnist_risk.tsv"})
    return EXIT_OK


def cmd_toy_lfd(args) -> int:
    out = output_dir(args)
    results = experiments.run_toy_lfd(args.epsilons, args.rho_bar, args.m, args.seed,
                                      args.family, _solver(args))
    files, spread = [], {}
    for res in results:
        name = f"toy_lfd_eps{res.epsilon:g}.tsv"
        (out / name).write_text(experiments.lfd_tsv(res.lfd), encoding="utf-8")
        files.append(name)
        spread[f"{res.epsilon:g}"] = {
            "std_p0": _spread(res.lfd.atoms, res.lfd.p0),
            "std_p1": _spread(res.lfd.atoms, res.lfd.p1),
            "diagnostics": _diagnostics(res.lfd),
        }
    write_results(args, {"tsv": files, "lfd": spread})
    return EXIT_OK


def _spread(atoms, p) -> float:
    from .distributions import DiscreteDistribution

    return DiscreteDistribution(atoms, p / np.sum(p)).std()


def cmd_cv(args) -> int:
    _require(0 < args.split < 1, "--split must lie in (0, 1)")
    s0, s1 = load_csv(args.h0), load_csv(args.h1)
    _require(min(len(s0), len(s1)) >= 2, "cross validation needs at least two samples per class")
    grid = experiments.CvGrid(tuple(args.rho_bars), tuple(args.epsilons), args.split, args.seed)
    best = experiments.cross_validate(s0, s1, grid, _fit_config(args, 0.1, 0.0))
    write_results(args, {"rho_bar": best.rho_bar, "epsilon": best.epsilon, "risk": best.risk,
                         "table": best.table})
    return EXIT_OK


# ------------------------------------------------------------------------ main


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        _check_common(args)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
