"""Command-line interface: ``latentgap experiment|estimate|dgp``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .core import LatentGapError, NonIdentifiedError, NuisanceEvaluationError, ObservedSample
from .dgp import ETA_SHAPES, VARIANTS, DgpConfig, generate
from .estimators import orthogonal_tau, plugin_tau
from .experiments import DEFAULT_REPS, DEFAULT_SEED, EXPERIMENT_IDS, run_experiment, to_json, write_result
from .nuisance import DEFAULT_LAMBDA

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NON_IDENTIFIED = 3
EXIT_NUMERIC = 4


class InputError(LatentGapError):
    pass


def default_seed() -> int:
    env = os.environ.get("LATENTGAP_SEED")
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise InputError(f"LATENTGAP_SEED must be an integer, got {env!r}") from None


def read_observed_csv(path) -> ObservedSample:
    """Parse a ``y,p,x1,...,xd`` file; errors name the offending row and column."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path} is empty")
        header = [h.strip() for h in header]
        if header[:2] != ["y", "p"] or len(header) < 3:
            raise InputError(f"{path}: header must start with y,p followed by x1..xd, got {','.join(header)}")
        x_cols = header[2:]
        expected = [f"x{j}" for j in range(1, len(x_cols) + 1)]
        if x_cols[: len(expected)] != expected:
            # extra columns (e.g. latent ones written by `dgp sample --with-latent`) are ignored
            x_cols = [c for c in header[2:] if c.startswith("x") and c[1:].isdigit()]
            if not x_cols:
                raise InputError(f"{path}: no covariate columns x1..xd in header")
        col_index = {name: header.index(name) for name in ["y", "p", *x_cols]}
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            vals = []
            for name, j in col_index.items():
                try:
                    v = float(rec[j])
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column {name}: not a number ({rec[j]!r})") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: row {lineno}, column {name}: non-finite value")
                vals.append(v)
            if not 0.0 <= vals[1] <= 1.0:
                raise InputError(f"{path}: row {lineno}, column p: {vals[1]!r} is outside [0, 1]")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return ObservedSample(y=arr[:, 0], p=arr[:, 1], x=arr[:, 2:])


def sensitivity_band(tau_hat: float, p, v_star_hat: float, delta: float) -> float:
    """|tau_hat| delta mean|2p - 1| / (2 V*_hat): worst-case bias under calibration error <= delta."""
    e_abs_z = float(np.mean(np.abs(2.0 * np.asarray(p) - 1.0)))
    return abs(tau_hat) * delta * e_abs_z / (2.0 * v_star_hat)


def estimate_report(sample: ObservedSample, method: str, folds: int, lam: float, seed: int,
                    alpha: float, deltas) -> dict:
    if method == "plugin":
        est = plugin_tau(sample, lam, alpha)
    elif method == "orthogonal":
        est = orthogonal_tau(sample, folds, lam, seed, alpha)
    else:
        raise InputError(f"method must be plugin or orthogonal, got {method!r}")
    report = est.to_dict()
    report.update({"lambda": lam, "folds": folds if method == "orthogonal" else None,
                   "seed": seed if method == "orthogonal" else None})
    report["sensitivity"] = []
    for d in deltas:
        if d < 0:
            raise InputError(f"--delta values must be >= 0, got {d}")
        band = sensitivity_band(est.tau_hat, sample.p, est.v_star_hat, d)
        report["sensitivity"].append({"delta": d, "band": band,
                                      "tau_low": est.tau_hat - band, "tau_high": est.tau_hat + band})
    return report


def write_sample_csv(sample, path: Path, with_latent: bool) -> None:
    obs = sample.observed
    header = ["y", "p"] + [f"x{j + 1}" for j in range(obs.d)]
    cols = [obs.y, obs.p] + [obs.x[:, j] for j in range(obs.d)]
    if with_latent:
        header += ["g", "true_m", "true_r"]
        cols += [sample.g, sample.true_m, sample.true_r]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


# -- commands ----------------------------------------------------------------


def cmd_experiment(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    result = run_experiment(args.id, reps=args.reps, seed=seed, workers=args.threads)
    try:
        paths = write_result(result, args.out, args.format)
    except OSError as exc:
        raise InputError(f"cannot write to {args.out}: {exc.strerror}") from None
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_estimate(args) -> int:
    sample = read_observed_csv(args.input)
    seed = args.seed if args.seed is not None else default_seed()
    report = estimate_report(sample, args.method, args.folds, args.lam, seed, args.alpha, args.delta or [])
    text = to_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dgp_sample(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    try:
        cfg = DgpConfig(n=args.n, tau0=args.tau, tau1=args.tau1, sigma_u=args.sigma_u,
                        noise_sd=args.noise_sd, eta_shape=args.eta_shape, delta=args.delta,
                        variant=args.variant)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    sample = generate(cfg, np.random.default_rng(seed))
    out = Path(args.out)
    try:
        write_sample_csv(sample, out, args.with_latent)
        sidecar = out.with_suffix(".json")
        sidecar.write_text(to_json({"config": cfg.to_dict(), "seed": seed, "with_latent": args.with_latent}))
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc.strerror}") from None
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentgap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("experiment", help="run one of the simulation studies")
    ex.add_argument("id", choices=EXPERIMENT_IDS)
    ex.add_argument("--reps", type=int, default=DEFAULT_REPS)
    ex.add_argument("--seed", type=int, default=None, help="master seed (default: $LATENTGAP_SEED)")
    ex.add_argument("--out", default="results")
    ex.add_argument("--format", choices=("csv", "json"), default="csv")
    ex.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
    ex.set_defaults(func=cmd_experiment)

    es = sub.add_parser("estimate", help="estimate tau on a y,p,x1..xd CSV file")
    es.add_argument("input")
    es.add_argument("--method", choices=("plugin", "orthogonal"), default="orthogonal")
    es.add_argument("--folds", type=int, default=5)
    es.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    es.add_argument("--delta", type=float, nargs="+", default=None,
                    help="calibration-error levels for the sensitivity band")
    es.add_argument("--alpha", type=float, default=0.05)
    es.add_argument("--seed", type=int, default=None, help="fold-assignment seed")
    es.add_argument("--out", default=None, help="write JSON here instead of stdout")
    es.set_defaults(func=cmd_estimate)

    dg = sub.add_parser("dgp", help="synthetic data")
    dsub = dg.add_subparsers(dest="dgp_command", required=True)
    sm = dsub.add_parser("sample", help="write a simulated y,p,x1..xd CSV")
    sm.add_argument("--n", type=int, default=1000)
    sm.add_argument("--seed", type=int, default=None)
    sm.add_argument("--variant", choices=VARIANTS, default="baseline")
    sm.add_argument("--sigma-u", type=float, default=0.30)
    sm.add_argument("--tau", type=float, default=1.0)
    sm.add_argument("--tau1", type=float, default=0.0)
    sm.add_argument("--noise-sd", type=float, default=1.0)
    sm.add_argument("--eta-shape", choices=ETA_SHAPES, default="none")
    sm.add_argument("--delta", type=float, default=0.0)
    sm.add_argument("--with-latent", action="store_true")
    sm.add_argument("--out", default="sample.csv")
    sm.set_defaults(func=cmd_dgp_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonIdentifiedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NON_IDENTIFIED
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NuisanceEvaluationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
