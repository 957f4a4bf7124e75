"""Command-line entry point: ``signed-balance <simulate|fit|census|permtest|experiment>``.

Exit status is 0 on success, 2 for usage errors (bad flags, missing files,
invalid values) and 1 when a computation fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .dataio import (
    EdgeFormatError,
    emit_outputs,
    load_fit_config,
    read_edge_file,
    read_json,
    read_strata,
    write_edge_csv,
    write_json,
)
from .estimation import (
    FitResult,
    WarmInit,
    default_one_step_size,
    fit_joint,
    fit_separate_edges,
    fit_separate_signs,
    one_step_joint,
)
from .experiments import SimConfig, load_sweep, make_ground_truth, run_experiment
from .graph import sign_permutation_test, triangle_census
from .model import ExplicitPolar, LatentParams, build_eta, build_theta, sample_network

logger = logging.getLogger("signed_balance")


class UsageError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {path}")
    return p


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signed-balance", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a signed network from a latent model")
    p.add_argument("model", type=_existing,
                   help="model JSON: fitted/true parameters, or a generator spec {k, alpha_offset, gamma_star}")
    p.add_argument("--n", type=_positive_int, help="network size (generator specs only)")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="fit the latent space model to an edge list")
    p.add_argument("edges", type=_existing, help="edge CSV (src,dst,sign)")
    p.add_argument("--config", type=_existing, help="FitConfig JSON")
    p.add_argument("--method", choices=("separate", "joint", "one-step"), default="joint")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--majority-years", action="store_true", help="input is src,dst,year,type")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("census", help="count signed triangles")
    p.add_argument("edges", type=_existing)
    p.add_argument("--majority-years", action="store_true")

    p = sub.add_parser("permtest", help="sign permutation test for balance")
    p.add_argument("edges", type=_existing)
    p.add_argument("--num-perms", type=_positive_int, default=1000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--strata", type=_existing, help="CSV src,dst,stratum")
    p.add_argument("--majority-years", action="store_true")

    p = sub.add_parser("experiment", help="run a simulation sweep")
    p.add_argument("sweep", type=_existing, help="JSON list of simulation configs")
    p.add_argument("--config", type=_existing, help="FitConfig JSON shared by all fits")
    p.add_argument("--out", required=True, help="output CSV")
    return parser


def _config(path, **overrides):
    try:
        return load_fit_config(path, **overrides)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid fit configuration: {exc}") from None


def _cmd_simulate(args) -> None:
    spec = read_json(args.model)
    if "Z" in spec or "params" in spec:
        truth = LatentParams.from_dict(spec.get("params", spec))
        if args.n is not None and args.n != truth.n:
            raise UsageError(f"--n {args.n} disagrees with the model's {truth.n} nodes")
    else:
        if args.n is None:
            raise UsageError("--n is required with a generator spec")
        try:
            cfg = SimConfig.from_dict({**spec, "n": args.n, "seed": args.seed, "reps": 1})
        except (ValueError, TypeError) as exc:
            raise UsageError(f"invalid generator spec: {exc}") from None
        truth = make_ground_truth(cfg)
    if truth.alpha is None or truth.Z is None or truth.polar is None:
        raise UsageError("model needs alpha, Z and a polar rule to simulate")
    A = sample_network(build_theta(truth.alpha, truth.Z), build_eta(truth), seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"params": truth.to_dict(), "seed": args.seed}, out / "model.json")
    write_edge_csv(A, out / "edges.csv")
    print(f"n={A.n} edges={A.num_edges} density={A.density():.4f} positive_fraction={A.positive_fraction():.4f}")


def _cmd_fit(args) -> None:
    data = read_edge_file(args.edges, args.majority_years)
    cfg = _config(args.config, k=args.k, lam=args.lam, seed=args.seed)
    A = data.adjacency()
    if A.n < 3 * cfg.k:
        raise UsageError(f"{A.n} nodes are too few for k={cfg.k}")
    edges = fit_separate_edges(A, cfg)
    signs = fit_separate_signs(A, cfg)
    separate = LatentParams(edges.params.alpha, edges.params.Z, signs.params.polar)
    traces = {"signs": signs, "edges": edges}
    if args.method == "separate":
        result: FitResult | LatentParams = separate
    elif args.method == "one-step":
        tau_z = default_one_step_size(separate.Z, separate.v, cfg.tau)
        Z_hat, v_bar, w, gamma = one_step_joint(A, separate.alpha, separate.Z, separate.v, cfg.lam, tau_z)
        result = LatentParams(separate.alpha, Z_hat, ExplicitPolar(v_bar))
    else:
        result = fit_joint(A, replace(cfg, init=WarmInit(separate)))
        traces["joint"] = result
    files = emit_outputs(result, args.out, labels=data.names,
                         extra={"method": args.method, "config": cfg.to_dict()}, traces=traces)
    print(" ".join(f"{k}={v}" for k, v in files.items()))


def _cmd_census(args) -> None:
    A = read_edge_file(args.edges, args.majority_years).adjacency()
    c = triangle_census(A)
    print(f"nodes={A.n} positive_edges={int((A.entries > 0).sum()) // 2} "
          f"negative_edges={int((A.entries < 0).sum()) // 2}")
    print(f"+++={c.count_ppp} +--={c.count_pmm} ++-={c.count_ppm} ---={c.count_mmm}")
    print(f"balanced={c.balanced} unbalanced={c.unbalanced} balanced_fraction={c.balanced_fraction:.6f}")


def _cmd_permtest(args) -> None:
    data = read_edge_file(args.edges, args.majority_years)
    A = data.adjacency()
    strata = read_strata(args.strata, data.labels) if args.strata else None
    res = sign_permutation_test(A, args.num_perms, strata=strata, seed=args.seed)
    print(f"observed_balanced_fraction={res.observed_stat:.6f} p_value={res.p_value:.6g} num_perms={args.num_perms}")


def _cmd_experiment(args) -> None:
    try:
        sweep = load_sweep(args.sweep)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid sweep file: {exc}") from None
    cfg = _config(args.config)
    table = run_experiment(sweep, cfg, progress=args.verbose)
    table.to_csv(args.out)
    failed = table.failures()
    print(f"rows={len(table.ok_rows())} failed={len(failed)} out={args.out}")
    for r in failed:
        print(f"failed: method={r['method']} n={r['n']} rep={r['rep']}: {r['error']}", file=sys.stderr)


COMMANDS = {"simulate": _cmd_simulate, "fit": _cmd_fit, "census": _cmd_census,
            "permtest": _cmd_permtest, "experiment": _cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, EdgeFormatError) as exc:
        print(f"signed-balance {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        print(f"signed-balance {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
