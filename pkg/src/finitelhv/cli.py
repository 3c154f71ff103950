"""Command-line interface.

Machine-readable results go to stdout, diagnostics to stderr.  Exit codes:
0 success, 1 verification failure, 2 usage error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .errors import ConditioningError, FiniteLHVError, InvalidInputError, NumericalError
from .geometry import antipodal_closure, gamma_profile, inscribed_radius, iterate_family
from .harness import ExperimentConfig, default_workers, load_polyhedron, round_log, run_experiment, \
    verify_against_quantum
from .localpolytope import BellCertificate, behavior_from_state, direction_representatives, \
    finite_model_for_noisy_state, local_membership
from .protocols import PROTOCOL_IDS, protocol2_visibility
from .quantum import DensityState, chsh_optimal_settings, werner_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, payload, csv_text: Optional[str] = None):
    if args.format == "csv" and csv_text is not None:
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")


def _default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _write_out(path: Optional[str], text: str):
    if path:
        Path(path).write_text(text)
        print(f"wrote {path}", file=sys.stderr)


def _csv(header, rows) -> str:
    return analysis._write(header, rows)


# ---------------------------------------------------------------------------
# poly

def _poly_info(P) -> dict:
    info = {"name": P.name, "D": P.D, "bits": math.log2(P.D), "antipodal_closed": P.antipodal_closed}
    try:
        info["inscribed_radius"] = inscribed_radius(P)
    except FiniteLHVError as exc:
        info["inscribed_radius"] = None
        print(f"warning: {exc}", file=sys.stderr)
    if P.antipodal_closed:
        prof = gamma_profile(P)
        info.update(gamma_min=prof.gamma_min, gamma_max=prof.gamma_max, regular=prof.is_regular,
                    alpha2=protocol2_visibility(P))
        if prof.is_regular:
            info["alpha1"] = 2 * prof.gamma_min * info["inscribed_radius"] / P.D
    return info


_INFO_COLUMNS = ("name", "D", "bits", "antipodal_closed", "inscribed_radius", "gamma_min", "gamma_max",
                 "regular", "alpha1", "alpha2")


def cmd_poly(args) -> int:
    if args.action == "info":
        P = load_polyhedron(args.source)
        if args.closure:
            P = antipodal_closure(P)
        info = _poly_info(P)
        _emit(args, info, _csv(_INFO_COLUMNS, [[info.get(k) for k in _INFO_COLUMNS]]))
    elif args.action == "export":
        P = load_polyhedron(args.source)
        if args.closure:
            P = antipodal_closure(P)
        text = json.dumps(P.to_json(), indent=2)
        if args.out:
            _write_out(args.out, text + "\n")
        else:
            sys.stdout.write(text + "\n")
    else:
        rows = []
        for k in range(int(args.source) + 1):
            rows.append(_poly_info(iterate_family(k, args.cap)))
        _emit(args, rows, _csv(_INFO_COLUMNS, [[r.get(k) for k in _INFO_COLUMNS] for r in rows]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / verify

def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        data = json.loads(Path(args.config).read_text())
        for key in ("seed", "workers"):
            if getattr(args, key) is not None:
                data[key] = getattr(args, key)
        if args.exact_rational:
            data["exact_lp"] = True
        return ExperimentConfig.from_json(data)
    if args.protocol is None:
        raise InvalidInputError("give --protocol or a config file")
    settings = args.settings
    if settings is None:
        settings = 10
    elif settings != "chsh":
        try:
            settings = int(settings)
        except ValueError:
            settings = json.loads(Path(settings).read_text())
    return ExperimentConfig(
        protocol=args.protocol, polyhedron=args.poly, alpha=args.alpha, theta=args.theta, n=args.n,
        settings=settings, rounds=args.rounds, seed=args.seed or 0, workers=args.workers,
        sigma=args.sigma, state=args.state, exact_lp=args.exact_rational, output=args.out)


def _run(args, fn) -> int:
    config = _config_from_args(args)
    report = fn(config)
    if args.log:
        _write_out(args.log, round_log(config, rounds=args.log_rounds))
    if args.format == "csv":
        sys.stdout.write(report.to_csv())
    else:
        sys.stdout.write(report.dumps() + "\n")
    if report.passed is None:
        print("standard errors undefined (N = 1): no verdict", file=sys.stderr)
        return EXIT_OK
    print(f"{'PASS' if report.passed else 'FAIL'}: max |z| = {report.max_abs_z:.3f} "
          f"(threshold {config.sigma})", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_simulate(args) -> int:
    return _run(args, run_experiment)


def cmd_verify(args) -> int:
    return _run(args, verify_against_quantum)


# ---------------------------------------------------------------------------
# table1 / curves / bound

def cmd_table1(args) -> int:
    rows = analysis.table1()
    payload = [{"solid": r.solid, "D": r.D, "bits": r.bits, "alpha": r.alpha, "verdict": r.verdict} for r in rows]
    _emit(args, payload, analysis.table1_csv(rows))
    return EXIT_OK


def cmd_curve(args) -> int:
    if args.which == "fig1":
        points = analysis.fig1_curve(args.max_iter, args.cap)
        anchor = analysis.fig1_anchor()
        text = analysis.fig1_csv(points + [anchor])
        payload = {"points": [p.__dict__ for p in points], "separable_anchor": anchor.__dict__,
                   "asymptote": analysis.FIG1_ASYMPTOTE}
    else:
        P = load_polyhedron(args.poly)
        ns = range(1, args.n_max + 1)
        points = analysis.fig2_curve(P, ns)
        limit = analysis.fig2_limit_curve(ns)
        text = analysis.fig2_csv(points + limit)
        payload = {"points": [p.__dict__ for p in points], "large_D_limit": [p.__dict__ for p in limit]}
    if args.out:
        _write_out(args.out, text)
    _emit(args, payload, text)
    if args.plot_script:
        _write_out(args.plot_script, analysis.gnuplot_script())
    return EXIT_OK


def cmd_bound(args) -> int:
    if args.vertices:
        V = np.asarray(json.loads(Path(args.vertices).read_text())["vertices"], dtype=float)
        label = args.vertices
    else:
        V = load_polyhedron(args.solid).vertices
        label = args.solid
    value = analysis.lhs_two_bit_bound(V, level=args.level)
    payload = {"solid": label, "bound": value, "closed_form": analysis.lhs_two_bit_bound_closed_form(V)}
    _emit(args, payload, _csv(("solid", "bound", "closed_form"), [[label, value, payload["closed_form"]]]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# lp

def _state_from_args(args) -> DensityState:
    if args.state:
        return DensityState.from_json(json.loads(Path(args.state).read_text()))
    return werner_state(args.werner)


def cmd_lp(args) -> int:
    rho = _state_from_args(args)
    if args.action == "membership":
        if args.settings == "chsh":
            a1, a2, b1, b2 = chsh_optimal_settings()
            SA, SB = [a1, a2], [b1, b2]
        else:
            dirs, _, _ = direction_representatives(load_polyhedron(args.settings))
            SA = SB = list(dirs)
        result = local_membership(behavior_from_state(rho, SA, SB), exact=args.exact_rational)
        payload = {"feasible": result.feasible}
        if isinstance(result, BellCertificate):
            payload["certificate"] = result.to_json()
            print(f"nonlocal: margin {result.margin:.9f}", file=sys.stderr)
        else:
            payload["model"] = result.to_json()
            print(f"local: {result.support_size} strategies, {result.bits:.4f} bits", file=sys.stderr)
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")
    else:
        P = load_polyhedron(args.poly)
        model = finite_model_for_noisy_state(rho, args.eta, P, exact=args.exact_rational)
        payload = {"polyhedron": P.name, "eta": args.eta, "bits": model.bits,
                   "directions": model.directions.tolist(), "model": model.model.to_json()}
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=_default) + "\n")
        print(f"finite model with {model.model.support_size} strategies ({model.bits:.4f} bits)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _global_flags(top: bool) -> argparse.ArgumentParser:
    # Subcommand copies must not reset values given before the subcommand.
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=d(None), help="master seed (default 0)")
    common.add_argument("--workers", type=int, default=d(None),
                        help="worker processes (default $FINITELHV_WORKERS or 1)")
    common.add_argument("--format", choices=("json", "csv"), default=d("json"))
    common.add_argument("--exact-rational", action="store_true", default=d(False),
                        help="certify LP answers in rational arithmetic")
    common.add_argument("--plot-script", default=d(None), help="also write a gnuplot script to this path")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="finitelhv", description="Finite shared-randomness simulations of quantum correlations.",
                     parents=[_global_flags(True)])
    common = _global_flags(False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("poly", parents=[common], help="polyhedron utilities")
    p.add_argument("action", choices=("info", "export", "iterate"))
    p.add_argument("source", help="solid name, familyK, JSON file, or (iterate) the number of iterations")
    p.add_argument("--closure", action="store_true", help="add antipodes first")
    p.add_argument("--cap", type=int, default=10_000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_poly)

    for name, func, helptext in (("simulate", cmd_simulate, "sample a protocol, compare with closed forms"),
                                 ("verify", cmd_verify, "sample a protocol, compare with Born statistics")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("config", nargs="?", help="ExperimentConfig JSON file")
        s.add_argument("--protocol", choices=PROTOCOL_IDS)
        s.add_argument("--poly", default="icosahedron")
        s.add_argument("--alpha", type=float, default=0.6, help="Werner visibility for the full-rank model")
        s.add_argument("--theta", type=float, default=math.pi / 6)
        s.add_argument("--n", type=int, default=2)
        s.add_argument("--settings", default=None, help="'chsh', a count of random pairs, or a JSON file")
        s.add_argument("--rounds", type=int, default=10 ** 6)
        s.add_argument("--sigma", type=float, default=5.0)
        s.add_argument("--state", default=None, help="DensityState JSON for the full-rank model")
        s.add_argument("--out", default=None, help="write the report JSON here")
        s.add_argument("--log", default=None, help="write a round log CSV here")
        s.add_argument("--log-rounds", type=int, default=1000)
        s.set_defaults(func=func)

    t = sub.add_parser("table1", parents=[common], help="Platonic solid visibilities")
    t.set_defaults(func=cmd_table1)

    c = sub.add_parser("curve", parents=[common], help="figure data")
    c.add_argument("which", choices=("fig1", "fig2"))
    c.add_argument("--max-iter", type=int, default=4)
    c.add_argument("--cap", type=int, default=10_000)
    c.add_argument("--poly", default="icosahedron")
    c.add_argument("--n-max", type=int, default=10)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_curve)

    b = sub.add_parser("bound", parents=[common], help="two-bit LHS bound")
    b.add_argument("which", choices=("app-b",))
    b.add_argument("--solid", default="tetrahedron")
    b.add_argument("--vertices", default=None, help="JSON file with four vertices")
    b.add_argument("--level", type=int, default=6)
    b.set_defaults(func=cmd_bound)

    lp = sub.add_parser("lp", parents=[common], help="local polytope")
    lp.add_argument("action", choices=("membership", "extract"))
    lp.add_argument("--werner", type=float, default=1.0)
    lp.add_argument("--state", default=None)
    lp.add_argument("--settings", default="chsh", help="'chsh' or a polyhedron (one direction per antipodal pair)")
    lp.add_argument("--eta", type=float, default=0.79)
    lp.add_argument("--poly", default="icosahedron")
    lp.set_defaults(func=cmd_lp)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.workers is None:
            default_workers()  # validates the environment variable
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ConditioningError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FiniteLHVError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
