"""Command-line entry point.

Every command writes JSON (sorted keys, 17 significant digits) or CSV (first
line ``# schema=1``) to stdout or ``--output``. Exit codes: 0 success,
2 invalid input, 3 design point outside the covered region, 4 solver failure.
Errors are reported as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import closed_form, design, equilibrium, model, regions, sos, two_node
from .qp import QPError
from .sdp import NumericalFailure

EXIT_OK, EXIT_INVALID, EXIT_REGION, EXIT_SOLVER = 0, 2, 3, 4
CSV_SCHEMA = "# schema=1"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def bundled_path(name: str) -> Path:
    """Path of a bundled data file; the .json suffix is optional."""
    fname = name if name.endswith(".json") else name + ".json"
    path = Path(str(resources.files("netcournot") / "data" / fname))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return path


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.exists() else bundled_path(path)


def _read_json(path: str, parse_float=float) -> dict:
    p = _resolve(path)
    try:
        return json.loads(p.read_text(), parse_float=parse_float)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INVALID, "InvalidJSON", f"{p}: {exc.msg}", path=str(p),
                       line=exc.lineno, column=exc.colno, position=exc.pos) from None


# --- serialization ------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return float(obj)
    if isinstance(obj, model.DesignParams):
        return [float(v) for v in obj.as_tuple()]
    return obj


def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    s = format(v, ".17g")
    if "e" not in s and "." not in s and "inf" not in s:
        s += ".0"
    return s


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits, NaN as null."""
    obj = _plain(obj)

    def enc(o, ind):
        pad = "  " * (ind + 1)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(o[k], ind + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(enc(v, ind) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, ind + 1) for v in o) + "\n" + "  " * ind + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return _fmt_float(o)
        return json.dumps(o)

    return enc(obj, 0) + "\n"


def csv_text(header: list, rows, comments=()) -> str:
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt_float(float(v)) if isinstance(v, (float, np.floating, Fraction)) else v for v in row])
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# --- argument helpers ---------------------------------------------------------


def parse_theta(text: str) -> model.DesignParams:
    """A preset name (sw, cs, rsw, ms) or three comma-separated numbers."""
    if "," not in text:
        return model.theta_preset(text)
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"theta needs three components, got {len(parts)}")
    try:
        vals = [Fraction(p) for p in parts]
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"could not parse theta {text!r}") from None
    return model.DesignParams(*vals)


def _load_game(args) -> model.GameInstance:
    return model.game_from_dict(_read_json(args.game, parse_float=Fraction), exact=True)


def _theta_eps(game, args) -> design.ThetaEps:
    return design.ThetaEps.for_game(game, Fraction(args.epsilon))


# --- commands -----------------------------------------------------------------


def cmd_solve(args):
    game = _load_game(args)
    opts = equilibrium.SolveOptions(kkt_tolerance=args.kkt_tolerance)
    res = equilibrium.solve_potential(game, parse_theta(args.theta), opts)
    _emit(args, dumps(res.to_dict()))


def cmd_classify(args):
    game = _load_game(args)
    rep = regions.classify(game, parse_theta(args.theta))
    _emit(args, dumps(rep.to_dict()))


def cmd_region_map(args):
    rows = regions.region_map(_load_game(args), args.resolution)
    if args.format == "json":
        _emit(args, dumps(rows))
        return
    header = list(rows[0])
    _emit(args, csv_text(header, ([r[h] for h in header] for r in rows)))


def cmd_compare(args):
    inst = closed_form.instance_from_dict(_read_json(args.instance), exact=True)
    rec = closed_form.welfare_comparison(inst, parse_theta(args.theta))
    if args.format == "csv":
        keys = sorted(rec)
        _emit(args, csv_text(keys, [[rec[k] for k in keys]]))
    else:
        _emit(args, dumps(rec))


def cmd_two_node(args):
    params = two_node.TwoNodeParams.from_dict(_read_json(args.params))
    theta = parse_theta(args.theta)
    rs = two_node.r_set(params, theta)
    eqs = two_node.analytic_equilibria(params, theta, interval_samples=args.interval_samples)
    out = {
        "r_set": rs.to_dict(),
        "regime": rs.regime,
        "regime_description": two_node.REGIMES.get(rs.regime, ""),
        "equilibria": [{"q1": q1, "q2": q2, "r": r} for q1, q2, r in eqs],
    }
    _emit(args, dumps(out))


def cmd_two_node_sweep(args):
    params = two_node.TwoNodeParams.from_dict(_read_json(args.params))
    rows = two_node.sweep(params, args.resolution)
    header = ["theta_c", "theta_p", "theta_m", "regime", "cardinality"]
    if args.format == "json":
        _emit(args, dumps(rows))
    else:
        _emit(args, csv_text(header, ([r[h] for h in header] for r in rows)))


def _parse_vector(text, n, what):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != n:
        raise ValueError(f"{what} needs {n} components, got {len(vals)}")
    return np.array(vals)


def cmd_dynamics(args):
    game = _load_game(args)
    theta = parse_theta(args.theta)
    init = model.zero_allocation(game)
    if args.init_q:
        init = model.Allocation(_parse_vector(args.init_q, game.n_firms, "--init-q"), init.r)
    if args.init_r:
        init = model.Allocation(init.q, _parse_vector(args.init_r, game.n_markets, "--init-r"))
    model.validate_allocation(game, init)
    res = equilibrium.best_response_dynamics(game, theta, init, max_rounds=args.max_rounds)
    if args.format == "json":
        _emit(args, dumps({
            "verdict": res.verdict,
            "rounds": res.rounds,
            "trajectory": [model.allocation_to_dict(a) for a in res.trajectory],
            "potentials": res.potentials,
            "cycle": [model.allocation_to_dict(a) for a in res.cycle],
        }))
        return
    header = ["round"] + [f"q{f}" for f in range(game.n_firms)] + [f"r{m}" for m in range(game.n_markets)] + ["potential"]
    rows = (
        [k, *a.q.tolist(), *a.r.tolist(), p]
        for k, (a, p) in enumerate(zip(res.trajectory, res.potentials))
    )
    _emit(args, csv_text(header, rows, comments=[f"verdict={res.verdict}", f"rounds={res.rounds}"]))


def cmd_design(args):
    game = _load_game(args)
    g = design.objective_by_name(game, args.objective)
    te = _theta_eps(game, args)
    res = design.grid_search(game, g, te, resolution=args.resolution, threads=args.threads)
    header = ["theta_c", "theta_p", "theta_m", "g"]
    if args.sweep_csv:
        Path(args.sweep_csv).write_text(csv_text(header, res.rows()))
    if args.format == "csv":
        _emit(args, csv_text(header, res.rows()))
        return
    _emit(args, dumps({
        "theta_max": res.theta_max,
        "g_value": res.g_value,
        "equilibrium": res.equilibrium.to_dict(),
        "resolution": res.resolution,
        "n_feasible": res.n_feasible,
        "baseline_sw": res.baseline_sw,
        "epsilon": float(te.epsilon),
        "gamma": float(te.gamma),
    }))


def cmd_mpec_dump(args):
    game = _load_game(args)
    pp = design.build_mpec(game, design.objective_by_name(game, args.objective), _theta_eps(game, args))
    _emit(args, dumps(pp.to_dict()))


def cmd_sos_bound(args):
    game = _load_game(args)
    pp = design.build_mpec(game, design.objective_by_name(game, args.objective), _theta_eps(game, args))
    sdp = sos.sos_relaxation(pp, args.level, allow_high_level=args.allow_high_level)
    if args.dump_sdp:
        Path(args.dump_sdp).write_text(sdp.triplets())
    try:
        cert = sos.sdp_solve(sdp, tol=args.tol, max_iter=args.max_iter)
    except sos.NotConverged as exc:
        c = exc.certificate
        raise CliError(EXIT_SOLVER, "NotConverged", str(exc), best_bound=c.v_d, gap=c.gap,
                       residual=c.residual) from None
    out = cert.to_dict()
    out["check"] = sos.check_certificate(pp, cert)
    _emit(args, dumps(out))


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcournot", description="Networked Cournot equilibria and market-maker design.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, game=True, theta=False, fmt=None):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=fn)
        sp.add_argument("--output", help="write here instead of stdout")
        if game:
            sp.add_argument("--game", default="two_node", help="game JSON file or bundled name (default two_node)")
        if theta:
            sp.add_argument("--theta", default="sw", help="preset (sw, cs, rsw, ms) or a,b,c")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv"), default=fmt)
        return sp

    sp = add("solve", cmd_solve, "equilibrium via the potential program", theta=True)
    sp.add_argument("--kkt-tolerance", type=float, default=1e-9)
    add("classify", cmd_classify, "region flags for one design point", theta=True)
    sp = add("region-map", cmd_region_map, "region flags over the design simplex", fmt="csv")
    sp.add_argument("--resolution", type=int, default=100)
    sp = add("compare", cmd_compare, "closed-form welfare comparison", game=False, theta=True, fmt="json")
    sp.add_argument("--instance", default="homogeneous3", help="instance JSON or bundled name")
    for name, fn, help_text in (
        ("two-node", cmd_two_node, "equilibrium set of the two-node game"),
        ("two-node-sweep", cmd_two_node_sweep, "equilibrium-set cardinality over the design simplex"),
    ):
        sp = add(name, fn, help_text, game=False, theta=name == "two-node", fmt=None if name == "two-node" else "csv")
        sp.add_argument("--params", default="two_node_params", help="parameter JSON or bundled name")
        if name == "two-node":
            sp.add_argument("--interval-samples", type=int, default=0)
        else:
            sp.add_argument("--resolution", type=int, default=100)
    sp = add("dynamics", cmd_dynamics, "round-robin best-response dynamics", theta=True, fmt="csv")
    sp.add_argument("--max-rounds", type=int, default=200)
    sp.add_argument("--init-q", help="comma-separated initial quantities")
    sp.add_argument("--init-r", help="comma-separated initial reallocation")
    for name, fn, help_text in (
        ("design", cmd_design, "grid search over admissible design weights"),
        ("mpec-dump", cmd_mpec_dump, "write the design problem as a polynomial program"),
        ("sos-bound", cmd_sos_bound, "sum-of-squares upper bound on the design problem"),
    ):
        sp = add(name, fn, help_text, fmt="json" if name == "design" else None)
        sp.add_argument("--objective", default="sw")
        sp.add_argument("--epsilon", default="0.001")
        if name == "design":
            sp.add_argument("--resolution", type=int, default=design.DEFAULT_RESOLUTION)
            sp.add_argument("--threads", type=int)
            sp.add_argument("--sweep-csv", help="also write the per-point sweep here")
        if name == "sos-bound":
            sp.add_argument("--level", type=int, default=1)
            sp.add_argument("--allow-high-level", action="store_true", help="permit levels above 1")
            sp.add_argument("--tol", type=float, default=1e-8)
            sp.add_argument("--max-iter", type=int, default=100)
            sp.add_argument("--dump-sdp", help="write the reduced SDP as sparse triplets")
    return p


def _classify_error(exc: Exception) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, equilibrium.RegionNotCovered):
        return CliError(EXIT_REGION, type(exc).__name__, str(exc))
    if isinstance(exc, (equilibrium.SolverError, QPError, NumericalFailure, sos.NotConverged)):
        return CliError(EXIT_SOLVER, type(exc).__name__, str(exc))
    if isinstance(exc, (ValueError, KeyError, FileNotFoundError, ZeroDivisionError, IndexError)):
        return CliError(EXIT_INVALID, type(exc).__name__, str(exc))
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001
        err = _classify_error(exc)
        payload = {"error": err.kind, "message": str(err), "exit_code": err.code, **err.extra}
        sys.stderr.write(dumps(payload))
        return err.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
