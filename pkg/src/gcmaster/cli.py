"""``gcmaster`` command-line interface.

Exit codes: 0 success, 1 a check failed or a computation was refused,
2 the configuration or command line is invalid.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import decay_lab, evolution, generator, spectral
from .config import RunConfig, load_config
from .errors import ConfigError, GcmasterError, InvalidParams
from .thermo import ModelSpec, TruncationPolicy

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def fmt(x: float, precision: int) -> str:
    return f"{float(x) + 0.0:.{precision}e}"


def _rounded(x: float, precision: int):
    x = float(x)
    return float(fmt(x, precision)) if math.isfinite(x) else str(x)


def _csv(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this subcommand needs --config")
    return load_config(args.config)


def _format(args, cfg: Optional[RunConfig]) -> str:
    if args.format:
        return args.format
    return cfg.output_format if cfg else "csv"


def _out(args, cfg: Optional[RunConfig]) -> Optional[str]:
    return args.out or (cfg.output_path if cfg else None)


def _decompose(cfg: RunConfig, method: str) -> spectral.SpectralDecomposition:
    return spectral.decompose(cfg.model, cfg.trunc, method, cfg.tol_root)


def cmd_verify(args) -> int:
    cfg = _require_config(args)
    p = cfg.precision
    G = generator.build_generator(cfg.model, cfg.trunc)
    if cfg.tamper is not None:
        t = cfg.tamper
        G = generator.perturb_rate(G, t.m, t.n, t.factor)
    checks = {}
    bal = generator.verify_detailed_balance(G, cfg.tol_algebraic)
    checks["detailed_balance"] = {"pass": bal.passed, "max_rel_violation": _rounded(bal.max_rel_violation, p),
                                  "worst_pair": list(bal.worst_pair)}
    cs = generator.column_sum_check(G)
    checks["column_sums"] = {"pass": cs.passed, "max_abs": _rounded(cs.max_abs, p)}
    tr = generator.matrix_trace(G)
    closed = generator.closed_form_trace(cfg.model, cfg.trunc)
    gap = abs(tr - closed.value)
    ok = gap <= closed.tail + cfg.tol_algebraic * abs(closed.value)
    checks["trace_closed_form"] = {"pass": bool(ok), "matrix_trace": _rounded(tr, p),
                                   "closed_form": _rounded(closed.value, p),
                                   "difference": _rounded(gap, p), "tail_bound": _rounded(closed.tail, p)}
    hs = generator.hs_bound_check(G)
    checks["hs_bound"] = {"pass": hs.passed, "hs_norm_sq": _rounded(hs.hs_norm_sq, p), "bound": _rounded(hs.bound, p)}
    S = generator.symmetrize(G)
    try:
        dec = spectral.decompose(cfg.model, cfg.trunc, "secular", cfg.tol_root)
        bad = spectral.localization_violations(dec)
        checks["localization"] = {"pass": not bad, "violations": bad}
    except GcmasterError as exc:
        dec = None
        checks["localization"] = {"pass": False, "violations": None, "reason": str(exc)}
    if dec is None or cfg.tamper is not None:
        dec = spectral.dense_eig_oracle(S)
    lid = spectral.spectral_trace_check(dec, G, cfg.tol_spectral)
    checks["trace_matrix"] = {"pass": lid.passed, "sum_eigenvalues": _rounded(lid.sum_eigs, p),
                              "matrix_trace": _rounded(lid.matrix_trace, p)}
    passed = all(c["pass"] for c in checks.values())
    _emit(_json({"pass": passed, "checks": checks, "max_index": cfg.trunc.max_index}), _out(args, cfg))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_spectrum(args) -> int:
    cfg = _require_config(args)
    p = cfg.precision
    dec = _decompose(cfg, args.method)
    b = dec.poles
    rows = []
    for k in range(1, dec.size + 1):
        q = dec.eigenvectors[:, k - 1]
        rows.append([
            str(k),
            fmt(dec.eigenvalues[k - 1], p),
            fmt(b[k - 2], p) if k >= 2 else "",
            fmt(b[k - 1], p),
            fmt(dec.residuals[k - 1], p),
            fmt(math.fsum(q), p),
        ])
    header = ["k", "nu_k", "b_km1", "b_k", "residual", "sum_components"]
    if _format(args, cfg) == "csv":
        _emit(_csv(header, rows), _out(args, cfg))
        return EXIT_OK
    G = generator.build_generator(cfg.model, cfg.trunc)
    lid = spectral.spectral_trace_check(dec, G, cfg.tol_spectral)
    closed = generator.closed_form_trace(cfg.model, cfg.trunc)
    summary = {
        "method": dec.method,
        "eigenvalues": [_rounded(v, p) for v in dec.eigenvalues],
        "max_residual": _rounded(float(np.max(dec.residuals)), p),
        "trace": {"sum_eigenvalues": _rounded(lid.sum_eigs, p), "matrix_trace": _rounded(lid.matrix_trace, p),
                  "closed_form": _rounded(closed.value, p), "tail_bound": _rounded(closed.tail, p),
                  "pass": lid.passed},
    }
    _emit(_json(summary), _out(args, cfg))
    return EXIT_OK if lid.passed else EXIT_FAIL


def parse_tau_grid(text: str) -> np.ndarray:
    """``geom:a:b:n``, ``lin:a:b:n`` or a comma-separated list."""
    try:
        if text.startswith(("geom:", "lin:")):
            kind, a, b, n = text.split(":")
            make = evolution.geometric_grid if kind == "geom" else evolution.linear_grid
            return make(float(a), float(b), int(n))
        grid = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --tau-grid {text!r}: {exc}") from None
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ConfigError("--tau-grid values must be non-negative and non-decreasing")
    return grid


def _initial(spec: str, dec: spectral.SpectralDecomposition) -> evolution.InitialData:
    M = dec.size
    try:
        if spec == "equilibrium":
            return evolution.InitialData.equilibrium(dec)
        if spec == "uniform":
            return evolution.InitialData.uniform(M)
        if spec.startswith("delta:"):
            return evolution.InitialData.delta(int(spec.split(":", 1)[1]), M)
        if spec.startswith("subspace:"):
            _, n, path = spec.split(":", 2)
            coeffs = np.loadtxt(path, delimiter=None, ndmin=1, dtype=float)
            return evolution.truncated_subspace_initial(dec, int(n), coeffs.ravel())
    except (ValueError, OSError, InvalidParams) as exc:
        raise ConfigError(f"bad --initial {spec!r}: {exc}") from None
    raise ConfigError(f"bad --initial {spec!r}")


def cmd_evolve(args) -> int:
    cfg = _require_config(args)
    p = cfg.precision
    taus = parse_tau_grid(args.tau_grid)
    dec = _decompose(cfg, "secular")
    init = _initial(args.initial, dec)
    traj = evolution.evolve(dec, init, taus)
    header = ["tau", "error", "sum", "min_component"]
    deviation = None
    if args.oracle:
        G = generator.build_generator(cfg.model, cfg.trunc)
        ode = evolution.evolve(dec, init, taus, "ode", G)
        deviation = [evolution.weighted_distance(a, b, dec.weights) for a, b in zip(traj.states, ode.states)]
        header.append("oracle_deviation")
    modes = min(args.modes, dec.size)
    header += [f"c_{k}" for k in range(1, modes + 1)]
    rows = []
    for i, t in enumerate(taus):
        row = [fmt(t, p), fmt(traj.errors[i], p), fmt(traj.sums[i], p), fmt(traj.min_components[i], p)]
        if deviation is not None:
            row.append(fmt(deviation[i], p))
        decayed = traj.fourier[:modes] * np.exp(t * dec.eigenvalues[:modes])
        row += [fmt(c, p) for c in decayed]
        rows.append(row)
    if _format(args, cfg) == "csv":
        _emit(_csv(header, rows), _out(args, cfg))
    else:
        summary = {"tau": [_rounded(t, p) for t in taus],
                   "error": [_rounded(e, p) for e in traj.errors],
                   "sum": [_rounded(s, p) for s in traj.sums],
                   "min_component": [_rounded(m, p) for m in traj.min_components],
                   "shrink": _rounded(init.shrink, p)}
        if deviation is not None:
            summary["max_oracle_deviation"] = _rounded(max(deviation), p)
        _emit(_json(summary), _out(args, cfg))
    return EXIT_OK


def cmd_decay(args) -> int:
    cfg = load_config(args.config) if args.config else None
    p = cfg.precision if cfg else 10
    beta = args.beta if args.beta is not None else (cfg.model.beta if cfg else 1.0)
    max_index = args.max_index or (cfg.trunc.max_index if cfg else 80)
    tail_tol = cfg.trunc.tail_tol if cfg else 1e-8
    try:
        spec = decay_lab.DecaySpec(args.law, args.kappa, args.delta, beta)
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from None
    model = ModelSpec.harmonic(beta, 0.0)
    dec = spectral.decompose(model, TruncationPolicy(max_index, tail_tol))
    tau_max = args.tau_max if args.tau_max is not None else spec.min_tau_max
    taus = evolution.geometric_grid(args.tau_min, tau_max, args.tau_points)
    traj, env = decay_lab.run_decay_experiment(dec, spec, taus)
    fmt_choice = "csv" if args.emit == "csv" else _format(args, cfg)
    if fmt_choice == "csv":
        rows = []
        for t, e, c in zip(taus, traj.errors, env.compensated_series):
            log_e = math.log(e) if e > 0 else -math.inf
            rows.append([fmt(t, p), fmt(e, p), fmt(c, p), fmt(math.log(t), p), fmt(log_e, p)])
        _emit(_csv(["tau", "error", "compensated", "log_tau", "log_error"], rows), _out(args, cfg))
    else:
        summary = {"law": env.law, "pass": env.passed, "sup": _rounded(env.sup_value, p),
                   "median": _rounded(env.median_value, p), "slope": _rounded(env.slope, p),
                   "expected_slope": _rounded(env.expected_slope, p), "slope_ok": env.slope_ok,
                   "non_power": env.non_power}
        _emit(_json(summary), _out(args, cfg))
    print(f"envelope {'PASS' if env.passed else 'FAIL'}: sup/median = "
          f"{env.sup_value / env.median_value if env.median_value else 0.0:.4g}, slope = {env.slope:.4g}",
          file=sys.stderr)
    return EXIT_OK if env.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="gcmaster", parents=[common],
                                     description="Grand-canonical master equation toolkit.")
    parser.set_defaults(config=None, out=None, format=None)
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="generator and spectral identity checks (JSON)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("spectrum", parents=[common], help="eigenvalues and interval data")
    s.add_argument("--method", choices=("secular", "dense"), default="secular")
    s.set_defaults(func=cmd_spectrum)

    e = sub.add_parser("evolve", parents=[common], help="relaxation trajectory")
    e.add_argument("--tau-grid", default="0,1,10,100",
                   help="geom:a:b:n, lin:a:b:n or comma-separated values")
    e.add_argument("--initial", default="uniform",
                   help="equilibrium | uniform | delta:<m> | subspace:<N>:<coeff-file>")
    e.add_argument("--oracle", action="store_true", help="also integrate with RK4 and report the deviation")
    e.add_argument("--modes", type=int, default=0, help="emit the first K decayed Fourier coefficients")
    e.set_defaults(func=cmd_evolve)

    d = sub.add_parser("decay", parents=[common], help="Fourier-decay envelope experiment")
    d.add_argument("--law", choices=("exp", "power"), required=True)
    d.add_argument("--kappa", type=float, default=1.0)
    d.add_argument("--delta", type=float, required=True)
    d.add_argument("--beta", type=float, default=None)
    d.add_argument("--max-index", type=int, default=None)
    d.add_argument("--tau-min", type=float, default=1e2)
    d.add_argument("--tau-max", type=float, default=None)
    d.add_argument("--tau-points", type=int, default=61)
    d.add_argument("--emit", choices=("csv",), default=None)
    d.set_defaults(func=cmd_decay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GcmasterError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
