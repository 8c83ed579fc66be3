"""Command-line front end: ``dampedmodes <command> MODEL [options]``.

Exit codes: 0 ok, 2 input error, 3 critical system under ``--strict``,
4 near-degenerate perturbation, 5 unstable reduction under ``--require-stable``.
Mode indices are 0-based throughout.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import extensions, fastmode, modelfile, perturb, spectral
from .core import CriticalSystemError, DampedModesError, companion_matrix
from .dynamics import NearPoleWarning, default_dt, evolve_many, integrate_linear

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CRITICAL = 3
EXIT_DEGENERATE = 4
EXIT_UNSTABLE = 5


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _num(x):
    """Deterministic float for output; ``None`` for non-finite values."""
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.15g}")


def _cplx(z):
    z = complex(z)
    return [_num(z.real), _num(z.imag)]


def _cell(v):
    if v is None:
        return "nan"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.15g}"
    return str(v)


class Table:
    """Rows of named columns; complex columns are split into ``_re``/``_im``."""

    def __init__(self, columns, complex_columns=()):
        self.columns = list(columns)
        self.complex_columns = set(complex_columns)
        self.rows = []

    def add(self, **values):
        self.rows.append(values)

    def records(self):
        out = []
        for row in self.rows:
            rec = {}
            for c in self.columns:
                v = row.get(c)
                if c in self.complex_columns:
                    rec[c] = None if v is None else _cplx(v)
                elif isinstance(v, (float, np.floating)):
                    rec[c] = _num(v)
                elif isinstance(v, np.integer):
                    rec[c] = int(v)
                else:
                    rec[c] = v
            out.append(rec)
        return out

    def csv(self):
        header = []
        for c in self.columns:
            header += [f"{c}_re", f"{c}_im"] if c in self.complex_columns else [c]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for rec in self.records():
            line = []
            for c in self.columns:
                v = rec[c]
                if c in self.complex_columns:
                    line += [_cell(None), _cell(None)] if v is None else [_cell(v[0]), _cell(v[1])]
                else:
                    line.append(_cell(v))
            writer.writerow(line)
        return buf.getvalue()


def _emit(args, table: Table, meta: dict | None = None):
    if args.format == "csv":
        text = table.csv()
    else:
        doc = dict(meta or {})
        doc["rows"] = table.records()
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _floats(text, name, count=None):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(vals) not in count:
        raise CliError(f"{name}: expected {' or '.join(map(str, count))} numbers, got {len(vals)}")
    return vals


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path}: invalid JSON ({exc})") from exc


def _load(args):
    model = modelfile.load(args.model)
    return model, model.build()


def _basis(model, obj, allow_critical=False):
    policy = model.policy.replace(allow_critical=allow_critical)
    if model.is_constrained:
        return fastmode.constrained_eigenmodes(obj, policy)
    return spectral.eigenmodes(obj, policy)


def _mode_table(basis):
    res = basis.residuals.orthonormality if basis.residuals else math.nan
    table = Table(["index", "omega", "self_product", "critical", "orthonormality_residual"],
                  complex_columns=("omega", "self_product"))
    for j, m in enumerate(basis.modes):
        table.add(index=j, omega=m.omega, self_product=m.self_product, critical=m.critical,
                  orthonormality_residual=res)
    return table


def cmd_modes(args):
    model, obj = _load(args)
    try:
        basis = _basis(model, obj, allow_critical=not args.strict)
    except CriticalSystemError as exc:
        raise CliError(f"critical: {exc}", EXIT_CRITICAL) from exc
    meta = {"model_type": model.type, "n": basis.n, "critical": basis.critical,
            "orthonormality_residual": _num(basis.residuals.orthonormality)}
    _emit(args, _mode_table(basis), meta)


def _initial_state(path, dim):
    data = _read_json(path, "init file")
    if isinstance(data, dict):
        if set(data) != {"state"}:
            raise CliError("init file object must have exactly the key 'state'")
        data = data["state"]
    if not isinstance(data, list) or len(data) != dim:
        raise CliError(f"init file must hold {dim} entries (coordinates then momenta)")
    out = np.empty(dim, dtype=complex)
    for i, v in enumerate(data):
        if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
            out[i] = complex(v[0], v[1])
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[i] = v
        else:
            raise CliError(f"init entry {i} must be a number or an [re, im] pair")
    if not np.all(np.isfinite(out)):
        raise CliError("init state must be finite")
    return out


def _state_columns(model, n):
    cols = [f"q{a}" for a in range(n)] + [f"p{a}" for a in range(n)]
    if model.is_constrained:
        cols.append("q_fast")
    return cols


def cmd_evolve(args):
    model, obj = _load(args)
    if args.t1 < 0:
        raise CliError("--t1 must be non-negative")
    if args.samples < 2:
        raise CliError("--samples must be at least 2")
    if model.is_constrained:
        generator, dim, n = fastmode.constrained_generator(obj), obj.dim, obj.n
    else:
        generator, dim, n = companion_matrix(obj), obj.dim, obj.n
    phi0 = _initial_state(args.init, dim)
    times = np.linspace(0.0, args.t1, args.samples)
    results = {}
    if args.method in ("eigen", "both"):
        try:
            basis = _basis(model, obj)
        except CriticalSystemError as exc:
            raise CliError(f"critical: eigen-expansion unavailable ({exc})", EXIT_CRITICAL) from exc
        results["eigen"] = evolve_many(phi0, basis, times)
    if args.method in ("direct", "both"):
        dt = args.dt if args.dt is not None else default_dt(generator)
        if dt <= 0:
            raise CliError("--dt must be positive")
        _, states = integrate_linear(generator, phi0, args.t1, dt, n_out=args.samples)
        results["direct"] = states
    states = results.get("eigen", results.get("direct"))
    cols = _state_columns(model, n)
    extra = ["discrepancy"] if args.method == "both" else []
    table = Table(["t"] + cols + extra, complex_columns=cols)
    for i, t in enumerate(times):
        row = {"t": float(t)}
        row.update({c: states[i, k] for k, c in enumerate(cols)})
        if extra:
            row["discrepancy"] = float(np.max(np.abs(results["eigen"][i] - results["direct"][i])))
        table.add(**row)
    meta = {"method": args.method, "t1": _num(args.t1)}
    if extra:
        meta["max_discrepancy"] = _num(max(r["discrepancy"] for r in table.rows))
    _emit(args, table, meta)


def cmd_perturb(args):
    model, obj = _load(args)
    if model.is_constrained:
        raise CliError("perturb needs an ordinary (non fast_mode) model")
    data = _read_json(args.dk, "dK file")
    if isinstance(data, dict):
        if set(data) != {"delta_k"}:
            raise CliError("dK file object must have exactly the key 'delta_k'")
        data = data["delta_k"]
    try:
        dk = perturb.Perturbation(np.array(data, dtype=float))
    except (TypeError, ValueError) as exc:
        raise CliError(f"dK: {exc}") from exc
    if dk.delta_k.shape != (obj.n, obj.n):
        raise CliError(f"dK must be {obj.n} x {obj.n}")
    eps_list = _floats(args.eps_list, "--eps-list")
    basis = _basis(model, obj)
    if not 0 <= args.mode < len(basis):
        raise CliError(f"--mode must be in 0..{len(basis) - 1}")
    try:
        unit = perturb.rspt_shift(basis, dk, args.mode, model.policy)
    except perturb.NearDegenerateError as exc:
        raise CliError(f"near-degenerate group {list(exc.group)}: {exc}", EXIT_DEGENERATE) from exc
    w0 = basis[args.mode].omega
    table = Table(["eps", "exact", "first", "second", "rspt", "residual"],
                  complex_columns=("exact", "first", "second", "rspt", "residual"))
    for eps in eps_list:
        first, second = eps * unit.first, eps**2 * unit.second
        exact = perturb.exact_shift(obj, dk, w0, eps, w0 + first + second) if eps != 0 else 0j
        rspt = first + second
        table.add(eps=float(eps), exact=exact, first=first, second=second, rspt=rspt, residual=exact - rspt)
    _emit(args, table, {"mode": args.mode, "omega": _cplx(w0)})


def cmd_scan(args):
    model, _ = _load(args)
    if args.param not in model.scalar_parameters():
        raise CliError(f"unknown scalar parameter {args.param!r}; available: {model.scalar_parameters()}")
    if model.is_constrained:
        raise CliError("scan is not available for fast_mode models")
    rng = _floats(args.range, "--range", count=(2, 3))
    lo, hi = rng[0], rng[1]
    steps = int(rng[2]) if len(rng) == 3 else 400
    if not hi > lo or steps < 2:
        raise CliError("--range needs lo < hi and at least 2 steps")

    def builder(x):
        return model.with_parameter(args.param, x).build()

    values = spectral.criticality_scan(builder, (lo, hi, steps), model.policy)
    table = Table(["index", "value"])
    for i, v in enumerate(values):
        table.add(index=i, value=round(v, 6))
    _emit(args, table, {"param": args.param})


def cmd_correlate(args):
    model, obj = _load(args)
    if model.is_constrained:
        raise CliError("correlate needs an ordinary (non fast_mode) model")
    try:
        noise = extensions.NoiseModel(args.temperature, classical=args.classical)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    lo, hi, count = _floats(args.omega_grid, "--omega-grid", count=(3,))
    if int(count) < 1:
        raise CliError("--omega-grid count must be positive")
    for s in (args.alpha, args.beta):
        if not 0 <= s < obj.n:
            raise CliError(f"site index {s} out of range 0..{obj.n - 1}")
    basis = _basis(model, obj)
    table = Table(["omega", "spectrum", "green_route", "prefactor", "detailed_balance", "near_pole"],
                  complex_columns=("spectrum",))
    for w in np.linspace(lo, hi, int(count)):
        w = float(w)
        near = bool(np.min(np.abs(w - basis.omegas.real)) < 1e-6 or w == 0)
        if w == 0:
            table.add(omega=w, spectrum=None, green_route=None, prefactor=noise.prefactor(w),
                      detailed_balance=None, near_pole=True)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NearPoleWarning)
            f = extensions.correlation_spectrum(basis, noise, args.alpha, args.beta, w)
            fm = extensions.correlation_spectrum(basis, noise, args.alpha, args.beta, -w)
        try:
            g = extensions.correlation_spectrum_green(obj, noise, args.alpha, args.beta, w)
        except DampedModesError:
            g, near = None, True
        ratio = (f / fm).real if fm != 0 else None
        table.add(omega=w, spectrum=f, green_route=g, prefactor=noise.prefactor(w),
                  detailed_balance=ratio, near_pole=near)
    meta = {"temperature": _num(args.temperature), "classical": args.classical,
            "alpha": args.alpha, "beta": args.beta}
    _emit(args, table, meta)


def cmd_reduce(args):
    model, obj = _load(args)
    if not model.is_constrained:
        raise CliError("reduce needs a fast_mode model")
    try:
        stable, det = fastmode.stability_check(obj)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.require_stable and not stable:
        raise CliError(f"unstable: det = {det:.6g}, c = {obj.c:.6g}", EXIT_UNSTABLE)
    try:
        basis = _basis(model, obj, allow_critical=True)
    except DampedModesError as exc:
        raise CliError(str(exc)) from exc
    table = _mode_table(basis)
    meta = {"stable": stable, "det_stiffness": _num(det), "c": _num(obj.c), "n": obj.n}
    if args.validate_eps is not None:
        try:
            meta["adiabatic_discrepancy"] = _num(fastmode.validate_adiabatic(obj, args.validate_eps))
        except (ValueError, DampedModesError) as exc:
            raise CliError(f"validation failed: {exc}") from exc
        table.columns.append("adiabatic_discrepancy")
        for row in table.rows:
            row["adiabatic_discrepancy"] = meta["adiabatic_discrepancy"]
    _emit(args, table, meta)


def cmd_export(args):
    model, _ = _load(args)
    text = modelfile.dump(model.export_dense())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="JSON model file")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write output here instead of stdout")

    parser = argparse.ArgumentParser(prog="dampedmodes", description="Eigenmode analysis of damped oscillator networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", parents=[common], help="eigenvalues, self-products and criticality flags")
    p.add_argument("--strict", action="store_true", help="exit 3 if the system is critical")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("evolve", parents=[common], help="time evolution by eigen-expansion and/or RK4")
    p.add_argument("--init", required=True, help="JSON list of 2N initial values (numbers or [re, im])")
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--dt", type=float, default=None, help="RK4 step (default 0.01 / spectral bound)")
    p.add_argument("--method", choices=("eigen", "direct", "both"), default="eigen")
    p.add_argument("--samples", type=int, default=11, help="number of output times including 0 and t1")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("perturb", parents=[common], help="RSPT shifts against exact re-solves")
    p.add_argument("--dk", required=True, help="JSON N x N symmetric stiffness perturbation")
    p.add_argument("--mode", type=int, required=True, help="0-based mode index")
    p.add_argument("--eps-list", required=True, help="comma-separated epsilons")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("scan", parents=[common], help="locate critical parameter values")
    p.add_argument("--param", required=True)
    p.add_argument("--range", required=True, help="lo,hi[,steps]")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("correlate", parents=[common], help="thermal correlation spectrum")
    p.add_argument("--temperature", type=float, required=True)
    p.add_argument("--omega-grid", required=True, help="lo,hi,count")
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--beta", type=int, required=True)
    p.add_argument("--classical", action="store_true")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("reduce", parents=[common], help="constrained modes of a fast_mode model")
    p.add_argument("--validate-eps", type=float, default=None, help="light mass for the adiabatic check")
    p.add_argument("--require-stable", action="store_true", help="exit 5 if unstable")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("export", parents=[common], help="write the model as explicit matrices")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CriticalSystemError as exc:
        print(f"error: critical: {exc}", file=sys.stderr)
        return EXIT_CRITICAL
    except (modelfile.ModelFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
