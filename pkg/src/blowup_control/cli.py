"""Command-line entry point: ``blowup-control <subcommand> [--config PATH] [--out DIR]``.

Exit codes: 0 success (including failing budgets, which are reports), 1 invalid
input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BlowupControlError, ConfigError
from .surface import GridSpec, build_surface, generator_from_descriptor, zero_set_indicator

log = logging.getLogger("blowup_control")

DEFAULTS = """\
[surface]
family = cosine_well
lam = 0.005
center =
radius = 1.0

[grid]
n = 1
points = 256
length = 6.283185307179586

[pipeline]
epsilon = 1.0
s0 = 2
s = 3
sigma = 8
alpha =
b =

[w0]
theta = 1e-6
radius = 1.0
center =

[integrator]
T_start = 1e-3
dtau_max = 0.02
cfl = 0.5
shift = 0
U_guard = 1e6
seed_order = 3

[verifier]
t_max = 20.0
cfl = 0.9
kappa = 0.02
U_max = 1e4
ladder = 1e3, 1e4, 1e5
stop_fraction = 0.1
omega =

[sweep]
lambdas = 0, 0.001, 0.002, 0.004, 0.008, 0.016
thetas = 0, 1e-6, 2e-6, 4e-6, 8e-6

[run]
seed = 0
"""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split()) if text.strip() else ()


def _opt_float(text: str):
    return float(text) if text.strip() else None


@dataclass
class RunConfig:
    surface: dict
    grid: GridSpec
    epsilon: float
    s0: float
    s: float
    sigma: float
    alpha: float | None
    b: float | None
    theta: float
    w0_radius: float
    w0_center: tuple[float, ...]
    integrator: dict
    verifier: dict
    omega: tuple[float, ...]
    lambdas: tuple[float, ...]
    thetas: tuple[float, ...]
    seed: int
    text: str = field(repr=False, default="")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def validate(self):
        n = self.grid.n
        if not self.s0 > n / 2 + 1:
            raise ConfigError(f"s0 = {self.s0} must exceed n/2 + 1 = {n / 2 + 1}")
        if not self.s >= self.s0 + 1:
            raise ConfigError(f"s = {self.s} must be at least s0 + 1 = {self.s0 + 1}")
        if self.omega and len(self.omega) != 2:
            raise ConfigError("omega takes two numbers: left and right end")


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.read_string(DEFAULTS)
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        user = configparser.ConfigParser()
        try:
            user.read(p)
            cp.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        # a [surface] section without a family must not silently inherit the default one
        if user.has_section("surface") and not user.get("surface", "family", fallback="").strip():
            raise ConfigError("[surface] needs a family")
    for (sec, key), val in (overrides or {}).items():
        cp.set(sec, key, str(val))
    buf = io.StringIO()
    cp.write(buf)
    try:
        sf = cp["surface"]
        surface = {"family": sf.get("family").strip()}
        for key in ("lam", "radius"):
            if sf.get(key, "").strip():
                surface[key] = float(sf[key])
        if sf.get("center", "").strip():
            surface["center"] = list(_floats(sf["center"]))
        if sf.get("terms", "").strip():
            surface["terms"] = json.loads(sf["terms"])
        if sf.get("const", "").strip():
            surface["const"] = float(sf["const"])
        if sf.get("slope", "").strip():
            surface["slope"] = list(_floats(sf["slope"]))
        g = cp["grid"]
        n = g.getint("n")
        grid = GridSpec(n, g.getint("points"), (g.getfloat("length"),) * n)
        pl = cp["pipeline"]
        integ = cp["integrator"]
        ver = cp["verifier"]
        cfg = RunConfig(
            surface=surface,
            grid=grid,
            epsilon=pl.getfloat("epsilon"),
            s0=pl.getfloat("s0"),
            s=pl.getfloat("s"),
            sigma=pl.getfloat("sigma"),
            alpha=_opt_float(pl.get("alpha", "")),
            b=_opt_float(pl.get("b", "")),
            theta=cp["w0"].getfloat("theta"),
            w0_radius=cp["w0"].getfloat("radius"),
            w0_center=_floats(cp["w0"].get("center", "")),
            integrator={
                "T_start": integ.getfloat("T_start"),
                "dtau_max": integ.getfloat("dtau_max"),
                "cfl": integ.getfloat("cfl"),
                "shift": integ.getint("shift"),
                "U_guard": integ.getfloat("U_guard"),
                "seed_order": integ.getint("seed_order"),
            },
            verifier={
                "t_max": ver.getfloat("t_max"),
                "cfl": ver.getfloat("cfl"),
                "kappa": ver.getfloat("kappa"),
                "U_max": ver.getfloat("U_max"),
                "ladder": _floats(ver.get("ladder")),
                "stop_fraction": _opt_float(ver.get("stop_fraction", "")),
            },
            omega=_floats(ver.get("omega", "")),
            lambdas=_floats(cp["sweep"].get("lambdas")),
            thetas=_floats(cp["sweep"].get("thetas")),
            seed=cp["run"].getint("seed"),
            text=buf.getvalue(),
        )
    except (ValueError, KeyError, configparser.Error, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad configuration: {exc}") from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def provenance(cfg: RunConfig, command: str) -> dict:
    import sympy

    return {
        "command": command,
        "config_hash": cfg.digest,
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "sympy": sympy.__version__,
        "grid": cfg.grid.describe(),
        "seed": cfg.seed,
    }


def write_csv(path: Path, rows, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_jsonl(path: Path, records, header: dict):
    with open(path, "w") as fh:
        fh.write(json.dumps({"provenance": header}) + "\n")
        for r in records:
            fh.write(json.dumps(r, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, GridSpec):
        return obj.describe()
    raise TypeError(type(obj).__name__)


def _out(args, cfg: RunConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.ini", "w") as fh:
        fh.write(cfg.text)
    with open(out / "provenance.json", "w") as fh:
        json.dump(provenance(cfg, args.command), fh, indent=1)
    return out


def _settings(cfg: RunConfig, shift: int | None = None):
    from .integrator import IntegratorConfig
    from .pipeline import PipelineSettings

    integ = dict(cfg.integrator)
    if shift is not None:
        integ["shift"] = shift
    return PipelineSettings(
        epsilon=cfg.epsilon,
        s0=cfg.s0,
        alpha=cfg.alpha,
        b=cfg.b,
        integrator=IntegratorConfig(s_index=cfg.s, **integ),
    )


def _w0(cfg: RunConfig):
    from .pipeline import bump_profile

    return cfg.theta * bump_profile(cfg.grid, cfg.w0_radius, cfg.w0_center or None)


def _solver(cfg: RunConfig, **kw):
    from .verifier import SolverConfig

    opts = dict(cfg.verifier)
    opts.update(kw)
    return SolverConfig(**opts)


# ---------------------------------------------------------------------------
# subcommands


def cmd_expand(args, cfg: RunConfig) -> int:
    from .expansion import compute_coefficients, log_samples, residual_order_check

    s = build_surface(generator_from_descriptor(cfg.surface), cfg.grid)
    c = compute_coefficients(s)
    out = _out(args, cfg)
    x = cfg.grid.coords
    rows = []
    for idx in np.ndindex(cfg.grid.shape):
        row = {f"x{i}": float(xi[idx]) for i, xi in enumerate(x)}
        row.update({k: float(v[idx]) for k, v in c.fields().items()})
        rows.append(row)
    write_csv(out / "coefficients.csv", rows)
    rep = residual_order_check(c, s, log_samples())
    res_rows = [dict(r, log_correction=rep.log_correction) for r in rep.rows()]
    write_csv(out / "residual.csv", res_rows, ["T", "residual_sup", "fitted_p", "log_correction"])
    summary = {"fitted_p": rep.fitted_p, "log_correction": rep.log_correction, "max_residual": float(np.max(rep.residual_sup))}
    print(json.dumps(summary))
    return 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    from .expansion import compute_coefficients
    from .integrator import integrate

    s = build_surface(generator_from_descriptor(cfg.surface), cfg.grid)
    settings = _settings(cfg, args.shift)
    alpha = settings.resolved_alpha(cfg.grid)
    b = cfg.b if cfg.b is not None else alpha + 2.0
    from dataclasses import replace

    icfg = replace(settings.integrator, b=b)
    traj = integrate(_w0(cfg), compute_coefficients(s), s, icfg)
    out = _out(args, cfg)
    write_jsonl(out / "energy.jsonl", (r.as_dict() for r in traj.energy_log), provenance(cfg, "simulate"))
    final = traj.final()
    x = cfg.grid.coords
    rows = []
    for idx in np.ndindex(cfg.grid.shape):
        row = {f"x{i}": float(xi[idx]) for i, xi in enumerate(x)}
        for r, name in enumerate(["w", "w_0"] + [f"w_{i + 1}" for i in range(cfg.grid.n)]):
            row[name] = float(final.data[r][idx])
        rows.append(row)
    write_csv(out / "final_state.csv", rows)
    print(json.dumps({"steps": traj.steps, "T_end": traj.T_end, "sup": traj.energy_log[-1].sup_norm}))
    return 0


def _save_record(out: Path, rec, cfg):
    with open(out / "record.json", "w") as fh:
        json.dump(rec.to_json(), fh, default=_json_default)
    np.savetxt(out / "u.txt", rec.u)
    np.savetxt(out / "ut.txt", rec.ut)
    write_csv(out / "budget.csv", [rec.budget.as_dict()])


def cmd_construct(args, cfg: RunConfig) -> int:
    from .pipeline import extract_boundary_trace, run_pipeline

    gen = generator_from_descriptor(cfg.surface)
    rec = run_pipeline(gen, cfg.grid, _w0(cfg), _settings(cfg, args.shift), provenance(cfg, "construct"))
    out = _out(args, cfg)
    _save_record(out, rec, cfg)
    if cfg.omega:
        trace = extract_boundary_trace(rec, tuple(cfg.omega), _solver(cfg))
        write_csv(out / "boundary_trace.csv", trace.rows(), ["t", "boundary_point", "value"])
    print(json.dumps(rec.budget.as_dict()))
    return 0


def load_record(path: str):
    from .pipeline import CauchyDataRecord, ControlBudget

    with open(path) as fh:
        d = json.load(fh)
    g = d["grid"]
    grid = GridSpec(g["n"], g["points"], tuple(g["lengths"]))
    budget = ControlBudget(**{k: v for k, v in d["budget"].items() if k != "pass"}) if d.get("budget") else None
    return CauchyDataRecord(
        np.array(d["u"]), np.array(d["ut"]), d["alpha"], grid, d["s0"], budget=budget, provenance=d.get("provenance", {})
    )


def cmd_verify(args, cfg: RunConfig) -> int:
    from .pipeline import run_pipeline
    from .verifier import compare_blowup, solve_direct

    gen = generator_from_descriptor(cfg.surface)
    if args.record:
        rec = load_record(args.record)
        surf = rec.provenance.get("surface")
        if surf:
            gen = generator_from_descriptor(surf)
        grid = rec.grid
    else:
        rec = run_pipeline(gen, cfg.grid, _w0(cfg), _settings(cfg, args.shift), provenance(cfg, "verify"))
        grid = cfg.grid
    s = build_surface(gen, grid)
    solver = _solver(cfg, snapshot_times=(rec.alpha,))
    res = solve_direct(rec, solver)
    report = compare_blowup(res.map, rec.alpha - s.psi, zero_set_indicator(s), grid)
    out = _out(args, cfg)
    write_csv(out / "blowup_map.csv", res.map.rows(grid))
    summary = {
        "alpha": rec.alpha,
        "first_blowup_raw": res.map.first_time(),
        "first_blowup_extrapolated": float(np.min(res.map.best_times())),
        **report.as_dict(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
    print(json.dumps(summary, default=_json_default))
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .pipeline import SWEEP_COLUMNS, argmin_theta, bump_profile, sweep

    # sweep lambdas multiply the shape, so the configured amplitude is replaced by 1
    shape = dict(cfg.surface)
    if "lam" in shape:
        shape["lam"] = 1.0
    gen = generator_from_descriptor(shape)
    Z = bump_profile(cfg.grid, cfg.w0_radius, cfg.w0_center or None)
    rows = sweep(cfg.lambdas, cfg.thetas, gen, cfg.grid, Z, _settings(cfg, args.shift))
    out = _out(args, cfg)
    write_csv(out / "sweep.csv", rows, list(SWEEP_COLUMNS))
    best = argmin_theta(rows)
    print(json.dumps({"cells": len(rows), "passing": sum(r["pass"] for r in rows), "argmin_theta": {str(k): v for k, v in best.items()}}))
    return 0


def cmd_check(args, cfg: RunConfig) -> int:
    from .checks import run_suite
    from .reduced import constant_A

    A = None
    if args.perturb_A:
        rng = np.random.default_rng(cfg.seed)
        A = constant_A(cfg.grid.n) + args.perturb_A * rng.standard_normal((cfg.grid.n + 2,) * 2)
    results = run_suite(cfg.seed, A_override=A, oracle_perturbation=args.perturb_oracle)
    ok = all(r.passed for r in results)
    summary = {"passed": ok, "checks": [r.as_dict() for r in results]}
    out = _out(args, cfg)
    with open(out / "check.json", "w") as fh:
        json.dump(summary, fh, indent=1, default=_json_default)
    print(json.dumps({"passed": ok, "failed": [r.name for r in results if not r.passed]}))
    return 0 if ok else 1


COMMANDS = {
    "expand": cmd_expand,
    "simulate": cmd_simulate,
    "construct": cmd_construct,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blowup-control", description="Controlled blow-up for the cubic wave equation.")
    p.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--shift", type=int, default=None, help="integrate the shifted unknown with A + h")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            sp.add_argument("--record", help="record.json written by construct")
        if name == "check":
            sp.add_argument("--perturb-A", type=float, default=0.0, help=argparse.SUPPRESS)
            sp.add_argument("--perturb-oracle", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(DEFAULTS)
        return 0
    if not args.command:
        parser.print_help()
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except BlowupControlError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
