"""Command-line interface: run, sweep, validate.

Configuration is a YAML mapping mirroring ExperimentConfig; any field can
be overridden on the command line with --set key=value (values parsed as
YAML, dots descend into nested mappings).  Outputs are a JSON report and
a long-format CSV, both byte-deterministic for a fixed config and seed.

Exit codes: 0 success, 1 validation check failed, 2 bad configuration,
3 numerical failure (divergence, degenerate bases, overflow).
"""

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, asdict

import numpy as np
import yaml

from .errors import ConfigError, ShadowSenseError
from .model import BUILTIN_SYSTEMS, make_system
from .nilss import solve_nilss
from .orbit import generate_orbit
from .response import assemble_report
from .stats import write_csv
from .subspace import build_frames
from .tangent import (jacobian_sequence, propagate_homogeneous,
                      propagate_adjoint, lyapunov_exponents)

SWEEP_AXES = ("K", "s", "seed", "segment_len", "N", "N_back", "N_f", "N_b",
              "delta_s", "fd_K", "fd_seeds", "N_r", "m")


@dataclass
class ExperimentConfig:
    """One sensitivity analysis, fully determined and reproducible."""

    system: str = "expanding_circle"
    system_params: dict = field(default_factory=dict)
    s: float = 0.0
    K: int = 100_000
    spinup: int = 500
    tangent_spinup: int = 200
    adjoint_spinup: int = 200
    m: int = None               # override of the system's unstable count
    segment_len: int = 20
    renorm_every: int = 1
    N_back: int = 8
    N: int = 1
    N_f: int = 40
    N_b: int = 40
    include_fd: bool = True
    delta_s: float = 1e-2
    fd_K: int = None            # defaults to K
    fd_seeds: int = 16
    N_r: int = None             # direct response sum truncation, off if None
    include_oracle: bool = False
    seed: int = 0
    out_json: str = "report.json"
    out_csv: str = "report.csv"

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def system_dimension(cfg):
    """Phase-space dimension implied by the config, without construction."""
    if cfg.system == "expanding_circle":
        return 1
    if cfg.system == "perturbed_cat_map":
        return 2
    if cfg.system == "solenoid":
        return 3
    if cfg.system == "block_hyperbolic_linear":
        p = cfg.system_params
        return (len(p.get("unstable_mults", (2.0,)))
                + len(p.get("stable_mults", (0.5,))))
    raise ConfigError(f"unknown system {cfg.system!r}")


def validate_config(cfg, check_m=True):
    """Raise ConfigError on malformed or self-contradictory settings."""
    if cfg.system not in BUILTIN_SYSTEMS:
        raise ConfigError(f"unknown system {cfg.system!r}; known: "
                          f"{sorted(BUILTIN_SYSTEMS)}")
    if not isinstance(cfg.system_params, dict):
        raise ConfigError("system_params must be a mapping")

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.K >= 2, f"K must be >= 2, got {cfg.K}")
    need(cfg.spinup >= 0, "spinup must be >= 0")
    need(cfg.tangent_spinup >= 1, "tangent_spinup must be >= 1")
    need(cfg.adjoint_spinup >= 1, "adjoint_spinup must be >= 1")
    need(cfg.segment_len >= 1, "segment_len must be >= 1")
    need(cfg.renorm_every >= 1, "renorm_every must be >= 1")
    need(cfg.N >= 1, f"N must be >= 1, got {cfg.N}")
    need(cfg.N_back >= 0, "N_back must be >= 0")
    need(cfg.N_f >= 1 and cfg.N_b >= 1, "N_f and N_b must be >= 1")
    need(cfg.delta_s > 0, "delta_s must be positive")
    need(cfg.fd_seeds >= 2, "fd_seeds must be >= 2")
    need(cfg.fd_K is None or cfg.fd_K >= 2, "fd_K must be >= 2")
    need(cfg.N_r is None or cfg.N_r >= 1, "N_r must be >= 1")
    if check_m and cfg.m is not None:
        dim = system_dimension(cfg)
        need(1 <= cfg.m <= dim,
             f"m={cfg.m} outside [1, {dim}] for system {cfg.system!r}")


def build_model(cfg):
    params = dict(cfg.system_params)
    if cfg.m is not None:
        params["num_unstable"] = cfg.m
    return make_system(cfg.system, params)


def load_config(path=None, overrides=()):
    d = {}
    if path is not None:
        with open(path) as f:
            d = yaml.safe_load(f) or {}
        if not isinstance(d, dict):
            raise ConfigError(f"{path} does not contain a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            val = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse value for {key!r}: {e}")
        target = d
        parts = key.split(".")
        for p in parts[:-1]:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(f"cannot descend into {p!r} in {key!r}")
        target[parts[-1]] = val
    return ExperimentConfig.from_dict(d)


def _run_report(cfg, include_fd=None):
    model = build_model(cfg)
    echo = asdict(cfg)
    # artifact paths are plumbing, not experiment parameters: leaving them
    # out keeps the JSON byte-identical for identical experiments
    echo.pop("out_json", None)
    echo.pop("out_csv", None)
    return assemble_report(
        model, cfg.s, K=cfg.K, seed=cfg.seed, spinup=cfg.spinup,
        tangent_spinup=cfg.tangent_spinup, adjoint_spinup=cfg.adjoint_spinup,
        segment_len=cfg.segment_len, renorm_every=cfg.renorm_every,
        N_back=cfg.N_back, N=cfg.N, N_f=cfg.N_f, N_b=cfg.N_b,
        include_fd=cfg.include_fd if include_fd is None else include_fd,
        delta_s=cfg.delta_s, fd_K=cfg.fd_K, fd_seeds=cfg.fd_seeds,
        N_r=cfg.N_r, include_oracle=cfg.include_oracle,
        config_echo=echo)


def _print_summary(report, out):
    def line(name, val, hw=None):
        if val is None:
            return
        tail = f" +- {hw:.6g}" if hw is not None else ""
        print(f"{name:<18} = {val:+.8f}{tail}", file=out)

    line("shadowing", report.shadowing, report.shadowing_half_width)
    line("correction", report.correction, report.correction_half_width)
    line("corrected_total", report.corrected_total)
    line("fd_oracle", report.fd_oracle, report.fd_half_width)
    line("ruelle", report.ruelle, report.ruelle_half_width)
    for key in ("recurrence_residual", "optimality_residual",
                "min_splitting_angle"):
        if key in report.diagnostics:
            print(f"{key:<18} = {report.diagnostics[key]:.3e}", file=out)


def cmd_run(cfg, out=None):
    out = out if out is not None else sys.stdout
    validate_config(cfg)
    report = _run_report(cfg)
    with open(cfg.out_json, "w") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    rows = [{"section": sec, "key": key, "value": val}
            for sec, key, val in report.scalar_rows()]
    write_csv(cfg.out_csv, ["section", "key", "value"], rows)
    _print_summary(report, out)
    print(f"wrote {cfg.out_json} and {cfg.out_csv}", file=out)
    return 0


def cmd_sweep(cfg, axis, values, out=None):
    out = out if out is not None else sys.stdout
    validate_config(cfg)
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    for raw in values:
        val = yaml.safe_load(raw) if isinstance(raw, str) else raw
        d = asdict(cfg)
        d[axis] = val
        sub = ExperimentConfig.from_dict(d)
        validate_config(sub)
        report = _run_report(sub)
        row = {
            "axis": axis, "value": val,
            "shadowing": report.shadowing,
            "shadowing_half_width": report.shadowing_half_width,
            "correction": report.correction,
            "correction_half_width": report.correction_half_width,
            "corrected_total": report.corrected_total,
            "fd_oracle": report.fd_oracle,
            "fd_half_width": report.fd_half_width,
            "recurrence_residual":
                report.diagnostics["recurrence_residual"],
            "optimality_residual":
                report.diagnostics["optimality_residual"],
            "min_splitting_angle":
                report.diagnostics["min_splitting_angle"],
        }
        rows.append(row)
        print(f"{axis}={val}: corrected_total={report.corrected_total:+.8f}",
              file=out)
    write_csv(cfg.out_csv, list(rows[0]), rows)
    print(f"wrote {cfg.out_csv}", file=out)
    return 0


def _checks(cfg):
    """Validation checks as (name, callable) pairs.

    Each callable returns a detail string on success and raises on
    failure; the runner turns exceptions into FAIL lines.
    """
    state = {}

    def chk_config():
        validate_config(cfg, check_m=False)
        return "fields well-formed"

    def chk_m_range():
        dim = system_dimension(cfg)
        m = cfg.m
        if m is not None and not 1 <= m <= dim:
            raise ConfigError(f"declared m={m} outside [1, {dim}]")
        return f"m={'default' if m is None else m}, dim={dim}"

    def chk_model():
        state["model"] = build_model(cfg)
        return f"constructed {type(state['model']).__name__}"

    def chk_derivatives():
        model = state["model"]
        rng = np.random.default_rng(0)
        box = model.phase_box()
        u = box[:, 0] + rng.random((64, model.dim)) * (box[:, 1] - box[:, 0])
        w = rng.standard_normal((64, model.dim))
        a = rng.standard_normal((64, model.dim))
        eps = 1e-6
        mask = model.periodic_mask()

        def wrap(d):
            return np.where(mask, (d + np.pi) % (2 * np.pi) - np.pi, d)

        fd_jvp = wrap(model.step(u + eps * w, cfg.s)
                      - model.step(u - eps * w, cfg.s)) / (2 * eps)
        err_j = np.max(np.abs(fd_jvp - model.jvp(u, w, cfg.s)))
        lhs = np.einsum("ki,ki->k", a, model.jvp(u, w, cfg.s))
        rhs = np.einsum("ki,ki->k", model.vjp(u, a, cfg.s), w)
        err_t = np.max(np.abs(lhs - rhs))
        fd_s = wrap(model.step(u, cfg.s + eps)
                    - model.step(u, cfg.s - eps)) / (2 * eps)
        err_s = np.max(np.abs(fd_s - model.dfds(u, cfg.s)))
        fd_g = np.einsum("ki,ki->k",
                         model.objective_grad(u), w)
        fd_g_ref = (model.objective(u + eps * w)
                    - model.objective(u - eps * w)) / (2 * eps)
        err_g = np.max(np.abs(fd_g - fd_g_ref))
        worst = max(err_j, err_t, err_s, err_g)
        if worst > 1e-5:
            raise ShadowSenseError(f"derivative mismatch {worst:.3e}")
        return f"max deviation {worst:.3e}"

    def chk_orbit():
        model = state["model"]
        orb = generate_orbit(model, cfg.s, 2000, spinup=cfg.spinup,
                             seed=cfg.seed)
        state["orbit"] = orb
        pred = model.step(orb.states[:-1], cfg.s)
        d = pred - orb.states[1:]
        mask = model.periodic_mask()
        d = np.where(mask, (d + np.pi) % (2 * np.pi) - np.pi, d)
        worst = float(np.max(np.abs(d)))
        if worst > 1e-9:
            raise ShadowSenseError(f"replay deviation {worst:.3e}")
        return f"finite, replay deviation {worst:.3e}"

    def chk_lyapunov():
        model = state["model"]
        orb = generate_orbit(model, cfg.s, 4000, spinup=cfg.spinup,
                             seed=cfg.seed)
        basis = propagate_homogeneous(orb, model, m=model.dim,
                                      spinup=200, seed=cfg.seed)
        exps = lyapunov_exponents(basis)
        state["orbit4k"] = orb
        state["exponents"] = exps
        npos = int(np.sum(exps > 1e-6))
        m = state["model"].num_unstable
        if npos != m:
            raise ShadowSenseError(
                f"{npos} positive exponents but m={m} "
                f"(exponents: {np.round(exps, 4)})")
        return f"{npos} positive exponents match m={m}"

    def chk_splitting():
        model = state["model"]
        orb = state["orbit4k"]
        tb = propagate_homogeneous(orb, model, spinup=200, seed=cfg.seed)
        ab = propagate_adjoint(orb, model, spinup=200, seed=cfg.seed)
        frames = build_frames(orb, tb, ab)
        ang = frames.min_angle()
        if ang < 1e-3:
            raise ShadowSenseError(f"splitting angle {ang:.3e} too small")
        state["frames"] = (tb, frames)
        return f"min angle {ang:.4f} rad"

    def chk_nilss():
        model = state["model"]
        orb = state["orbit4k"]
        tb, _ = state["frames"]
        lo = tb.valid_window()[0]
        # interface rounding costs eps * lambda_max^L, so cap the segment
        # growth budget at ~e^11 when the configured length is too long
        lam = float(max(state["exponents"][0], 0.1)) \
            if "exponents" in state else np.log(2.0)
        seg = max(2, min(cfg.segment_len, int(11.0 / lam)))
        sol = solve_nilss(orb, model, tb, window=(lo, lo + 2000),
                          segment_len=seg)
        if sol.optimality_residual > 1e-6:
            raise ShadowSenseError(
                f"optimality residual {sol.optimality_residual:.3e}")
        if sol.recurrence_residual > 1e-8:
            raise ShadowSenseError(
                f"recurrence residual {sol.recurrence_residual:.3e}")
        return (f"residuals opt={sol.optimality_residual:.2e}, "
                f"rec={sol.recurrence_residual:.2e} (segment_len={seg})")

    return [("config_fields", chk_config),
            ("declared_m_in_range", chk_m_range),
            ("model_constructible", chk_model),
            ("derivative_consistency", chk_derivatives),
            ("orbit_finite_replay", chk_orbit),
            ("lyapunov_count_matches_m", chk_lyapunov),
            ("splitting_angle", chk_splitting),
            ("nilss_residuals", chk_nilss)]


def cmd_validate(cfg, out=None):
    out = out if out is not None else sys.stdout
    failed = 0
    for name, fn in _checks(cfg):
        try:
            detail = fn()
            print(f"PASS {name}: {detail}", file=out)
        except Exception as e:
            failed += 1
            print(f"FAIL {name}: {e}", file=out)
    total = len(_checks(cfg))
    print(f"{total - failed}/{total} checks passed", file=out)
    return 1 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="shadowsense",
        description="Shadowing-based sensitivity analysis for chaotic maps")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", dest="overrides", action="append",
                       default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")

    p_run = sub.add_parser("run", help="run one analysis, write JSON + CSV")
    add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="re-run while varying one field")
    add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, nargs="+")

    p_val = sub.add_parser("validate",
                           help="check a configuration without a full run")
    add_common(p_val)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.axis, args.values)
        return cmd_validate(cfg)
    except (ConfigError, FileNotFoundError, yaml.YAMLError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ShadowSenseError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
