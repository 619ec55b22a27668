"""Command line runner: one JSON config in, CSV/JSON artifacts and a manifest out."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import check_envelope, check_lower_bound, check_sign_structure, energy_report
from .data import make_data
from .errors import DyadicError, HypothesisViolation, InvalidParamsError
from .estimates import (
    ConstantTrajectory,
    CubeIntegralReport,
    LevelSetStats,
    blowup_functional,
    cube_integral,
    level_set_grid,
    psi_metric,
)
from .galerkin import INVISCID, VISCOUS, IntegratorConfig, integrate
from .io import sha256_file, write_csv, write_json
from .model import ModelParams, compute_constants, stationary_residual
from .selfsimilar import build_selfsimilar, verify_blowup
from .stationary import conditioning_cap, envelope_check, limit_study, reverse_to_solution, shoot

log = logging.getLogger("dyadic")

OUT_ENV = "DYADIC_OUT_DIR"
COMMANDS = ("simulate", "verify", "estimate", "stationary", "selfsimilar",
            "nonuniqueness-demo", "sweep")

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4
EXIT_IO = 5

EXIT_HELP = """exit codes:
  0  all asserted checks passed
  2  hypothesis violation or invalid input (parameters, data, config)
  3  numerical failure (step-size underflow, shooting bracket, precision)
  4  an asserted check failed
  5  I/O failure
"""


@dataclass
class ExperimentConfig:
    command: str
    params: ModelParams | None = None
    n_modes: int = 8
    data: dict = field(default_factory=lambda: {"type": "zero"})
    kind: str = VISCOUS
    integrator: dict = field(default_factory=lambda: {"t_end": 1.0})
    options: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    template: dict = field(default_factory=dict)
    output_dir: str | None = None
    format: str = "csv"
    seed: int | None = None
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        cmd = d.pop("command", None)
        if cmd not in COMMANDS:
            raise InvalidParamsError(f"command must be one of {COMMANDS}, got {cmd!r}")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"lambda", "beta", "command"}
        if unknown:
            raise InvalidParamsError(f"unknown config keys: {sorted(unknown)}")
        params = d.pop("params", None)
        if params is None and "lambda" in d:
            params = {"lambda": d.pop("lambda"), "beta": d.pop("beta")}
        d.pop("lambda", None)
        d.pop("beta", None)
        if params is not None and not isinstance(params, ModelParams):
            params = ModelParams(float(params["lambda"]), float(params["beta"]))
        if cmd not in ("sweep", "selfsimilar") and params is None:
            raise InvalidParamsError(f"command {cmd} needs params")
        cfg = cls(command=cmd, params=params, **d)
        if cfg.format not in ("csv", "json"):
            raise InvalidParamsError("format must be csv or json")
        if cfg.kind not in (VISCOUS, INVISCID):
            raise InvalidParamsError(f"kind must be {VISCOUS} or {INVISCID}")
        return cfg

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["params"] = None if self.params is None else self.params.to_dict()
        return d

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig.from_dict(self.integrator)

    def initial_data(self, n_modes: int | None = None):
        return make_data(self.data, self.params, n_modes or self.n_modes, self.seed)


@dataclass
class RunManifest:
    config: dict
    version: str = __version__
    wall_time: float = 0.0
    verdicts: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    status: str = "ok"
    exit_code: int = EXIT_OK
    error: str | None = None

    def to_dict(self):
        return dict(self.__dict__)


class _Run:
    """Collects artifacts and verdicts for one pipeline."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[Path] = []
        self.verdicts: dict[str, bool] = {}
        self.summary: dict = {}

    def table(self, stem, header, rows):
        if not isinstance(rows, np.ndarray):
            rows = [list(r) for r in rows]
        if self.cfg.format == "json":
            path = self.out / f"{stem}.json"
            rows = rows.tolist() if isinstance(rows, np.ndarray) else rows
            write_json(path, {"columns": list(header), "rows": rows})
        else:
            path = self.out / f"{stem}.csv"
            write_csv(path, header, rows)
        self.files.append(path)
        return path

    def json(self, stem, obj):
        path = self.out / f"{stem}.json"
        write_json(path, obj)
        self.files.append(path)
        return path

    def verdict(self, name, ok):
        self.verdicts[name] = bool(ok)


def _trajectory_table(run, stem, traj):
    header = ["t"] + [f"u_{n}" for n in range(1, traj.n_modes + 1)]
    run.table(stem, header, np.column_stack([traj.times, traj.states]))


# pipelines ------------------------------------------------------------------

def _simulate(run: _Run):
    cfg = run.cfg
    a = cfg.initial_data()
    traj = integrate(cfg.params, a, cfg.integrator_config(), cfg.kind)
    _trajectory_table(run, "trajectory", traj)
    run.summary["n_steps"] = traj.n_steps
    run.summary["blowup_time"] = traj.blowup_time
    if cfg.kind == VISCOUS:
        rep = energy_report(traj)
        run.table("energy", rep.header, rep.rows())
        tol = cfg.options.get("energy_tol", 1e-6)
        run.summary["max_identity_residual"] = rep.max_residual
        run.verdict("energy_identity", rep.max_residual <= tol)
        slack = 100 * traj.config.rel_tol * rep.energy[0]
        run.verdict("l2_bound", rep.max_energy_excess <= slack)
    return traj


def _verify(run: _Run):
    cfg = run.cfg
    p = cfg.params
    consts = compute_constants(p)
    opts = cfg.options
    # gate the constants before spending time on integration
    if "eps2" in opts and opts["eps2"] > consts.eps2_max * (1 + 1e-12):
        raise HypothesisViolation(f"eps2={opts['eps2']} exceeds {consts.eps2_max}")
    if "eps3" in opts and opts["eps3"] > consts.eps3_max * (1 + 1e-12):
        raise HypothesisViolation(f"eps3={opts['eps3']} exceeds {consts.eps3_max}")
    traj = _simulate(run)
    sign = check_sign_structure(traj)
    run.table("sign_structure", ["n", "a_n", "verdict", "tau", "crossings", "returns", "min_value"],
              ([m.mode, m.initial, m.verdict, m.tau, m.crossings, m.returns, m.min_value]
               for m in sign.modes))
    run.verdict("sign_structure", sign.ok)
    K = int(opts.get("K", 1))
    if "eps2" in opts:
        lb = check_lower_bound(traj, float(opts["eps2"]), K)
        run.verdict("lower_bound", lb.ok)
        run.summary["lower_bound"] = lb.__dict__
    if "eps3" in opts:
        ev = check_envelope(traj, float(opts["eps3"]), K)
        run.verdict("envelope", ev.ok)
        run.summary["envelope"] = ev.__dict__
    run.summary["constants"] = consts.to_dict()


def _estimate(run: _Run):
    cfg = run.cfg
    traj = _simulate(run)
    opts = cfg.options
    N = traj.n_modes
    modes = opts.get("level_modes", list(range(1, max(N - 1, 1))))
    levels = opts.get("levels", list(np.geomspace(1e-4, 0.5, 10)))
    if N >= 3 and modes:
        stats = level_set_grid(traj, modes, levels)
        run.table("level_sets", LevelSetStats.header, (s.row() for s in stats))
        run.verdict("level_set_bounds", all(s.ok for s in stats))
    cube_modes = opts.get("cube_modes", list(range(1, N + 1)))
    reps = [cube_integral(traj, n) for n in cube_modes]
    run.table("cube_integrals", CubeIntegralReport.header, (r.row() for r in reps))
    run.verdict("cube_integral_bound", all(r.ok for r in reps))
    if "blowup_eps" in opts:
        run.summary["blowup_functional"] = blowup_functional(traj, float(opts["blowup_eps"]))


def _stationary_json(sol, aux, res):
    return {
        "regime": sol.regime,
        "u": sol.u_param,
        "shooting_parameter": aux.shooting_parameter,
        "parameter_name": aux.parameter_name,
        "bracket_history": [list(h) for h in aux.bracket_history],
        "prefix_length_exact": sol.prefix_length_exact,
        "envelope_constant": sol.envelope_constant,
        "residual": {
            "max_relative": res.max_relative,
            "max_absolute": res.max_absolute,
            "recurrence_max": float(np.max(sol.recurrence_residual())),
        },
    }


def _stationary(run: _Run):
    cfg = run.cfg
    opts = cfg.options
    n = int(opts.get("target_len", 28))
    aux = shoot(cfg.params, n)
    sol = reverse_to_solution(aux, cfg.params)
    res = stationary_residual(cfg.params, sol.a)
    rows = list(sol.rows())
    if sol.e is not None and sol.regime == "supercritical":
        run.table("stationary", ["k", "b_k", "a_k", "envelope_k", "e_k"],
                  (r + (e,) for r, e in zip(rows, sol.e)))
    else:
        run.table("stationary", ["k", "b_k", "a_k", "envelope_k"], rows)
    run.json("stationary", _stationary_json(sol, aux, res))
    env = envelope_check(sol)
    run.verdict("residual", res.max_relative < opts.get("residual_tol", 1e-9))
    run.verdict("envelope", env["ok"])
    run.summary.update(regime=sol.regime, depth=n, b1=float(sol.b[0]), envelope=env)
    if "lengths" in opts:
        study = limit_study(cfg.params, opts["lengths"])
        run.table("limit_study", ["length", "d1", "increment"],
                  ([r["length"], r["d1"], r["increment"]] for r in study["rows"]))
        run.summary["extrapolated_b1"] = study["extrapolated_b1"]
    if "cap_limit" in opts:
        run.summary["conditioning_cap"] = conditioning_cap(cfg.params.u, int(opts["cap_limit"]))


def _selfsimilar(run: _Run):
    cfg = run.cfg
    opts = cfg.options
    kappa = float(opts.get("kappa", cfg.params.kappa if cfg.params else 2.0))
    sol = build_selfsimilar(kappa, int(opts.get("prefix_len", 20)))
    ts = np.linspace(0.0, 0.9, int(opts.get("residual_samples", 100)))
    worst = max(float(np.max(sol.ode_residual(t)[:-1])) for t in ts)
    run.summary["max_ode_residual"] = worst
    run.verdict("ode_residual", worst < 1e-10)
    times = opts.get("times", [0.0, 0.25, 0.5])
    rep = verify_blowup(sol, times)
    run.table("selfsimilar", rep.header, rep.rows())
    # agreement with the truncated system is reported, not asserted
    run.summary.update(
        galerkin_max_abs_diff=rep.max_abs_diff.tolist(),
        l2_gap_lower_bound=rep.l2_gap_lower_bound.tolist(),
        norm_ratio_near_blowup=rep.norm_ratio_near_blowup,
    )


def _nonuniqueness(run: _Run):
    cfg = run.cfg
    p = cfg.params
    opts = cfg.options
    prefix = int(opts.get("prefix_len", 30))
    sol = reverse_to_solution(shoot(p, prefix - 2), p)
    res = stationary_residual(p, sol.a)
    run.table("stationary", ["k", "b_k", "a_k", "envelope_k"], sol.rows())
    icfg = cfg.integrator_config()
    with warnings.catch_warnings():
        # the prefix is longer than the mode cap by design
        warnings.simplefilter("ignore", RuntimeWarning)
        traj = integrate(p, sol.a, icfg, VISCOUS)
    _trajectory_table(run, "trajectory", traj)
    psi = psi_metric(ConstantTrajectory(p, sol.a), traj, prefix)
    run.table("psi", ["t", "psi"], np.column_stack([psi.times, psi.values]))
    e0 = float(np.sum(sol.a**2))
    e1 = float(np.sum(traj.states[-1] ** 2))
    loss = 1.0 - e1 / e0
    psi_end = float(psi.values[-1])
    run.summary.update(stationary_residual=res.max_relative, energy_loss=loss, psi_end=psi_end,
                       t_end=traj.t_end)
    run.verdict("stationary_residual", res.max_relative < 1e-9)
    run.verdict("energy_loss", loss > 0.01)
    run.verdict("psi_positive", psi_end > 1e-6)


PIPELINES = {
    "simulate": _simulate,
    "verify": _verify,
    "estimate": _estimate,
    "stationary": _stationary,
    "selfsimilar": _selfsimilar,
    "nonuniqueness-demo": _nonuniqueness,
}


def _sweep_point(args):
    point_cfg, out = args
    try:
        cfg = ExperimentConfig.from_dict(point_cfg)
    except DyadicError as exc:
        # a bad point is recorded, the sweep goes on
        m = RunManifest(config=point_cfg, status=type(exc).__name__, exit_code=exc.exit_code,
                        error=str(exc))
        return m.to_dict()
    return run(cfg, Path(out)).to_dict()


def _sweep(run_: _Run):
    cfg = run_.cfg
    lams = cfg.grid.get("lambda", [])
    betas = cfg.grid.get("beta", [])
    points = [(lam, beta) for lam in lams for beta in betas]
    jobs = []
    for i, (lam, beta) in enumerate(points):
        d = dict(cfg.template)
        d["params"] = {"lambda": lam, "beta": beta}
        d.setdefault("format", cfg.format)
        if cfg.seed is not None:
            d["seed"] = cfg.seed
        jobs.append((d, str(run_.out / f"point_{i:03d}")))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    header = ["lambda", "beta", "u", "regime", "status", "exit_code", "all_passed", "depth", "b1",
              "error"]
    rows = []
    for (lam, beta), m in zip(points, results):
        try:
            p = ModelParams(lam, beta)
            u, regime = p.u, p.regime
        except DyadicError:
            u, regime = math.nan, "invalid"
        s = m.get("summary", {})
        rows.append([lam, beta, u, regime, m["status"], m["exit_code"],
                     all(m["verdicts"].values()) if m["verdicts"] else m["status"] == "ok",
                     s.get("depth"), s.get("b1"), m.get("error") or ""])
        for f in m["files"]:
            run_.files.append(Path(f["path"]))
    run_.table("regime_map", header, rows)
    run_.verdict("all_points", all(r[5] == EXIT_OK for r in rows))


PIPELINES["sweep"] = _sweep


def run(cfg: ExperimentConfig, out: Path) -> RunManifest:
    """Execute one pipeline, write its artifacts and ``manifest.json`` into ``out``."""
    t0 = time.perf_counter()
    manifest = RunManifest(config=cfg.to_dict())
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        manifest.status, manifest.exit_code, manifest.error = "io_error", EXIT_IO, str(exc)
        return manifest
    r = _Run(cfg, out)
    try:
        PIPELINES[cfg.command](r)
        if r.verdicts and not all(r.verdicts.values()):
            manifest.status, manifest.exit_code = "check_failed", EXIT_CHECK
    except DyadicError as exc:
        manifest.status = type(exc).__name__
        manifest.exit_code = exc.exit_code if exc.exit_code in (2, 3, 4) else 1
        manifest.error = str(exc)
    except OSError as exc:
        manifest.status, manifest.exit_code, manifest.error = "io_error", EXIT_IO, str(exc)
    manifest.verdicts = r.verdicts
    manifest.summary = r.summary
    manifest.files = [{"path": str(f), "sha256": sha256_file(f)} for f in r.files if f.exists()]
    manifest.wall_time = time.perf_counter() - t0
    try:
        write_json(out / "manifest.json", manifest.to_dict())
    except OSError as exc:
        manifest.status, manifest.exit_code, manifest.error = "io_error", EXIT_IO, str(exc)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dyadic",
        description="Experiments on the dyadic shell model: " + ", ".join(COMMANDS) + ".",
        epilog=EXIT_HELP + f"\nThe output directory can also be set with ${OUT_ENV}.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (overrides config and environment)")
    ap.add_argument("--workers", type=int, help="concurrent sweep points")
    ap.add_argument("--seed", type=int, help="seed for random data (overrides config)")
    ap.add_argument("--format", choices=("csv", "json"), help="table format")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    for key in ("workers", "seed", "format"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (DyadicError, TypeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    out = Path(args.out or os.environ.get(OUT_ENV) or cfg.output_dir or "dyadic_out")
    manifest = run(cfg, out)
    log.info("wrote %d files to %s", len(manifest.files), out)
    for name, ok in manifest.verdicts.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if manifest.error:
        print(f"error: {manifest.error}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
