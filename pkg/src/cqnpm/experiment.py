"""Scenario assembly and experiment runs that write CSV/text artifacts."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig
from .core import ConstraintSet, load_cvec, save_cvec
from .forward import CartesianModel, ForwardModel, adjoint_mismatch, write_mask, write_trajectory
from .hessian import EstimatorParams
from .regularizers import make_regularizer
from .scenarios import Phantom, build_model, gen_phantom, gen_smaps, simulate_measurements
from .solvers import ArmijoParams, Problem, SolverTrace, StepsizePolicy, apg, cqnpm, estimate_fstar, gd, pg
from .validation import monte_carlo_expected_cost, validate_theorem1
from .wpm import WpmSettings

logger = logging.getLogger(__name__)

SOLVERS = ("cqnpm", "apg", "pg", "gd")
THEOREM_SOLVERS = ("cqnpm", "pg")
BUNDLED = ("cartesian-quadratic-32", "spiral-hubertv-32", "radial-logtv-32")
ADJOINT_TOL = 1e-10


def bundled_config(name: str) -> ScenarioConfig:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled scenario {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("cqnpm").joinpath("data", f"{name}.cfg").read_text()
    return ScenarioConfig.from_text(text)


def load_config(path_or_name) -> ScenarioConfig:
    """Read a config file, or a bundled scenario by name."""
    path = Path(path_or_name)
    if path.exists():
        cfg = ScenarioConfig.load(path)
        if cfg.reg.anchor_file and not Path(cfg.reg.anchor_file).is_absolute():
            cfg.reg.anchor_file = str(path.parent / cfg.reg.anchor_file)
        return cfg
    if str(path_or_name) in BUNDLED:
        return bundled_config(str(path_or_name))
    raise ConfigError(f"config {path_or_name!r} not found")


@dataclass
class Scenario:
    cfg: ScenarioConfig
    phantom: Phantom
    model: ForwardModel
    y: np.ndarray
    problem: Problem

    @property
    def est(self) -> EstimatorParams:
        e = self.cfg.est
        return EstimatorParams(e.delta, e.theta1, e.theta2, e.m_fallback_tol)

    @property
    def wpm(self) -> WpmSettings:
        return WpmSettings(self.cfg.wpm.eps, self.cfg.wpm.max_inner)

    @property
    def policy(self) -> StepsizePolicy:
        s = self.cfg.solver
        return StepsizePolicy.theory_safe() if s.stepsize == "theory" else StepsizePolicy.fixed(s.alpha)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Generate phantom, coil maps, sampling and noisy data from one seed.

    The forward model must pass the adjoint dot-product test before use.
    """
    cfg.check()
    n, seed = cfg.image.size, cfg.seed
    phantom = gen_phantom(n, seed, cfg.image.phase_scale)
    smaps = gen_smaps(n, cfg.coils)
    a = cfg.acq
    try:
        model = build_model(a.kind, n, smaps, interleaves=a.interleaves, readout=a.readout,
                            spokes=a.spokes, golden=a.golden, accel=a.accel,
                            acs_lines=a.acs_lines, seed=seed + 1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mismatch = adjoint_mismatch(model, seed)
    if mismatch > ADJOINT_TOL:
        raise RuntimeError(f"forward model failed the adjoint test ({mismatch:.3e})")
    y = simulate_measurements(model, phantom.image, cfg.noise.sigma, seed + 2)
    anchor = load_cvec(cfg.reg.anchor_file) if cfg.reg.anchor_file else None
    reg = make_regularizer(cfg.reg.kind, cfg.reg.lam, cfg.reg.delta_h, cfg.reg.eps, anchor)
    prob = Problem(model, y, reg, ConstraintSet(cfg.constraint.radius))
    return Scenario(cfg, phantom, model, y, prob)


def run_solver(scn: Scenario, name: str, K: int | None = None,
               policy: StepsizePolicy | None = None) -> SolverTrace:
    K = K or scn.cfg.solver.K
    policy = policy or scn.policy
    safeguard = scn.cfg.solver.safeguard
    ref = scn.phantom.image
    if name == "cqnpm":
        return cqnpm(scn.problem, None, policy, K, scn.est, scn.wpm, safeguard, x_ref=ref)
    if name == "pg":
        return pg(scn.problem, None, policy, K, scn.wpm, safeguard, x_ref=ref)
    if name == "apg":
        return apg(scn.problem, None, policy, K, scn.wpm, safeguard, x_ref=ref)
    if name == "gd":
        g = scn.cfg.gd
        return gd(scn.problem, None, K, ArmijoParams(g.alpha0, g.shrink, g.c, g.max_halvings), x_ref=ref)
    raise ConfigError(f"unknown solver {name!r}")


def scenario_fstar(scn: Scenario) -> float:
    v = scn.cfg.validate
    return estimate_fstar(scn.problem, scn.wpm, v.fstar_iters, v.fstar_eps)


def _convergence_report(trace: SolverTrace, scn: Scenario, fstar: float) -> tuple[str, bool | None]:
    if trace.solver not in THEOREM_SOLVERS:
        return "applicable=false\nreason=the descent and rate checks cover cqnpm and pg only\n", None
    L = scn.problem.reg.lipschitz()
    try:
        report = validate_theorem1(trace, L, fstar, check_linear=scn.cfg.reg.kind == "quadratic")
    except ValueError as exc:
        return f"refused=true\nreason={exc}\n", False
    return report.to_text(), report.ok


def write_validation(trace: SolverTrace, scn: Scenario, fstar: float, out: Path, tag: str) -> dict:
    """Convergence report and Monte Carlo CSV for one trace; returns a summary dict."""
    text, ok = _convergence_report(trace, scn, fstar)
    (out / f"report_{tag}.txt").write_text(text)
    mc = monte_carlo_expected_cost(trace, fstar, scn.cfg.validate.mc_samples, scn.cfg.seed)
    with open(out / f"mc_{tag}.csv", "w") as fh:
        fh.write("K,mean_cost_gap\n")
        for K, gap in mc:
            fh.write(f"{K},{gap!r}\n")
    return {"validation_ok": ok}


def _summary(trace: SolverTrace) -> dict:
    last = trace.records[-1]
    return {
        "solver": trace.solver,
        "iterations": len(trace.steps),
        "final_cost": last.cost,
        "final_psnr_db": last.psnr_db,
        "wall_time_s": last.wall_time_s,
        "truncated_inner_solves": trace.n_truncated,
    }


def _solve_job(args):
    cfg_text, name = args
    scn = build_scenario(ScenarioConfig.from_text(cfg_text))
    return run_solver(scn, name)


def run_experiment(config, out_dir, mode: str = "run", seed: int | None = None,
                   parallel: bool = False) -> Path:
    """Build the scenario and run one solver (``run``) or all four (``compare``).

    Writes ``trace_<solver>.csv``, ``report_<solver>.txt``, ``mc_<solver>.csv``,
    ``summary.json`` and the effective ``config.cfg`` into ``out_dir``.
    """
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.to_text())
    scn = build_scenario(cfg)

    names = [cfg.solver.name] if mode == "run" else list(SOLVERS)
    if parallel and len(names) > 1:
        with ProcessPoolExecutor() as pool:
            traces = list(pool.map(_solve_job, [(cfg.to_text(), n) for n in names]))
    else:
        traces = [run_solver(scn, n) for n in names]

    fstar = scenario_fstar(scn)
    summary = {"scenario": cfg.name, "mode": mode, "fstar": fstar, "solvers": []}
    for trace in traces:
        trace.to_csv(out / f"trace_{trace.solver}.csv")
        entry = _summary(trace)
        entry.update(write_validation(trace, scn, fstar, out, trace.solver))
        summary["solvers"].append(entry)
        logger.info("%s: final cost %.10g, PSNR %.2f dB", trace.solver,
                    entry["final_cost"], entry["final_psnr_db"])
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return out


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def generate_files(config, out_dir, seed: int | None = None) -> Path:
    """Write phantom, coil maps, sampling pattern and k-space data."""
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    scn = build_scenario(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cvec(out / "phantom.cvec", scn.phantom.image)
    for c, smap in enumerate(scn.model.smaps):
        save_cvec(out / f"smap_{c:02d}.cvec", smap)
    if isinstance(scn.model, CartesianModel):
        write_mask(out / "mask.pbm", scn.model.mask)
    else:
        write_trajectory(out / "trajectory.csv", scn.model.coords)
    save_cvec(out / "kspace.cvec", scn.y)
    (out / "config.cfg").write_text(cfg.to_text())
    return out


def validate_trace(trace_path, config, out_dir, fstar: float | None = None) -> dict:
    """Convergence report and Monte Carlo expectation for an existing trace CSV."""
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config)
    scn = build_scenario(cfg)
    tag = Path(trace_path).stem.removeprefix("trace_")
    trace = SolverTrace.from_csv(trace_path, tag)
    if fstar is None or math.isnan(fstar):
        fstar = scenario_fstar(scn)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {"fstar": fstar, **write_validation(trace, scn, fstar, out, tag)}
