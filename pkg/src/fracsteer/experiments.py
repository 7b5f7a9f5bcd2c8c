"""Configuration loading, presets and experiment runners behind the CLI.

A configuration is a YAML document::

    preset: heat            # optional base document; keys below override it
    grid: 200               # number of uniform time steps M
    a_grid: {start: 1.0, stop: 1.0e-6, count: 7}   # or an explicit list
    output: sweep.csv
    problem:
      alpha: 0.75
      horizon: 1.0
      eigenvalues: [1, 4, 9]
      b_coeffs: [1.0, -0.5, 0.33]
      target: [1.0, 0.0, 0.1]
      nonlocal: {coefficients: [0.1], times: [0.5]}
      nonsmooth: {kind: abs, bound: 0.1}
    synthesis: {max_iters: 50, tol: 1.0e-10, relaxation: 1.0, rule: minimal_norm}

Unknown keys are rejected and every validation message names the offending
key.
"""

import copy
import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import yaml

from . import __version__
from .controllability import (assemble_gramian, regularization_sweep, solve_with_control,
                              synthesize_control, SynthesisProblem)
from .errors import ConfigError, ValidationError
from .fractional_oracle import TimeGrid, WeightedSamples, step_scalar_fode
from .mild_solver import KernelEvaluator, evaluate_mild_solution, reconstruct_initial_functional
from .system_model import (ControlOperator, NonlocalCondition, ProblemConfig, SpectralOperator,
                           SELECTION_RULES, abs_term, check_actuation_nondegeneracy,
                           check_assumption_smallness, check_growth_ratio, power_term,
                           saturated_abs_term, zero_term)

CSV_COLUMNS = ("a", "terminal_error", "control_energy", "iterations", "converged")

_TOP_KEYS = {"preset", "grid", "a_grid", "output", "problem", "synthesis", "simulate", "oracle"}
_PROBLEM_KEYS = {"alpha", "horizon", "eigenvalues", "mode_labels", "b_coeffs", "target",
                 "nonlocal", "nonsmooth", "semigroup_bound", "holder_gamma",
                 "override_smallness"}
_NONLOCAL_KEYS = {"coefficients", "times"}
_NONSMOOTH_KEYS = {"kind", "weights", "bound", "cap", "exponent"}
_SYNTHESIS_KEYS = {"max_iters", "tol", "relaxation", "rule"}
_SIMULATE_KEYS = {"control_amplitude", "control_frequency"}
_ORACLE_KEYS = {"mode", "grids"}


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def heat_preset(modes=8):
    """Heat conduction on ``(0, pi)`` with ``e_n = sqrt(2/pi) sin(n y)``.

    Actuator profile ``b(y) = y`` and target profile ``y (pi - y)``; both are
    projected analytically onto the sine modes.
    """
    n = np.arange(1, modes + 1)
    scale = math.sqrt(2.0 / math.pi)
    b = scale * math.pi * (-1.0) ** (n + 1) / n
    target = np.where(n % 2 == 1, scale * 4.0 / n.astype(float) ** 3, 0.0)
    return {
        "grid": 200,
        "a_grid": {"start": 1.0, "stop": 1.0e-6, "count": 7},
        "problem": {
            "alpha": 0.75,
            "horizon": 1.0,
            "eigenvalues": [float(k * k) for k in n],
            "mode_labels": [f"√(2/π)sin({k}y)" for k in n],
            "b_coeffs": b.tolist(),
            "target": target.tolist(),
            "nonlocal": {"coefficients": [0.1, 0.05], "times": [0.25, 0.5]},
            "nonsmooth": {"kind": "abs", "bound": 0.1},
            "semigroup_bound": 1.0,
            "holder_gamma": 0.0,
        },
    }


def scalar_preset():
    """One mode, no nonlocal terms, no nonsmooth term: the closed-form case."""
    return {
        "grid": 200,
        "a_grid": {"start": 1.0, "stop": 1.0e-6, "count": 7},
        "problem": {
            "alpha": 0.75,
            "horizon": 1.0,
            "eigenvalues": [1.0],
            "b_coeffs": [1.0],
            "target": [1.0],
            "nonsmooth": {"kind": "zero"},
        },
    }


PRESETS = {"heat": heat_preset, "scalar": scalar_preset}


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    problem: ProblemConfig
    target: np.ndarray
    grid_size: int
    a_grid: tuple
    output_path: Optional[str]
    preset: Optional[str]
    override_smallness: bool
    synthesis: dict
    simulate: dict
    oracle: dict
    resolved: dict

    @property
    def config_hash(self):
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def time_grid(self):
        return TimeGrid.uniform_grid(self.problem.horizon_b, self.grid_size)

    def kernel(self):
        return KernelEvaluator.build(self.problem, override=self.override_smallness)


# Sections replaced wholesale when a document overrides a preset.
_ATOMIC = {"nonlocal", "nonsmooth", "a_grid"}


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in _ATOMIC and isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _reject_unknown(section, allowed, prefix):
    if not isinstance(section, dict):
        raise ConfigError(f"{prefix or 'document'}: expected a mapping")
    extra = sorted(set(section) - allowed)
    if extra:
        name = f"{prefix}.{extra[0]}" if prefix else extra[0]
        raise ConfigError(f"unknown key '{name}'")


def _as_float(val, where):
    # PyYAML reads exponent-only literals such as 1e-6 as strings
    if isinstance(val, bool):
        raise ConfigError(f"{where}: expected a number, got {val!r}")
    if isinstance(val, (int, float)):
        return float(val)
    if isinstance(val, str):
        try:
            return float(val)
        except ValueError:
            pass
    raise ConfigError(f"{where}: expected a number, got {val!r}")


def _number(section, key, prefix, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"{prefix}.{key}: required")
        return default
    return _as_float(section[key], f"{prefix}.{key}")


def _vector(section, key, prefix, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"{prefix}.{key}: required")
        return default
    val = section[key]
    if not isinstance(val, list):
        raise ConfigError(f"{prefix}.{key}: expected a list of numbers")
    return [_as_float(v, f"{prefix}.{key}[{k}]") for k, v in enumerate(val, start=1)]


def _build_nonsmooth(spec, modes):
    _reject_unknown(spec, _NONSMOOTH_KEYS, "problem.nonsmooth")
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return zero_term()
    if kind not in ("abs", "saturated_abs", "power"):
        raise ConfigError(f"problem.nonsmooth.kind: unknown kind {kind!r} "
                          "(expected zero, abs, saturated_abs or power)")
    if "weights" in spec and "bound" in spec:
        raise ConfigError("problem.nonsmooth: give either weights or bound, not both")
    if "bound" in spec:
        bound = _number(spec, "bound", "problem.nonsmooth")
        weights = np.full(modes, bound / math.sqrt(modes))
    else:
        raw = spec.get("weights")
        weights = (np.array(_vector(spec, "weights", "problem.nonsmooth")) if isinstance(raw, list)
                   else np.full(modes, _as_float(raw, "problem.nonsmooth.weights")))
        if weights.size != modes:
            raise ConfigError(f"problem.nonsmooth.weights: expected {modes} entries")
    if kind == "abs":
        return abs_term(weights)
    if kind == "saturated_abs":
        return saturated_abs_term(weights, _number(spec, "cap", "problem.nonsmooth"))
    return power_term(weights, _number(spec, "exponent", "problem.nonsmooth"))


def _a_grid(raw):
    if isinstance(raw, dict):
        _reject_unknown(raw, {"start", "stop", "count"}, "a_grid")
        count = raw.get("count")
        if not isinstance(count, int) or count < 1:
            raise ConfigError("a_grid.count: expected a positive integer")
        start = _number(raw, "start", "a_grid")
        stop = _number(raw, "stop", "a_grid")
        if not (start > 0 and stop > 0):
            raise ConfigError("a_grid: start and stop must be positive")
        if count == 1:
            return (start,)
        exps = np.linspace(math.log10(start), math.log10(stop), count)
        # round away representation noise so that 10^-1 prints as 1e-01
        return tuple(float(f"{10.0 ** e:.15g}") for e in exps)
    if not isinstance(raw, list):
        raise ConfigError("a_grid: expected a list or a {start, stop, count} mapping")
    vals = _vector({"a_grid": raw}, "a_grid", "config")
    if not vals:
        raise ConfigError("a_grid must be nonempty")
    if any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("a_grid: values must be positive and strictly decreasing")
    return tuple(vals)


def _snap_times(times, horizon, steps):
    """Replace each ``t_k`` by the grid node it coincides with (within 1e-12)."""
    nodes = horizon * np.arange(steps + 1) / steps
    snapped = []
    for k, tk in enumerate(times, start=1):
        idx = int(np.argmin(np.abs(nodes - tk)))
        if abs(nodes[idx] - tk) > 1e-12:
            raise ConfigError(f"problem.nonlocal.times[{k}]: t_k = {tk} is not a node of the "
                              f"uniform grid with M = {steps} steps")
        snapped.append(float(nodes[idx]))
    return snapped


def build_config(doc, preset=None, grid=None, enforce_smallness=True):
    """Validate a parsed document (optionally on top of a preset) into an ExperimentConfig.

    With ``enforce_smallness=False`` a violated smallness assumption is left
    for :func:`run_verify` to report instead of being rejected here.
    """
    if doc is None:
        doc = {}
    _reject_unknown(doc, _TOP_KEYS, "")
    name = preset or doc.get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"preset: unknown preset {name!r} (known: {', '.join(PRESETS)})")
        doc = _merge(PRESETS[name](), {k: v for k, v in doc.items() if k != "preset"})
        doc["preset"] = name
    if grid is not None:
        doc["grid"] = int(grid)
    steps = doc.get("grid", 200)
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 5:
        raise ConfigError(f"grid: expected an integer M >= 5, got {steps!r}")

    prob = doc.get("problem")
    if prob is None:
        raise ConfigError("problem: required")
    _reject_unknown(prob, _PROBLEM_KEYS, "problem")
    alpha = _number(prob, "alpha", "problem")
    if not (0.5 < alpha <= 1.0):
        raise ConfigError(f"problem.alpha: 1/2 < α ≤ 1 is required, got {alpha}")
    horizon = _number(prob, "horizon", "problem", 1.0)
    lam = _vector(prob, "eigenvalues", "problem")
    modes = len(lam)
    nl = prob.get("nonlocal", {}) or {}
    _reject_unknown(nl, _NONLOCAL_KEYS, "problem.nonlocal")
    coeffs = _vector(nl, "coefficients", "problem.nonlocal", [])
    times = _vector(nl, "times", "problem.nonlocal", [])
    for k, ck in enumerate(coeffs, start=1):
        if ck == 0.0:
            raise ConfigError(f"problem.nonlocal.coefficients[{k}]: c_k ≠ 0 is required")
    times = _snap_times(times, horizon, steps)
    labels = prob.get("mode_labels", [])
    target = np.array(_vector(prob, "target", "problem"))
    if target.size != modes:
        raise ConfigError(f"problem.target: expected {modes} entries, got {target.size}")
    try:
        cfg = ProblemConfig(
            alpha=alpha,
            horizon_b=horizon,
            operator=SpectralOperator(lam, tuple(labels)),
            control=ControlOperator(_vector(prob, "b_coeffs", "problem")),
            nonlocal_=NonlocalCondition(coeffs, times),
            nonsmooth=_build_nonsmooth(prob.get("nonsmooth", {"kind": "zero"}), modes),
            semigroup_bound_M=_number(prob, "semigroup_bound", "problem", 1.0),
            holder_gamma=_number(prob, "holder_gamma", "problem", 0.0),
        )
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("problem.") else f"problem.{msg}") from None
    override = bool(prob.get("override_smallness", False)) or not enforce_smallness
    if not override:
        rep = check_assumption_smallness(cfg)
        if not rep.holds:
            raise ConfigError(
                f"problem.nonlocal: smallness violated: Σ|c_k t_k^(α−1)| = {rep.lhs:.10g} "
                f"≥ Γ(α)/M = {rep.rhs:.10g} (set problem.override_smallness to proceed)")

    syn = doc.get("synthesis", {}) or {}
    _reject_unknown(syn, _SYNTHESIS_KEYS, "synthesis")
    if syn.get("rule", "minimal_norm") not in SELECTION_RULES:
        raise ConfigError(f"synthesis.rule: expected one of {SELECTION_RULES}")
    sim = doc.get("simulate", {}) or {}
    _reject_unknown(sim, _SIMULATE_KEYS, "simulate")
    orc = doc.get("oracle", {}) or {}
    _reject_unknown(orc, _ORACLE_KEYS, "oracle")
    a_grid = _a_grid(doc.get("a_grid", [1.0]))
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string")
    return ExperimentConfig(
        problem=cfg,
        target=target,
        grid_size=steps,
        a_grid=a_grid,
        output_path=output,
        preset=name,
        override_smallness=override,
        synthesis=dict(syn),
        simulate=dict(sim),
        oracle=dict(orc),
        resolved=doc,
    )


def load_config(path=None, preset=None, grid=None, enforce_smallness=True):
    """Read and validate a YAML configuration file (or only a preset when ``path`` is None)."""
    doc = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    elif preset is None:
        raise ConfigError("either a configuration file or --preset is required")
    return build_config(doc, preset=preset, grid=grid, enforce_smallness=enforce_smallness)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

class Report(NamedTuple):
    text: str
    passed: bool


def run_verify(cfg):
    """Smallness, growth and actuation checks as a pass/fail report."""
    p = cfg.problem
    lines = []
    small = check_assumption_smallness(p)
    lines.append(f"[{'PASS' if small.holds else 'FAIL'}] nonlocal smallness: "
                 f"Σ|c_k t_k^(α−1)| = {small.lhs:.10g} vs Γ(α)/M = {small.rhs:.10g}")
    try:
        growth = check_growth_ratio(p, np.logspace(-3, 6, 46))
        lines.append(f"[{'PASS' if growth.holds else 'FAIL'}] growth ratio: "
                     f"rho ≈ {growth.rho_estimate:.6g} (|P| = {growth.p_norm:.6g})")
        growth_ok = growth.holds
    except ValidationError as exc:
        lines.append(f"[FAIL] growth ratio: {exc}")
        growth_ok = False
    bound = p.nonsmooth.uniform_bound_L
    lines.append("[INFO] uniform bound on the subdifferential: " + (f"L = {bound:.6g}" if bound is not None
                                                     else "not declared"))
    act = check_actuation_nondegeneracy(p)
    if act.zero_modes:
        lines.append("[FAIL] actuation ⟨b, e_n⟩ ≠ 0: zero in modes "
                     + ", ".join(str(n) for n in act.zero_modes))
    else:
        lines.append(f"[PASS] actuation ⟨b, e_n⟩ ≠ 0 for all {p.truncation_N} modes")
    lines.append("[INFO] compact semigroup and measurable selection: declared, not checkable")
    passed = small.holds and growth_ok and not act.zero_modes
    lines.append("verification " + ("passed" if passed else "failed"))
    return Report("\n".join(lines), passed)


def _synthesis_options(cfg):
    return {k: cfg.synthesis[k] for k in _SYNTHESIS_KEYS if k in cfg.synthesis}


def run_sweep(cfg):
    """Regularization sweep over ``cfg.a_grid``; returns the rows."""
    K = cfg.kernel()
    return regularization_sweep(K, cfg.target, cfg.a_grid, cfg.time_grid(),
                                **_synthesis_options(cfg))


def run_synthesize(cfg, a):
    K = cfg.kernel()
    prob = SynthesisProblem(cfg.target, float(a), **_synthesis_options(cfg))
    return synthesize_control(K, prob, cfg.time_grid(), assemble_gramian(K))


def run_simulate(cfg):
    """State under the prescribed control ``u(t) = A cos(omega t)``."""
    K = cfg.kernel()
    grid = cfg.time_grid()
    amp = float(cfg.simulate.get("control_amplitude", 1.0))
    omega = float(cfg.simulate.get("control_frequency", 0.0))
    u = WeightedSamples(grid, amp * np.cos(omega * grid.nodes), 1.0)
    opts = _synthesis_options(cfg)
    opts.pop("max_iters", None)
    sol = solve_with_control(K, u, grid, max_iters=cfg.synthesis.get("max_iters", 50), **opts)
    init = reconstruct_initial_functional(sol.trajectory, cfg.problem)
    return sol, init


def _single_mode_kernel(alpha, lam):
    cfg = ProblemConfig(alpha, 1.0, SpectralOperator([lam]), ControlOperator([1.0]),
                        NonlocalCondition(), zero_term())
    return KernelEvaluator.build(cfg)


def oracle_refinement(alpha, lam, grids):
    """Mild formula vs time-stepper for ``u = 1`` on successively finer grids."""
    K = _single_mode_kernel(alpha, lam)
    errors = []
    for steps in grids:
        grid = TimeGrid.uniform_grid(1.0, steps)
        mild = evaluate_mild_solution(K, WeightedSamples(grid, np.ones(steps + 1), 1.0), None, grid)
        ref = step_scalar_fode(alpha, lam, lambda t: 1.0, 0.0, grid)
        w = mild.weighted_modes[0]
        errors.append(float(np.max(np.abs(w - ref.weighted_values)) / np.max(np.abs(w))))
    orders = [math.log2(e0 / e1) if e1 > 0 else math.inf for e0, e1 in zip(errors, errors[1:])]
    return errors, orders


def run_oracle_check(cfg, finest=None):
    """Cross-validate the mild formula against the independent stepper."""
    p = cfg.problem
    mode = int(cfg.oracle.get("mode", 1))
    if not (1 <= mode <= p.truncation_N):
        raise ConfigError(f"oracle.mode: expected 1..{p.truncation_N}, got {mode}")
    lam = float(p.lam[mode - 1])
    grids = cfg.oracle.get("grids")
    if finest is not None:
        grids = [finest // 4, finest // 2, finest]
    grids = [int(g) for g in (grids or [500, 1000, 2000])]
    lines = [f"single-mode check: α = {p.alpha}, λ = {lam}, u ≡ 1, no nonlocal terms"]
    errors, orders = oracle_refinement(p.alpha, lam, grids)
    for steps, err in zip(grids, errors):
        lines.append(f"  M = {steps:6d}  weighted sup relative error {err:.3e}")
    lines.append("  observed orders: " + ", ".join(f"{o:.3f}" for o in orders))
    ok = errors[-1] <= 1e-3 and all(o >= 0.9 for o in orders)

    # integer-order reduction against the variation-of-constants formula
    steps = grids[-1]
    grid = TimeGrid.uniform_grid(1.0, steps)
    t = grid.nodes
    exact = (1.0 - np.exp(-lam * t)) / lam if lam > 0 else t.copy()
    K1 = _single_mode_kernel(1.0, lam)
    mild = evaluate_mild_solution(K1, WeightedSamples(grid, np.ones(steps + 1), 1.0), None, grid)
    step = step_scalar_fode(1.0, lam, lambda s: 1.0, 0.0, grid)
    e_mild = float(np.max(np.abs(mild.weighted_modes[0] - exact)))
    e_step = float(np.max(np.abs(step.weighted_values - exact)))
    lines.append(f"α = 1 reduction: mild error {e_mild:.3e}, stepper error {e_step:.3e}")
    ok = ok and e_mild <= 1e-8

    # free evolution of a seeded initial functional; exact on any grid
    grid = TimeGrid.uniform_grid(1.0, 200)
    K0 = _single_mode_kernel(p.alpha, 0.0)
    seed = 1.0
    free = evaluate_mild_solution(K0, None, None, grid, initial_functional=np.array([seed]))
    step0 = step_scalar_fode(p.alpha, 0.0, lambda s: 0.0, seed, grid)
    expect = seed / math.gamma(p.alpha)
    e_free = max(float(np.max(np.abs(free.weighted_modes[0] - expect))),
                 float(np.max(np.abs(step0.weighted_values - expect))))
    lines.append(f"free evolution c·t^(α−1)/Γ(α): max weighted deviation {e_free:.3e}")
    ok = ok and e_free <= 1e-12
    lines.append("oracle check " + ("passed" if ok else "failed"))
    return Report("\n".join(lines), ok)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(value):
    return f"{value:.16e}"


def format_table(rows, cfg, timestamp=None):
    """Render sweep rows as CSV text with a commented metadata header."""
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [
        f"# fracsteer {__version__}",
        f"# config_sha256: {cfg.config_hash}",
        f"# grid_size: {cfg.grid_size}",
        f"# generated: {stamp}",
        ",".join(CSV_COLUMNS),
    ]
    for row in rows:
        lines.append(",".join([_fmt(row.a), _fmt(row.terminal_error), _fmt(row.control_energy),
                               str(int(row.iterations)), "true" if row.converged else "false"]))
    return "\n".join(lines) + "\n"


def format_trajectory(traj, cfg, timestamp=None):
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    n = traj.weighted_modes.shape[0]
    lines = [
        f"# fracsteer {__version__}",
        f"# config_sha256: {cfg.config_hash}",
        f"# grid_size: {cfg.grid_size}",
        f"# generated: {stamp}",
        "# columns w_n hold t^(1-alpha) x_n(t); the row t=0 is the continuous extension",
        ",".join(["t"] + [f"w_{k}" for k in range(1, n + 1)]),
    ]
    for i, t in enumerate(traj.grid.nodes):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in traj.weighted_modes[:, i]]))
    return "\n".join(lines) + "\n"


def write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")
