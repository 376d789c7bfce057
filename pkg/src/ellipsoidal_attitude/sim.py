"""Scenario-driven simulation and estimation runs.

A scenario is a JSON document (see ``docs/scenario.schema.json``). Ground
truth comes from the variational integrator, measurements are corrupted by
errors drawn inside their bound ellipsoids, and the filter is run over the
whole measurement schedule.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import AttitudeState, InertiaParams, PendulumPotential, Potential, ZeroPotential, propagate
from .ellipsoid import EllipsoidRn, StateEllipsoid, quadratic_form, sample_in, state_deviation
from .errors import EstimationError, ScenarioError
from .filter import DEFAULT_C, ConvergenceReport, MeasurementBundle, filter_step
from .so3 import exp_so3, geodesic_distance, is_spd
from .wahba import DirectionSet

INFLATION = 1.05
NOISE_MODES = ("interior", "boundary")
BUNDLED = ("pendulum_baseline", "contraction_demo")


@dataclass(frozen=True)
class Scenario:
    name: str
    inertia: InertiaParams
    potential: Potential
    dirs: DirectionSet
    truth0: AttitudeState
    prior: StateEllipsoid
    S_list: tuple
    T: np.ndarray
    l: int
    measurement_count: int
    seed: int
    noise_mode: str = "interior"
    bound_decay: float = 1.0
    c: float = DEFAULT_C
    q: float | None = None
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def bounds_at(self, instant: int) -> tuple[list, np.ndarray]:
        """Direction and gyro error bounds at measurement ``instant`` (1-based)."""
        s = self.bound_decay ** (instant - 1)
        return [s * S for S in self.S_list], s * self.T

    def config_hash(self) -> str:
        doc = dict(self.raw)
        doc["_effective"] = {"seed": self.seed, "noise_mode": self.noise_mode, "c": self.c, "q": self.q}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def bundled_scenario_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUNDLED:
        raise ScenarioError(f"no bundled scenario named {name!r}", "scenario")
    return Path(str(resources.files("ellipsoidal_attitude") / "data" / f"{stem}.json"))


def resolve_scenario_path(path) -> Path:
    """Use ``path`` if it exists, else fall back to a bundled fixture of that name."""
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in BUNDLED and p.parent == Path("."):
        return bundled_scenario_path(stem)
    raise ScenarioError(f"scenario file not found: {path}", "scenario")


def _get(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ScenarioError("missing required field", f"{where}{key}")
    return doc[key]


def _matrix(value, shape, name: str, spd: bool = False) -> np.ndarray:
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("not a numeric array", name) from None
    if M.shape != shape:
        raise ScenarioError(f"expected shape {shape}, got {M.shape}", name)
    if not np.all(np.isfinite(M)):
        raise ScenarioError("non-finite entries", name)
    if spd and not is_spd(M):
        raise ScenarioError("must be symmetric positive definite", name)
    return M


def _potential(cfg: dict) -> Potential:
    kind = _get(cfg, "type", "potential.")
    if kind == "zero":
        return ZeroPotential()
    if kind == "pendulum":
        try:
            return PendulumPotential(
                float(_get(cfg, "mass_kg", "potential.")),
                float(_get(cfg, "gravity_m_s2", "potential.")),
                _matrix(_get(cfg, "rho_m", "potential."), (3,), "potential.rho_m"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc), "potential") from None
    raise ScenarioError(f"unknown potential type {kind!r}", "potential.type")


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from its JSON document."""
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be an object")
    J = _matrix(_get(doc, "J_kg_m2"), (3, 3), "J_kg_m2", spd=True)
    try:
        inertia = InertiaParams(J, float(_get(doc, "h_seconds")))
    except ValueError as exc:
        raise ScenarioError(str(exc), "J_kg_m2/h_seconds") from None

    E = np.array(_get(doc, "reference_directions"), dtype=float)
    if E.ndim != 2 or E.shape[1] != 3 or E.shape[0] < 2:
        raise ScenarioError("expected a list of at least two 3-vectors", "reference_directions")
    E = (E / np.linalg.norm(E, axis=1, keepdims=True)).T
    m = E.shape[1]
    weights = doc.get("weights", [1.0] * m)
    try:
        dirs = DirectionSet(E, weights)
    except (ValueError, EstimationError) as exc:
        raise ScenarioError(str(exc), "reference_directions/weights") from None

    truth = _get(doc, "truth")
    truth0 = AttitudeState(
        exp_so3(_matrix(_get(truth, "C0_rotvec_rad", "truth."), (3,), "truth.C0_rotvec_rad")),
        _matrix(_get(truth, "omega0_rad_s", "truth."), (3,), "truth.omega0_rad_s"),
    )
    est = _get(doc, "estimate")
    center = AttitudeState(
        exp_so3(_matrix(_get(est, "C0_rotvec_rad", "estimate."), (3,), "estimate.C0_rotvec_rad")),
        _matrix(_get(est, "omega0_rad_s", "estimate."), (3,), "estimate.omega0_rad_s"),
    )
    P0 = _matrix(_get(est, "P0"), (6, 6), "P0", spd=True)
    prior = StateEllipsoid(center, P0)
    if quadratic_form(P0, state_deviation(center, truth0)) > 1.0:
        raise ScenarioError("initial truth lies outside the initial uncertainty ellipsoid", "P0")

    noise = _get(doc, "noise")
    S_raw = _get(noise, "S_rad2", "noise.")
    S_arr = np.array(S_raw, dtype=float)
    if S_arr.shape == (3, 3):
        S_list = tuple(S_arr.copy() for _ in range(m))
    elif S_arr.shape == (m, 3, 3):
        S_list = tuple(S_arr)
    else:
        raise ScenarioError("expected one 3x3 matrix or one per direction", "noise.S_rad2")
    for i, S in enumerate(S_list):
        _matrix(S, (3, 3), f"noise.S_rad2[{i}]", spd=True)
    T = _matrix(_get(noise, "T_rad2_s2", "noise."), (3, 3), "noise.T_rad2_s2", spd=True)
    mode = noise.get("mode", "interior")
    if mode not in NOISE_MODES:
        raise ScenarioError(f"must be one of {NOISE_MODES}", "noise.mode")
    decay = float(noise.get("bound_decay_per_instant", 1.0))
    if not 0.0 < decay <= 1.0:
        raise ScenarioError("must lie in (0, 1]", "noise.bound_decay_per_instant")

    l = _get(doc, "steps_between_measurements")
    n = _get(doc, "measurement_count")
    seed = _get(doc, "seed")
    for name, v in (("steps_between_measurements", l), ("measurement_count", n)):
        if not isinstance(v, int) or v < 1:
            raise ScenarioError("must be a positive integer", name)
    if not isinstance(seed, int) or seed < 0:
        raise ScenarioError("must be a non-negative integer", "seed")
    conv = doc.get("convergence", {})
    c = float(conv.get("c", DEFAULT_C))
    q = conv.get("q")
    if not 0.0 < c < 1.0:
        raise ScenarioError("must lie in (0, 1)", "convergence.c")
    if q is not None and not float(q) > 0.0:
        raise ScenarioError("must be positive", "convergence.q")

    return Scenario(
        name=str(doc.get("name", "scenario")),
        inertia=inertia,
        potential=_potential(_get(doc, "potential")),
        dirs=dirs,
        truth0=truth0,
        prior=prior,
        S_list=S_list,
        T=T,
        l=l,
        measurement_count=n,
        seed=seed,
        noise_mode=mode,
        bound_decay=decay,
        c=c,
        q=None if q is None else float(q),
        raw=doc,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises:
        ScenarioError: missing file, JSON syntax error (with line and
            column) or an invalid field (named in the message).
    """
    p = resolve_scenario_path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}", str(p)) from None
    return scenario_from_dict(doc)


def simulate_truth(s: Scenario) -> list[AttitudeState]:
    """True trajectory with ``l * measurement_count + 1`` states."""
    return propagate(s.truth0, s.inertia, s.potential, s.l * s.measurement_count)


def corrupt_measurements(truth: AttitudeState, s: Scenario, instant: int) -> MeasurementBundle:
    """Measurements of ``truth`` with errors drawn inside their bounds.

    Direction ``i`` is measured as ``exp_so3(-nu_i) @ C^T e_i`` and the gyro
    reads ``w - upsilon``. Each draw uses its own generator seeded by
    ``(seed, instant, i)``, with ``i = m`` for the gyro.
    """
    S_list, T = s.bounds_at(instant)
    boundary = s.noise_mode == "boundary"
    m = s.dirs.m
    cols = []
    for i in range(m):
        nu = sample_in(EllipsoidRn(np.zeros(3), S_list[i]), 1, np.random.default_rng([s.seed, instant, i]), boundary)[0]
        b = truth.C.T @ s.dirs.E[:, i]
        b = exp_so3(-nu) @ b
        cols.append(b / np.linalg.norm(b))
    ups = sample_in(EllipsoidRn(np.zeros(3), T), 1, np.random.default_rng([s.seed, instant, m]), boundary)[0]
    return MeasurementBundle(s.dirs, np.column_stack(cols), truth.omega - ups, S_list, T)


@dataclass(frozen=True)
class RunRecord:
    instant: int
    step: int
    time_s: float
    truth: AttitudeState
    estimate: StateEllipsoid
    attitude_error_rad: float
    omega_error_rad_s: float
    contained: bool
    report: ConvergenceReport
    wall_time_s: float

    @property
    def trace_P(self) -> float:
        return float(np.trace(self.estimate.P))


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    status: str
    error: str | None
    measurement_count: int
    completed_instants: int
    total_steps: int
    seed: int
    config_hash: str
    noise_mode: str
    inflation: float
    final_attitude_error_rad: float | None
    final_omega_error_rad_s: float | None
    max_trace_P: float | None
    min_trace_P: float | None
    containment_rate: float | None
    contraction_satisfied_count: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def run_estimation(s: Scenario, inflation: float = INFLATION) -> tuple[list[RunRecord], RunSummary]:
    """Run the filter across the measurement schedule of ``s``.

    A filter failure stops the run; the records gathered so far are returned
    and the summary carries ``status="aborted"`` and the error message.
    """
    traj = simulate_truth(s)
    est = s.prior
    records: list[RunRecord] = []
    error = None
    for k in range(1, s.measurement_count + 1):
        step = k * s.l
        truth = traj[step]
        bundle = corrupt_measurements(truth, s, k)
        t0 = time.perf_counter()
        try:
            est, report = filter_step(est, s.l, s.inertia, s.potential, bundle, q=s.q, c=s.c)
        except EstimationError as exc:
            error = f"instant {k}: {exc}"
            break
        wall = time.perf_counter() - t0
        x = state_deviation(est.center, truth)
        records.append(
            RunRecord(
                instant=k,
                step=step,
                time_s=step * s.inertia.h,
                truth=truth,
                estimate=est,
                attitude_error_rad=geodesic_distance(est.center.C, truth.C),
                omega_error_rad_s=float(np.linalg.norm(est.center.omega - truth.omega)),
                contained=quadratic_form(est.P, x) <= inflation,
                report=report,
                wall_time_s=wall,
            )
        )
    return records, summarize(s, records, error, inflation)


def summarize(s: Scenario, records: list[RunRecord], error: str | None, inflation: float = INFLATION) -> RunSummary:
    traces = [r.trace_P for r in records]
    last = records[-1] if records else None
    return RunSummary(
        scenario=s.name,
        status="aborted" if error else "ok",
        error=error,
        measurement_count=s.measurement_count,
        completed_instants=len(records),
        total_steps=s.l * s.measurement_count,
        seed=s.seed,
        config_hash=s.config_hash(),
        noise_mode=s.noise_mode,
        inflation=inflation,
        final_attitude_error_rad=last.attitude_error_rad if last else None,
        final_omega_error_rad_s=last.omega_error_rad_s if last else None,
        max_trace_P=max(traces) if traces else None,
        min_trace_P=min(traces) if traces else None,
        containment_rate=sum(r.contained for r in records) / len(records) if records else None,
        contraction_satisfied_count=sum(r.report.satisfied for r in records),
    )


def _mat_cols(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}{j}" for i in range(n) for j in range(n)]


RECORD_COLUMNS = (
    ["instant", "step", "time_s"]
    + _mat_cols("truth_C", 3)
    + ["truth_omega_x", "truth_omega_y", "truth_omega_z"]
    + _mat_cols("est_C", 3)
    + ["est_omega_x", "est_omega_y", "est_omega_z"]
    + ["trace_P", "attitude_error_rad", "omega_error_rad_s", "contained"]
    + ["conv_lhs", "conv_rhs", "conv_lambda_min", "conv_kappa", "conv_chi", "conv_c", "q_star", "conv_satisfied"]
    + ["trace_P_m", "trace_P_f"]
    + _mat_cols("P", 6)
)
TRUTH_COLUMNS = ["step", "time_s"] + _mat_cols("C", 3) + ["omega_x", "omega_y", "omega_z"]
SUMMARY_KEYS = tuple(RunSummary.__dataclass_fields__)


def _f(x: float) -> str:
    return repr(float(x))


def record_row(r: RunRecord) -> list[str]:
    rep = r.report
    row = [str(r.instant), str(r.step), _f(r.time_s)]
    row += [_f(v) for v in r.truth.C.ravel()] + [_f(v) for v in r.truth.omega]
    row += [_f(v) for v in r.estimate.center.C.ravel()] + [_f(v) for v in r.estimate.center.omega]
    row += [_f(r.trace_P), _f(r.attitude_error_rad), _f(r.omega_error_rad_s), str(int(r.contained))]
    row += [_f(rep.lhs), _f(rep.rhs), _f(rep.lambda_min), _f(rep.kappa), _f(rep.chi), _f(rep.c), _f(rep.q)]
    row += [str(int(rep.satisfied)), _f(rep.trace_P_m), _f(rep.trace_P_f)]
    row += [_f(v) for v in r.estimate.P.ravel()]
    return row


def write_run(out_dir, records: list[RunRecord], summary: RunSummary) -> None:
    """Write ``records.csv``, ``summary.json`` and ``timing.csv`` into ``out_dir``.

    ``timing.csv`` holds wall-clock times and is the only output that differs
    between repeated runs of the same scenario.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(record_row(r))
    (out / "summary.json").write_text(json.dumps(summary.as_dict(), indent=2, sort_keys=True) + "\n")
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instant", "filter_wall_time_s"])
        for r in records:
            w.writerow([r.instant, _f(r.wall_time_s)])


def write_truth(out_dir, traj: list[AttitudeState], h: float) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "truth.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for k, st in enumerate(traj):
            w.writerow([str(k), _f(k * h)] + [_f(v) for v in st.C.ravel()] + [_f(v) for v in st.omega])
    return path


def read_records(path) -> list[dict]:
    """Parse ``records.csv`` back into dicts; ``P`` is rebuilt as a 6x6 array."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            P = np.array([float(row[c]) for c in _mat_cols("P", 6)]).reshape(6, 6)
            rows.append({**row, "P": P})
    return rows


def _trial(args) -> dict:
    s, seed = args
    records, summary = run_estimation(replace(s, seed=seed))
    return {
        "seed": seed,
        "status": summary.status,
        "instants": len(records),
        "contained": sum(r.contained for r in records),
        "containment_rate": summary.containment_rate,
    }


def monte_carlo(s: Scenario, trials: int, jobs: int = 1) -> dict:
    """Run ``trials`` copies of ``s`` with seeds ``s.seed + i`` and pool containment."""
    tasks = [(s, s.seed + i) for i in range(trials)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_trial, tasks))
    else:
        results = [_trial(t) for t in tasks]
    instants = sum(r["instants"] for r in results)
    contained = sum(r["contained"] for r in results)
    rates = [r["containment_rate"] for r in results if r["containment_rate"] is not None]
    return {
        "scenario": s.name,
        "trials": trials,
        "base_seed": s.seed,
        "aborted_trials": sum(r["status"] != "ok" for r in results),
        "total_instants": instants,
        "contained_instants": contained,
        "containment_rate": contained / instants if instants else math.nan,
        "min_trial_containment_rate": min(rates) if rates else math.nan,
        "inflation": INFLATION,
        "per_trial": results,
    }
