"""Scenario files, experiment orchestration, and CSV trace persistence.

A scenario is a TOML document: [model] with explicit gain matrices,
optional [attack], [noise] with the polytope vertices and either a fixed
true_theta or a [schedule] of covariance keyframes, and [detector] with
the statistic kind, window length, and either an explicit threshold or a
calibration spec. load_scenario validates everything up front so runs
never fail halfway on a bad file.
"""

import csv
import dataclasses
import os
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # 3.10
    import tomli as tomllib

from .detect import (accumulate_window, calibrate_threshold, decide,
                     window_statistic)
from .errors import CrdwError, ParseError, ValidationError
from .numerics import spectral_radius
from .plant import AttackSpec, SystemModel, compute_kprime, simulate
from .uncertainty import (Theta, build_polytope, schedule_from_keyframes,
                          sigma_bar_drift_bound, sigma_z_of_theta)

STATISTIC_KINDS = ("DW", "CRDW", "CRDW*")


@dataclass
class Scenario:
    """One fully validated experiment configuration."""

    name: str
    model: SystemModel
    attack: AttackSpec
    polytope: object
    schedule: object
    statistic: str
    ell: int
    seed: int
    n_steps: int
    burn_in: int
    epsilon: float = 0.0
    dw_assumed_meas_cov: np.ndarray = None
    nu: float = None
    calibration: dict = None
    true_theta: np.ndarray = None


@dataclass
class TraceRow:
    step: int
    statistic: float
    decision: bool
    threshold: float
    ell: int
    wall_time: float
    solver_status: str = None
    solver_iterations: int = None
    solver_kkt: float = None


def _need(tbl, key, where):
    if key not in tbl:
        raise ValidationError("missing field", f"{where}{key}")
    return tbl[key]


def _matrix(tbl, key, where):
    val = _need(tbl, key, where)
    try:
        M = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("matrix shape", f"{where}{key} is not numeric")
    if M.ndim != 2:
        raise ValidationError("matrix shape",
                              f"{where}{key} must be a nested row array")
    return M


def load_scenario(path):
    """Parse and validate one scenario file.

    Raises ParseError when the file cannot be read as TOML and
    ValidationError naming the violated invariant otherwise.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}")

    name = str(raw.get("name", Path(path).stem))
    seed = int(_need(raw, "seed", ""))
    n_steps = int(_need(raw, "n_steps", ""))
    if n_steps < 1:
        raise ValidationError("n_steps", "need at least one step")
    burn_in = int(raw.get("burn_in", 100))
    if burn_in < 0:
        raise ValidationError("burn_in", "must be nonnegative")

    mt = _need(raw, "model", "")
    try:
        model = SystemModel(
            A=_matrix(mt, "A", "model."),
            B=_matrix(mt, "B", "model."),
            C=_matrix(mt, "C", "model."),
            K=_matrix(mt, "K", "model."),
            L=_matrix(mt, "L", "model."),
            process_noise_cov=_matrix(mt, "process_noise_cov", "model."),
            watermark_cov=_matrix(mt, "watermark_cov", "model."),
        )
    except CrdwError as e:
        raise ValidationError(type(e).__name__, str(e))
    except ValueError as e:
        raise ValidationError("dimensions", str(e))
    p, m, q = model.dims

    attack = None
    if "attack" in raw:
        at = raw["attack"]
        eta0 = np.array(at.get("eta0", np.zeros(p)), dtype=float)
        try:
            attack = AttackSpec(
                alpha=float(_need(at, "alpha", "attack.")),
                state_noise_cov=_matrix(at, "state_noise_cov", "attack."),
                output_noise_cov=_matrix(at, "output_noise_cov", "attack."),
                eta0=eta0,
            )
        except CrdwError as e:
            raise ValidationError(type(e).__name__, str(e))
        except ValueError as e:
            raise ValidationError("dimensions", str(e))
        if attack.state_noise_cov.shape != (p, p) \
                or attack.output_noise_cov.shape != (m, m):
            raise ValidationError("dimensions", "attack covariance shapes")

    nt = _need(raw, "noise", "")
    verts_raw = _need(nt, "vertices", "noise.")
    try:
        vertices = [np.array(v, dtype=float) for v in verts_raw]
        polytope = build_polytope(vertices, model)
    except CrdwError as e:
        raise ValidationError(type(e).__name__, str(e))
    except ValueError as e:
        raise ValidationError("polytope", str(e))

    true_theta = nt.get("true_theta")
    sched_tbl = raw.get("schedule")
    if (true_theta is None) == (sched_tbl is None):
        raise ValidationError(
            "noise path",
            "exactly one of noise.true_theta and [schedule] is required")
    if true_theta is not None:
        try:
            theta = Theta(np.array(true_theta, dtype=float))
        except ValueError as e:
            raise ValidationError("theta", str(e))
        if theta.d != polytope.d:
            raise ValidationError("theta", "length must match vertex count")
        true_theta = theta.weights
        sz = sigma_z_of_theta(polytope, theta)
        schedule = schedule_from_keyframes([(0, sz)], xi=0.0)
    else:
        frames = []
        for entry in _need(sched_tbl, "keyframes", "schedule."):
            frames.append((int(_need(entry, "step", "schedule.keyframes.")),
                           _matrix(entry, "cov", "schedule.keyframes.")))
        if frames and frames[0][1].shape != (m, m):
            raise ValidationError("dimensions",
                                  f"keyframe covariances must be {m}x{m}")
        xi = float(sched_tbl.get("xi", 0.0))
        try:
            schedule = schedule_from_keyframes(frames, xi=xi)
        except CrdwError as e:
            raise ValidationError(type(e).__name__, str(e))
        except ValueError as e:
            raise ValidationError("schedule", str(e))

    dt = _need(raw, "detector", "")
    statistic = _need(dt, "statistic", "detector.")
    if statistic not in STATISTIC_KINDS:
        raise ValidationError(
            "statistic kind",
            f"{statistic!r} not one of {', '.join(STATISTIC_KINDS)}")
    ell = int(_need(dt, "ell", "detector."))
    if ell <= m + q:
        raise ValidationError("window length", f"ell must exceed {m + q}")

    assumed = dt.get("assumed_meas_cov")
    if assumed is not None:
        assumed = _matrix(dt, "assumed_meas_cov", "detector.")
        if assumed.shape != (m, m):
            raise ValidationError("dimensions",
                                  f"assumed_meas_cov must be {m}x{m}")
    elif statistic == "DW":
        raise ValidationError("assumed covariance",
                              "DW needs detector.assumed_meas_cov")

    epsilon = dt.get("epsilon")
    if statistic == "CRDW*":
        if epsilon is None:
            xi_eff = schedule.xi
            if xi_eff <= 0.0:
                raise ValidationError(
                    "epsilon",
                    "CRDW* needs detector.epsilon or a positive schedule.xi")
            try:
                epsilon = sigma_bar_drift_bound(xi_eff, model)
            except CrdwError as e:
                raise ValidationError(type(e).__name__, str(e))
        epsilon = float(epsilon)
        if epsilon < 0.0:
            raise ValidationError("epsilon", "must be nonnegative")
    else:
        epsilon = float(epsilon) if epsilon is not None else 0.0

    nu = dt.get("nu")
    cal_tbl = dt.get("calibration")
    if (nu is None) == (cal_tbl is None):
        raise ValidationError(
            "threshold",
            "exactly one of detector.nu and [detector.calibration] required")
    calibration = None
    if cal_tbl is not None:
        try:
            theta_ref = Theta(np.array(
                _need(cal_tbl, "theta_ref", "detector.calibration."),
                dtype=float))
        except ValueError as e:
            raise ValidationError("theta", str(e))
        if theta_ref.d != polytope.d:
            raise ValidationError("theta",
                                  "theta_ref length must match vertex count")
        n_windows = int(_need(cal_tbl, "n_windows", "detector.calibration."))
        a = float(_need(cal_tbl, "a", "detector.calibration."))
        if not 0.0 < a < 1.0:
            raise ValidationError("quantile level", "a must be in (0, 1)")
        if n_windows < 50:
            raise ValidationError("calibration windows", "need at least 50")
        calibration = {"theta_ref": theta_ref.weights,
                       "n_windows": n_windows, "a": a}

    return Scenario(
        name=name, model=model, attack=attack, polytope=polytope,
        schedule=schedule, statistic=statistic, ell=ell, seed=seed,
        n_steps=n_steps, burn_in=burn_in, epsilon=epsilon,
        dw_assumed_meas_cov=assumed,
        nu=None if nu is None else float(nu),
        calibration=calibration, true_theta=true_theta,
    )


def _fmt_float(x):
    return repr(float(x))


def _fmt_row(row):
    return "[" + ", ".join(_fmt_float(x) for x in row) + "]"


def _fmt_matrix(M, indent="  "):
    rows = ",\n".join(indent + _fmt_row(r) for r in np.asarray(M))
    return "[\n" + rows + ",\n]"


def resolved_config(scenario):
    """Render the scenario back to TOML with every derived quantity echoed.

    Loading the dump reproduces the run bit for bit; the [resolved] table
    is informational and ignored by the loader.
    """
    sc = scenario
    model = sc.model
    out = [f'name = "{sc.name}"',
           f"seed = {sc.seed}",
           f"n_steps = {sc.n_steps}",
           f"burn_in = {sc.burn_in}",
           "",
           "[model]"]
    for key, M in (("A", model.A), ("B", model.B), ("C", model.C),
                   ("K", model.K), ("L", model.L),
                   ("process_noise_cov", model.process_noise_cov),
                   ("watermark_cov", model.watermark_cov)):
        out.append(f"{key} = {_fmt_matrix(M)}")
    if sc.attack is not None:
        out += ["", "[attack]",
                f"alpha = {_fmt_float(sc.attack.alpha)}",
                f"state_noise_cov = {_fmt_matrix(sc.attack.state_noise_cov)}",
                f"output_noise_cov = {_fmt_matrix(sc.attack.output_noise_cov)}",
                f"eta0 = {_fmt_row(sc.attack.eta0)}"]
    verts = ",\n".join("  [" + ", ".join(_fmt_row(r) for r in v) + "]"
                       for v in sc.polytope.vertices)
    out += ["", "[noise]", "vertices = [\n" + verts + ",\n]"]
    if sc.true_theta is not None:
        out.append(f"true_theta = {_fmt_row(sc.true_theta)}")
    else:
        out += ["", "[schedule]",
                f"xi = {_fmt_float(sc.schedule.xi_declared)}"]
        for stepno, cov in sc.schedule.keyframes:
            out += ["", "[[schedule.keyframes]]",
                    f"step = {stepno}",
                    "cov = [" + ", ".join(_fmt_row(r) for r in cov) + "]"]
    out += ["", "[detector]",
            f'statistic = "{sc.statistic}"',
            f"ell = {sc.ell}"]
    if sc.statistic == "CRDW*":
        out.append(f"epsilon = {_fmt_float(sc.epsilon)}")
    if sc.dw_assumed_meas_cov is not None:
        out.append(f"assumed_meas_cov = {_fmt_matrix(sc.dw_assumed_meas_cov)}")
    if sc.nu is not None:
        out.append(f"nu = {_fmt_float(sc.nu)}")
    if sc.calibration is not None:
        out += ["", "[detector.calibration]",
                f"theta_ref = {_fmt_row(sc.calibration['theta_ref'])}",
                f"n_windows = {sc.calibration['n_windows']}",
                f"a = {_fmt_float(sc.calibration['a'])}"]
    out += ["", "[resolved]",
            f"kprime = {compute_kprime(model)}",
            f"closed_loop_radius = {_fmt_float(spectral_radius(model.A + model.B @ model.K))}",
            f"observer_radius = {_fmt_float(spectral_radius(model.A + model.L @ model.C))}",
            f"xi_declared = {_fmt_float(sc.schedule.xi_declared)}",
            f"xi_realized = {_fmt_float(sc.schedule.xi_realized)}"]
    if sc.statistic == "CRDW*":
        out.append(f"epsilon_effective = {_fmt_float(sc.epsilon)}")
    return "\n".join(out) + "\n"


def resolve_threshold(scenario):
    """Explicit threshold if the scenario pins one, else calibrate."""
    if scenario.nu is not None:
        return float(scenario.nu)
    cal = scenario.calibration
    return calibrate_threshold(scenario, cal["theta_ref"], scenario.ell,
                               cal["n_windows"], cal["a"])


TRACE_COLUMNS = ("step", "statistic", "decision", "threshold", "ell")
SOLVER_COLUMNS = ("solver_status", "solver_iterations", "solver_kkt")


def trace_columns(statistic_kind):
    if statistic_kind == "DW":
        return TRACE_COLUMNS
    return TRACE_COLUMNS + SOLVER_COLUMNS


def write_trace_csv(rows, path, statistic_kind):
    """Persist one statistic trace.

    Wall times stay in memory only: the persisted schema is limited to
    deterministic fields so reruns of one scenario are byte-identical.
    """
    cols = trace_columns(statistic_kind)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            rec = [r.step, _fmt_float(r.statistic), int(r.decision),
                   _fmt_float(r.threshold), r.ell]
            if len(cols) > len(TRACE_COLUMNS):
                rec += [r.solver_status, r.solver_iterations,
                        _fmt_float(r.solver_kkt)]
            w.writerow(rec)


def run_experiment(scenario, out_csv=None):
    """Simulate the scenario and evaluate its statistic on disjoint windows.

    Returns the trace rows; writes them as CSV when out_csv is given.
    """
    if scenario.n_steps < 1:
        raise ValidationError("n_steps", "need at least one step")
    nu = resolve_threshold(scenario)
    records = simulate(scenario.model, scenario.attack, scenario.schedule,
                       scenario.n_steps, scenario.seed)
    start = max(scenario.burn_in, compute_kprime(scenario.model) + 2) - 1
    rows = []
    while start + scenario.ell <= records[-1].step:
        w = accumulate_window(records, start, scenario.ell)
        t0 = time.perf_counter()
        value, sol = window_statistic(w, scenario)
        wall = time.perf_counter() - t0
        verdict = decide(value, nu, sol)
        rows.append(TraceRow(
            step=start, statistic=float(value), decision=verdict.reject,
            threshold=nu, ell=scenario.ell, wall_time=wall,
            solver_status=None if sol is None else sol.status,
            solver_iterations=None if sol is None else sol.iterations,
            solver_kkt=None if sol is None else sol.kkt_residual,
        ))
        start += scenario.ell
    if out_csv is not None:
        write_trace_csv(rows, out_csv, scenario.statistic)
    return rows


def bundled_scenario_dir():
    return resources.files("crdw") / "scenarios"


_FIGURE_PLAN = (
    ("fixed", "vehicle_fixed.toml", (("dw", "DW"), ("crdw", "CRDW"))),
    ("varying", "vehicle_varying.toml", (("dw", "DW"), ("crdwstar", "CRDW*"))),
)


def reproduce_figures(outdir, seed=None, scenario_dir=None):
    """Run the four benchmark experiment pairs and write their trace CSVs.

    Each pair shares plant noise and watermark draws between the attacked
    and unattacked arm; the threshold is calibrated once per statistic and
    reused across both arms. Returns the list of files written.
    """
    base = Path(scenario_dir) if scenario_dir is not None \
        else bundled_scenario_dir()
    os.makedirs(outdir, exist_ok=True)
    written = []
    for tag, fname, kinds in _FIGURE_PLAN:
        sc = load_scenario(base / fname)
        if seed is not None:
            sc = dataclasses.replace(sc, seed=int(seed))
        for ktag, kind in kinds:
            sck = dataclasses.replace(sc, statistic=kind)
            nu = resolve_threshold(sck)
            sck = dataclasses.replace(sck, nu=nu, calibration=None)
            for arm, attack in (("unattacked", None), ("attacked", sc.attack)):
                path = os.path.join(outdir, f"{tag}_{ktag}_{arm}.csv")
                run_experiment(dataclasses.replace(sck, attack=attack),
                               out_csv=path)
                written.append(path)
    return written
