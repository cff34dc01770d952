"""Scenario loading, validation, resolved dumps, and experiment runs."""

import dataclasses

import numpy as np
import pytest

from conftest import (DECLARED_XI, TRUE_FIXED_COV, VEHICLE_EPSILON,
                      scalar_scenario_text)
from crdw.errors import ParseError, ValidationError
from crdw.plant import simulate
from crdw.runner import (bundled_scenario_dir, load_scenario,
                         reproduce_figures, resolve_threshold,
                         resolved_config, run_experiment, trace_columns)


def write_scenario(tmp_path, text, name="sc.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture()
def scalar_path(tmp_path):
    return write_scenario(tmp_path, scalar_scenario_text())


def test_bundled_fixed_scenario_loads():
    sc = load_scenario(bundled_scenario_dir() / "vehicle_fixed.toml")
    assert sc.name == "vehicle-fixed"
    assert sc.statistic == "CRDW"
    assert sc.ell == 50 and sc.seed == 11 and sc.n_steps == 1000
    assert sc.polytope.d == 4
    assert sc.attack is not None and sc.attack.alpha == -1.0
    np.testing.assert_allclose(sc.true_theta, [0.0, 1.0, 0.0, 0.0])
    # the fixed mixture collapses to a one-keyframe schedule at vertex 1
    assert len(sc.schedule.keyframes) == 1
    np.testing.assert_allclose(sc.schedule.cov_at(500), TRUE_FIXED_COV)
    assert sc.calibration["n_windows"] == 500
    assert sc.calibration["a"] == 0.05


def test_bundled_varying_scenario_loads():
    sc = load_scenario(bundled_scenario_dir() / "vehicle_varying.toml")
    assert sc.statistic == "CRDW*"
    assert sc.true_theta is None
    assert sc.schedule.horizon == 1000
    assert sc.schedule.xi_declared == DECLARED_XI
    assert sc.epsilon == VEHICLE_EPSILON


def test_parse_error_reports_location(tmp_path):
    path = write_scenario(tmp_path, "seed = 1\nbroken [")
    with pytest.raises(ParseError) as exc:
        load_scenario(path)
    assert "line 2" in str(exc.value)


def test_parse_error_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "absent.toml")


def test_unstable_gain_names_the_invariant(tmp_path):
    # A + BK = 1.3: the closed loop is not Schur stable
    path = write_scenario(tmp_path, scalar_scenario_text(kgain=0.8))
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    assert exc.value.invariant == "NotSchurStable"


@pytest.mark.parametrize("mutate,invariant", [
    (dict(noise_extra=""), "noise path"),
    (dict(noise_extra="true_theta = [0.5, 0.5]",
          schedule_block="\n[schedule]\nxi = 1e-5\n\n[[schedule.keyframes]]\nstep = 0\ncov = [[0.0002]]\n"),
     "noise path"),
    (dict(statistic="DW", detector_extra="nu = 50.0"), "assumed covariance"),
    (dict(detector_extra="assumed_meas_cov = [[0.0003]]"), "threshold"),
    (dict(detector_extra="nu = 50.0\n\n[detector.calibration]\n"
                         "theta_ref = [0.5, 0.5]\nn_windows = 60\na = 0.05"),
     "threshold"),
    (dict(ell=2), "window length"),
    (dict(statistic="median"), "statistic kind"),
    (dict(n_steps=0), "n_steps"),
    (dict(noise_extra="true_theta = [0.2, 0.3, 0.5]"), "theta"),
    (dict(noise_extra="true_theta = [0.4, 0.4]"), "theta"),
    (dict(statistic="CRDW*", detector_extra="nu = 50.0"), "epsilon"),
])
def test_invalid_scenarios_name_their_invariant(tmp_path, mutate, invariant):
    path = write_scenario(tmp_path, scalar_scenario_text(**mutate))
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    assert exc.value.invariant == invariant


def test_calibration_spec_validated_at_load(tmp_path):
    base = "assumed_meas_cov = [[0.0003]]\n\n[detector.calibration]\n" \
           "theta_ref = [0.5, 0.5]\nn_windows = {n}\na = {a}"
    for n, a, invariant in [(60, 1.5, "quantile level"),
                            (60, 0.0, "quantile level"),
                            (30, 0.05, "calibration windows"),
                            (60, 0.05, None)]:
        path = write_scenario(tmp_path, scalar_scenario_text(
            detector_extra=base.format(n=n, a=a)))
        if invariant is None:
            sc = load_scenario(path)
            assert sc.nu is None and sc.calibration["n_windows"] == 60
        else:
            with pytest.raises(ValidationError) as exc:
                load_scenario(path)
            assert exc.value.invariant == invariant


def test_scheduled_scalar_derives_epsilon(tmp_path):
    path = write_scenario(tmp_path, scalar_scenario_text(
        statistic="CRDW*",
        detector_extra="assumed_meas_cov = [[0.0003]]\nnu = 50.0",
        scheduled=True))
    sc = load_scenario(path)
    # declared drift dominates the realized one and sets the slack
    assert sc.schedule.xi == 1e-5
    assert sc.epsilon > 0.0
    explicit = write_scenario(
        tmp_path, scalar_scenario_text(
            statistic="CRDW*",
            detector_extra="assumed_meas_cov = [[0.0003]]\nnu = 50.0\n"
                           "epsilon = 0.003",
            scheduled=True),
        name="explicit.toml")
    assert load_scenario(explicit).epsilon == 0.003


def test_resolved_dump_reloads_and_reruns_bit_identical(tmp_path, scalar_path):
    sc = load_scenario(scalar_path)
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    run_experiment(sc, out_csv=p1)
    dump = resolved_config(sc)
    sc2 = load_scenario(write_scenario(tmp_path, dump, name="resolved.toml"))
    run_experiment(sc2, out_csv=p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert "[resolved]" in dump and "kprime = 1" in dump


def test_resolved_dump_round_trips_schedule(tmp_path):
    path = write_scenario(tmp_path, scalar_scenario_text(
        statistic="CRDW*",
        detector_extra="assumed_meas_cov = [[0.0003]]\nnu = 50.0",
        scheduled=True))
    sc = load_scenario(path)
    dump = resolved_config(sc)
    assert "epsilon_effective" in dump
    sc2 = load_scenario(write_scenario(tmp_path, dump, name="resolved.toml"))
    assert sc2.epsilon == sc.epsilon
    assert sc2.schedule.xi_declared == sc.schedule.xi_declared
    np.testing.assert_array_equal(sc2.schedule.cov_at(17), sc.schedule.cov_at(17))


def test_trace_csv_schema(tmp_path, scalar_path):
    sc = load_scenario(scalar_path)
    out = tmp_path / "trace.csv"
    rows = run_experiment(sc, out_csv=out)
    lines = out.read_text().splitlines()
    assert lines[0] == "step,statistic,decision,threshold,ell," \
                       "solver_status,solver_iterations,solver_kkt"
    assert len(lines) == len(rows) + 1
    # disjoint windows starting after burn-in, strictly increasing
    steps = [r.step for r in rows]
    assert steps == sorted(steps)
    assert all(b - a == sc.ell for a, b in zip(steps, steps[1:]))
    assert all(r.threshold == 50.0 for r in rows)
    assert all(r.decision in (True, False) for r in rows)
    assert all(r.wall_time >= 0.0 for r in rows)
    assert all(r.solver_status == "Optimal" for r in rows)

    dw = dataclasses.replace(sc, statistic="DW")
    run_experiment(dw, out_csv=out)
    assert out.read_text().splitlines()[0] == \
        "step,statistic,decision,threshold,ell"
    assert trace_columns("DW") == ("step", "statistic", "decision",
                                   "threshold", "ell")


def test_rerun_is_deterministic(tmp_path, scalar_path):
    sc = load_scenario(scalar_path)
    p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    run_experiment(sc, out_csv=p1)
    run_experiment(load_scenario(scalar_path), out_csv=p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_attacked_and_clean_arms_share_plant_draws():
    sc = load_scenario(bundled_scenario_dir() / "vehicle_fixed.toml")
    n = 40
    hit = simulate(sc.model, sc.attack, sc.schedule, n, sc.seed)
    clean = simulate(sc.model, None, sc.schedule, n, sc.seed)
    for rh, rc in zip(hit, clean):
        if rh.watermark_lagged is None:
            assert rc.watermark_lagged is None
            continue
        np.testing.assert_array_equal(rh.watermark_lagged, rc.watermark_lagged)
    # but the attack visibly changes what the sensor reports
    assert max(np.abs(rh.y - rc.y).max()
               for rh, rc in zip(hit[5:], clean[5:])) > 0.0


def test_run_experiment_needs_steps(scalar_path):
    sc = dataclasses.replace(load_scenario(scalar_path), n_steps=0)
    with pytest.raises(ValidationError):
        run_experiment(sc)


def test_explicit_threshold_skips_calibration(scalar_path):
    sc = load_scenario(scalar_path)
    assert resolve_threshold(sc) == 50.0


def test_reproduce_figures_layout(tmp_path):
    scdir = tmp_path / "scenarios"
    scdir.mkdir()
    write_scenario(scdir, scalar_scenario_text(), name="vehicle_fixed.toml")
    write_scenario(scdir, scalar_scenario_text(
        statistic="CRDW*",
        detector_extra="assumed_meas_cov = [[0.0003]]\nnu = 50.0",
        scheduled=True), name="vehicle_varying.toml")
    outdir = tmp_path / "figs"
    written = reproduce_figures(outdir, scenario_dir=scdir)
    names = sorted(p.split("/")[-1] for p in map(str, written))
    assert names == sorted([
        "fixed_dw_unattacked.csv", "fixed_dw_attacked.csv",
        "fixed_crdw_unattacked.csv", "fixed_crdw_attacked.csv",
        "varying_dw_unattacked.csv", "varying_dw_attacked.csv",
        "varying_crdwstar_unattacked.csv", "varying_crdwstar_attacked.csv",
    ])
    for p in written:
        lines = open(p).read().splitlines()
        assert lines[0].startswith("step,statistic,decision,threshold,ell")
        assert len(lines) >= 2
    # paired arms carry the same calibrated threshold
    fixed_u = open(f"{outdir}/fixed_crdw_unattacked.csv").read().splitlines()
    fixed_a = open(f"{outdir}/fixed_crdw_attacked.csv").read().splitlines()
    assert fixed_u[1].split(",")[3] == fixed_a[1].split(",")[3]


def test_reproduce_figures_seed_override(tmp_path):
    scdir = tmp_path / "scenarios"
    scdir.mkdir()
    write_scenario(scdir, scalar_scenario_text(), name="vehicle_fixed.toml")
    write_scenario(scdir, scalar_scenario_text(
        statistic="CRDW*",
        detector_extra="assumed_meas_cov = [[0.0003]]\nnu = 50.0",
        scheduled=True), name="vehicle_varying.toml")
    a = tmp_path / "a"
    b = tmp_path / "b"
    c = tmp_path / "c"
    reproduce_figures(a, scenario_dir=scdir, seed=5)
    reproduce_figures(b, scenario_dir=scdir, seed=5)
    reproduce_figures(c, scenario_dir=scdir, seed=6)
    fa = (a / "fixed_crdw_attacked.csv").read_bytes()
    fb = (b / "fixed_crdw_attacked.csv").read_bytes()
    fc = (c / "fixed_crdw_attacked.csv").read_bytes()
    assert fa == fb
    assert fa != fc
