import csv

import numpy as np
import pytest

from helmlab import harness as H
from helmlab.scenarios import load_scenario

FAST = {"wave.h_list": "0.125, 0.0625", "rays.fiber": "128"}


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_free_point_validates():
    rep = H.validate(load_scenario("free_point"))
    assert rep.passed
    names = [c.name for c in rep.checks]
    assert names == ["energy-window", "non-incoming", "potential-decay", "amplitude-decay",
                     "damping-on-trapped-set", "propagating-on-source", "absorbing-energy"]
    assert rep.text().startswith("validation of free_point: pass\n")


def test_window_violation_reports_both_sides():
    rep = H.validate(load_scenario("free_point", {"incoming.sigma1": "0.9"}))
    c = rep.get("energy-window")
    assert not rep.passed and not c.passed
    assert "1.083" in c.detail and "0.8" in c.detail
    assert c.line().startswith("[FAIL]")


def test_circle_inside_the_incoming_radius_fails():
    base = {"manifold.kind": "circle", "manifold.radius": "1", "rays.panels": "16", "rays.order": "4",
            "rays.fiber": "2"}
    bad = H.validate(load_scenario("free_point", {**base, "incoming.R1": "0.5"})).get("non-incoming")
    good = H.validate(load_scenario("free_point", {**base, "incoming.R1": "1.5"})).get("non-incoming")
    assert not bad.passed and "witness" in bad.detail
    assert good.passed


def test_report_only_checks_do_not_fail_validation():
    rep = H.validate(load_scenario("affine_line"))
    assert rep.passed
    assert rep.get("potential-decay").report_only


def test_trapping_well_with_sign_changing_absorption_passes_damping_check():
    rep = H.validate(load_scenario("signchanging_v2"))
    c = rep.get("damping-on-trapped-set")
    assert c.passed and "heuristic" in c.detail


def test_empty_observable_list(tmp_path):
    scn = load_scenario("free_point", {"observables": ""})
    run = H.run_rays(scn, tmp_path)
    assert run.evaluations == []
    assert (tmp_path / "measures.csv").read_text().splitlines() == ["q_id,value,error_estimate"]
    (tmp_path / "validation.txt").write_text(H.validate(scn).text())
    text = H.emit_report(tmp_path)
    assert "no assertions executed" in text


def test_report_needs_artifacts(tmp_path):
    with pytest.raises(FileNotFoundError):
        H.emit_report(tmp_path)
    with pytest.raises(FileNotFoundError):
        H.emit_report(tmp_path / "missing")


def test_wave_skip_reasons():
    scn = load_scenario("gaussian_bump")
    assert H.wave_skip_reason(scn, scn.observable("one")) is not None
    assert "non-separable" in H.wave_skip_reason(scn, scn.observable("shell_a"))
    assert H.wave_skip_reason(scn, scn.observable("radial")) is None
    assert H.wave_skip_reason(scn, scn.observable("zero")) is None


def test_auto_T_uses_only_wave_observables():
    scn = load_scenario("gaussian_bump")
    rays = H.run_rays(scn)
    T = H.auto_T(scn, rays)
    assert 0 < T < 10
    assert H.auto_T(load_scenario("gaussian_bump", {"wave.T": "3"}), rays) == 3.0
    assert H.auto_T(scn, None) == 1.0


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    dirs = []
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        scn = load_scenario("free_point", FAST)
        (out / "config.txt").write_text(scn.config.dumps())
        (out / "validation.txt").write_text(H.validate(scn).text())
        runs.append(H.run_convergence(scn, out))
        H.emit_report(out)
        dirs.append(out)
    return runs, dirs


def test_identical_runs_are_byte_identical(two_runs):
    _, (a, b) = two_runs
    for name in ["measures.csv", "rays.csv", "wave.csv", "convergence.csv", "assertions.csv", "report.txt",
                 "plot_convergence.py", "validation.txt"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_convergence_rows(two_runs):
    (run, _), (out, _) = two_runs
    rows = read(out / "convergence.csv")
    assert len(rows) == len(run.rows) == 7 * 2
    for q in {r["q_id"] for r in rows}:
        assert len({r["ray_value"] for r in rows if r["q_id"] == q}) == 1
    zero = [r for r in rows if r["q_id"] == "zero"]
    assert all(float(r["ray_value"]) == 0 and complex(r["wave_value"]) == 0 for r in zero)
    assert all(r.rel_diff == 0 for r in run.series("zero"))
    inc = run.series("incoming")
    assert all(r.ray_value == 0 for r in inc)
    # the wave side approaches the rays as h decreases
    for name in ("shell_a", "shell_b", "shell_c"):
        s = run.series(name)
        assert s[1].rel_diff < s[0].rel_diff and run.monotone[name]


def test_assertions_file_and_report(two_runs):
    (run, _), (out, _) = two_runs
    rows = read(out / "assertions.csv")
    assert [r["assertion"] for r in rows] == [c.name for c in run.assertions]
    names = {r["assertion"] for r in rows}
    assert {"zero-rows[zero]", "incoming-ray-zero[incoming]", "offshell-ray-small[offshell]"} <= names
    # main_tol targets the finest h of the full sweep; at h = 1/16 only the trend is expected
    for r in rows:
        if not r["assertion"].startswith("main-limit-final"):
            assert r["status"] == "pass", r
    text = (out / "report.txt").read_text()
    assert "== ray predictions" in text and "== wave vs rays" in text and "== acceptance" in text
    assert "scenario: free_point" in text


def test_source_scaling_exponent():
    fit = H.source_scaling(load_scenario("free_point"))
    assert fit.exponent == pytest.approx(0.5, abs=0.05)
    assert np.all(np.isfinite(fit.norms))
