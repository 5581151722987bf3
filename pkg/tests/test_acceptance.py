"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py``; the terminal summary lists one
PASS/FAIL line per criterion with the measured value.
"""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from geomlab.ballvol import ball_volume_mc, exp_jacobian_numeric, exp_jacobians, tangent_frame
from geomlab.family import build_kh, kh_report, laplacian_h
from geomlab.geodesic import GeodesicState, integrate
from geomlab.metricfield import CPoint, CTangent, MetricField, euclidean_field, random_points
from geomlab.warren import (
    UndefinedJacobianError,
    WarrenGeodesicParams,
    exp_jacobian_closed_form,
    geodesic_closed_form,
    min_q_on,
    warren_christoffel,
    warren_field,
)

pytestmark = pytest.mark.acceptance

SEED = 20240601
ORIGIN = CPoint(0, 0, 0, 0)


@pytest.fixture(scope="module")
def warren():
    return warren_field()


@pytest.fixture(scope="module")
def box_points():
    return random_points(np.random.default_rng(SEED), 1000)


@pytest.fixture(scope="module")
def oracle_traces(warren):
    """100 seeded Warren geodesics with Q >= 0.05 on [0, 1]."""
    rng = np.random.default_rng(SEED + 4)
    out = []
    while len(out) < 100:
        p = CPoint(*rng.uniform(-3, 3, 4))
        v = CTangent(*rng.uniform(-2, 2, 4))
        if min_q_on(v.W, 1.0) < 0.05:
            continue
        trace = integrate(warren, GeodesicState(0.0, p, v), 1.0, rtol=1e-9, stride=None)
        out.append((p, v, trace))
    return out


def test_criterion_01_unit_determinant(warren, box_points, record_property):
    dev = max(abs(float(warren.metric(p).det) - 1) for p in box_points)
    record_property("value", f"max |det - 1| = {dev:.3e} (tol 1e-12)")
    assert dev <= 1e-12


def test_criterion_02_christoffel_oracle(warren, box_points, record_property):
    dev = max(np.max(np.abs(warren.christoffel(p).values - warren_christoffel(p).values)) for p in box_points)
    record_property("value", f"max Christoffel deviation = {dev:.3e} (tol 1e-10)")
    assert dev <= 1e-10


def test_criterion_03_flatness(warren, box_points, record_property):
    curv = max(warren.curvature(p).max_abs for p in box_points)
    control = MetricField.from_potential("|z|^2 + |w|^2 + (|w|^2)^2").curvature(CPoint(0, 0, 1, 0)).max_abs
    record_property("value", f"Warren max |R| = {curv:.3e} (tol 1e-8); control max |R| at w=1 = {control:.3e} (> 1e-3)")
    assert curv <= 1e-8 and control > 1e-3


def test_criterion_04_geodesic_oracle(oracle_traces, record_property):
    worst = 0.0
    for p, v, trace in oracle_traces:
        assert trace.termination.kind == "reached_t_end"
        prm = WarrenGeodesicParams.from_state(p, v)
        for t, y in zip(trace.times, trace.states):
            worst = max(worst, float(np.max(np.abs(geodesic_closed_form(prm, t).as_array() - y[:4]))))
    record_property("value", f"sup |numeric - closed form| = {worst:.3e} over 100 traces (tol 1e-6)")
    assert worst <= 1e-6


def test_criterion_05_incompleteness(warren, record_property):
    bases = [ORIGIN, CPoint(1, 0, 0, 0), CPoint(-0.5, 0.7, 0.3, -1.2), CPoint(0.2, -0.4, -1, 2), CPoint(1.5, 1.5, 0.8, 0)]
    times = []
    for b in bases:
        trace = integrate(warren, GeodesicState(0.0, b, CTangent(0, 0, 1, 0)), 3.0)
        assert trace.termination.kind == "blowup_detected"
        times.append(trace.termination.t)
    record_property("value", f"t_est in [{min(times):.5f}, {max(times):.5f}] (need [1.99, 2.01])")
    assert all(1.99 <= t <= 2.01 for t in times)


def test_criterion_06_first_integral(oracle_traces, record_property):
    worst = 0.0
    for p, v, trace in oracle_traces:
        C = v.Z + p.z * v.W
        worst = max(worst, float(np.max(np.abs(trace.first_integral - C))))
    record_property("value", f"max |zdot + z wdot - (Z + z0 W)| = {worst:.3e} (tol 1e-7)")
    assert worst <= 1e-7


def test_criterion_07_exp_jacobian(warren, record_property):
    rng = np.random.default_rng(SEED + 7)
    bases = [ORIGIN, CPoint(0.5, -0.5, 0.4, 1.0), CPoint(-1, 0.3, -0.8, -2)]
    frames = {b: tangent_frame(warren, b) for b in bases}
    picked = {b: [] for b in bases}
    n = 0
    while n < 200:
        base = bases[n % len(bases)]
        xi = rng.uniform(-2, 2, 4)
        if xi[2] >= 2 or np.linalg.norm(xi) > 2:
            continue
        actual = frames[base].apply(xi)
        if min_q_on(complex(actual[2], actual[3]), 1.0) < 0.05:
            continue
        picked[base].append(xi)
        n += 1
    worst = 0.0
    for base, xis in picked.items():
        dets, ok = exp_jacobians(warren, base, np.array(xis))
        assert ok.all()
        worst = max(worst, float(np.max(np.abs(dets - 1))))
    # the single-tangent entry point agrees with the batched one
    assert exp_jacobian_numeric(warren, ORIGIN, CTangent(*picked[ORIGIN][0])) == pytest.approx(
        exp_jacobians(warren, ORIGIN, picked[ORIGIN][0])[0][0], abs=1e-12
    )
    with pytest.raises(UndefinedJacobianError):
        exp_jacobian_closed_form(CTangent(0, 0, 2, 0))
    record_property("value", f"max |jac - 1| = {worst:.3e} over 200 tangents (tol 1e-5); U=2 raises")
    assert worst <= 1e-5


def test_criterion_08_ball_volume(warren, record_property):
    w = ball_volume_mc(warren, ORIGIN, 0.5, 100_000, seed=SEED)
    e = ball_volume_mc(euclidean_field(), ORIGIN, 1.0, 10_000, seed=SEED)
    ref_w, ref_e = math.pi**2 * 0.5**4 / 2, math.pi**2 / 2
    record_property(
        "value",
        f"Warren r=0.5: {w.estimate:.6f} +- {w.stderr:.6f} vs {ref_w:.6f} ({abs(w.estimate - ref_w) / w.stderr:.2f} sigma); "
        f"Euclidean r=1: {e.estimate:.4f} +- {e.stderr:.4f} vs {ref_e:.6f} ({abs(e.estimate - ref_e) / e.stderr:.2f} sigma)",
    )
    assert abs(w.estimate - ref_w) <= 3 * w.stderr
    assert abs(e.estimate - ref_e) <= 3 * e.stderr


def test_criterion_09_kh_family(record_property):
    pts = random_points(np.random.default_rng(SEED + 9), 200, box=1.0)
    parts = []
    for h in ("Re(w)", "Im(w)", "Re(w^2)"):
        rep = kh_report(build_kh(h), pts)
        parts.append(f"{h}: det {rep.max_det_deviation:.1e}, R {rep.max_curvature:.1e}, Gamma {rep.max_christoffel_deviation:.1e}")
        assert rep.harmonic and rep.passed, h
    bad = build_kh("|w|^2")
    lap = [laplacian_h(bad.h, p) for p in pts]
    curv = max(bad.curvature(p).max_abs for p in pts)
    parts.append(f"|w|^2: Laplacian in [{min(lap):g}, {max(lap):g}], max |R| {curv:.2f}")
    record_property("value", "; ".join(parts))
    assert np.allclose(lap, 4, atol=1e-12) and curv > 1e-3


def _cli(args, threads):
    env = dict(os.environ, GEOMLAB_THREADS=str(threads))
    res = subprocess.run([sys.executable, "-m", "geomlab", *args], capture_output=True, env=env, timeout=300)
    return res.returncode, res.stdout


def test_criterion_10_determinism(record_property):
    invocations = [
        ["verify", "--samples", "200", "--seed", "7"],
        ["geodesic", "--vel", "0.3,-0.2,0.5,1.5", "--from", "0.2,0.1,-0.3,0.4"],
        ["volume", "--radius", "0.5", "--samples", "6000", "--seed", "11"],
        ["family", "--h", "Re(w^2)", "--seed", "3"],
    ]
    for args in invocations:
        runs = [_cli(args, 1), _cli(args, 1), _cli(args, 4)]
        assert runs[0][0] == 0, args
        assert runs[0] == runs[1] == runs[2], args
    record_property("value", f"{len(invocations)} invocations byte-identical across reruns and GEOMLAB_THREADS=1/4")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
