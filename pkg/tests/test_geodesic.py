import math

import numpy as np
import pytest

from geomlab.geodesic import (
    BlowupError,
    GeodesicState,
    NotPositiveDefiniteError,
    exp_map,
    exp_map_batch,
    geodesic_rhs,
    integrate,
)
from geomlab.metricfield import CPoint, CTangent, MetricField, euclidean_field
from geomlab.warren import WarrenClosedForm, WarrenGeodesicParams, geodesic_closed_form, min_q_on, warren_field

from oracles import rk4_reference

ORIGIN = CPoint(0, 0, 0, 0)


@pytest.fixture(scope="module")
def warren():
    return warren_field()


def state(p: CPoint, v: CTangent) -> np.ndarray:
    return np.concatenate([p.as_array(), v.as_array()])


class TestRhs:
    def test_zero_velocity(self, warren):
        acc = geodesic_rhs(warren, state(CPoint(0.3, 1, -0.5, 2), CTangent(0, 0, 0, 0))[None])[0]
        assert not np.any(acc[4:])

    def test_pure_w_direction(self, warren):
        acc = geodesic_rhs(warren, state(CPoint(0, 0, 0.7, -1), CTangent(0, 0, 1, 0))[None])[0]
        np.testing.assert_allclose(acc, [0, 0, 1, 0, 0, 0, 0.5, 0], atol=1e-14)

    def test_euclidean_straight(self):
        acc = geodesic_rhs(euclidean_field(), state(CPoint(1, 2, 3, 4), CTangent(5, -1, 2, 0.3))[None])[0]
        assert not np.any(acc[4:])


class TestIntegrate:
    def test_rotation_example(self, warren):
        tr = integrate(warren, GeodesicState(0.0, ORIGIN, CTangent(0, 0, 0, 2)), 1.0)
        assert tr.termination.kind == "reached_t_end"
        u, v = tr.states[-1][2:4]
        assert abs(u + math.log(2)) <= 1e-6 and abs(v - math.pi / 2) <= 1e-6

    def test_blowup_example(self, warren):
        tr = integrate(warren, GeodesicState(0.0, ORIGIN, CTangent(0, 0, 1, 0)), 3.0)
        assert tr.termination.kind == "blowup_detected"
        assert 1.99 <= tr.termination.t <= 2.01

    def test_zero_velocity_constant(self, warren):
        p = CPoint(0.2, -0.1, 0.4, 0.3)
        tr = integrate(warren, GeodesicState(0.0, p, CTangent(0, 0, 0, 0)), 1.0)
        assert np.all(tr.states[:, :4] == p.as_array())

    def test_stride_grid(self, warren):
        tr = integrate(warren, GeodesicState(0.0, ORIGIN, CTangent(0.3, 0, 0.2, 1)), 1.0, stride=0.1)
        grid = tr.times[tr.on_grid]
        np.testing.assert_allclose(grid, np.linspace(0, 1, 11), atol=1e-14)

    def test_invalid_tolerance(self, warren):
        with pytest.raises(ValueError):
            integrate(warren, GeodesicState(0.0, ORIGIN, CTangent(0, 0, 0, 1)), 1.0, rtol=1e-16)
        with pytest.raises(ValueError):
            integrate(warren, GeodesicState(0.0, ORIGIN, CTangent(0, 0, 0, 1)), 1.0, atol=0.1)

    def test_non_pd_start(self):
        field = MetricField.from_potential("|z|^2 - |w|^2")
        with pytest.raises(NotPositiveDefiniteError):
            integrate(field, GeodesicState(0.0, ORIGIN, CTangent(0, 0, 0, 1)), 1.0)

    def test_matches_independent_rk4(self):
        field = MetricField.from_potential("|z|^2 + |w|^2 + (|w|^2)^2")
        y0 = state(CPoint(0.1, 0.2, 0.3, -0.1), CTangent(0.5, 0, -0.2, 0.4))
        tr = integrate(field, GeodesicState(0.0, CPoint(*y0[:4]), CTangent(*y0[4:])), 1.0, rtol=1e-11, atol=1e-13)
        ref = rk4_reference(lambda y: geodesic_rhs(field, y[None])[0], y0, 1.0)
        np.testing.assert_allclose(tr.states[-1], ref, atol=1e-9)

    def test_closed_form_provider_same_path(self, warren):
        start = GeodesicState(0.0, CPoint(0.5, 0.2, -0.3, 0.1), CTangent(0.4, -0.2, 0.6, 0.9))
        a = integrate(warren, start, 1.0)
        b = integrate(WarrenClosedForm(), start, 1.0)
        np.testing.assert_allclose(a.states[-1], b.states[-1], atol=1e-8)


def _random_ic(rng):
    while True:
        p = CPoint(*rng.uniform(-1, 1, 4))
        v = CTangent(*rng.uniform(-1, 1, 2), *rng.uniform(-1.5, 1.5, 2))
        if min_q_on(v.W, 1.0) >= 0.05:
            return p, v


def test_speed_and_first_integral_conserved(warren):
    rng = np.random.default_rng(21)
    for _ in range(10):
        p, v = _random_ic(rng)
        tr = integrate(warren, GeodesicState(0.0, p, v), 1.0)
        assert tr.speed_drift <= 1e-8
        C = v.Z + p.z * v.W
        assert np.max(np.abs(tr.first_integral - C)) <= 1e-7


def test_oracle_agreement(warren):
    rng = np.random.default_rng(22)
    for _ in range(10):
        p, v = _random_ic(rng)
        tr = integrate(warren, GeodesicState(0.0, p, v), 1.0)
        prm = WarrenGeodesicParams.from_state(p, v)
        dev = max(np.max(np.abs(geodesic_closed_form(prm, t).as_array() - y[:4])) for t, y in zip(tr.times, tr.states))
        assert dev <= 1e-6


def test_time_reversal(warren):
    rng = np.random.default_rng(23)
    for _ in range(5):
        p, v = _random_ic(rng)
        fwd = integrate(warren, GeodesicState(0.0, p, v), 1.0, stride=None)
        y = fwd.states[-1]
        back = integrate(warren, GeodesicState(1.0, CPoint(*y[:4]), CTangent(*(-y[4:]))), 2.0, stride=None)
        assert np.max(np.abs(back.states[-1][:4] - p.as_array())) <= 1e-6


class TestExpMap:
    def test_rotation(self, warren):
        q = exp_map(warren, ORIGIN, CTangent(0, 0, 0, 2))
        assert q.u == pytest.approx(-math.log(2), abs=1e-8) and q.v == pytest.approx(math.pi / 2, abs=1e-8)

    def test_zero_tangent(self, warren):
        p = CPoint(1, 2, 0.5, -1)
        assert exp_map(warren, p, CTangent(0, 0, 0, 0)) == p

    def test_blowup_before_one(self, warren):
        with pytest.raises(BlowupError) as info:
            exp_map(warren, ORIGIN, CTangent(0, 0, 3, 0))
        assert info.value.t == pytest.approx(2 / 3, abs=0.01)

    def test_batch_flags(self, warren):
        pts, ok = exp_map_batch(warren, ORIGIN.as_array(), np.array([[0, 0, 0, 2], [0, 0, 3, 0], [0.1, 0, 0.5, 0.5]]))
        assert ok.tolist() == [True, False, True]
        assert pts[0, 3] == pytest.approx(math.pi / 2, abs=1e-8)
