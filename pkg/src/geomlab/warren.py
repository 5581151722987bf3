"""Hand-derived formulas for the Warren potential: metric, inverse, Christoffel symbols, geodesics.

The potential is f = 4|z|^2 e^{Re w} + e^{-Re w}.  Everything here is
written out by hand and serves as the oracle for the generic symbolic and
numeric pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metricfield import ChristoffelSet, CPoint, CTangent, HermitianMetric, MetricField

WARREN_SOURCE = "4*|z|^2*exp(Re(w)) + exp(-Re(w))"


class OutOfDomainError(ValueError):
    """Closed-form geodesic queried at or past its blow-up time."""


class UndefinedJacobianError(ValueError):
    pass


def warren_field() -> MetricField:
    """Generic symbolic field built from the parsed Warren potential."""
    return MetricField.from_potential(WARREN_SOURCE, name="warren")


def warren_potential(p: CPoint) -> float:
    return 4 * abs(p.z) ** 2 * math.exp(p.u) + math.exp(-p.u)


def warren_metric(p: CPoint) -> HermitianMetric:
    eu = math.exp(p.u)
    z = p.z
    return HermitianMetric(4 * eu, abs(z) ** 2 * eu + 0.25 / eu, 2 * z.conjugate() * eu)


def warren_inverse(p: CPoint) -> HermitianMetric:
    eu = math.exp(p.u)
    z = p.z
    return HermitianMetric(0.25 / eu + abs(z) ** 2 * eu, 4 * eu, -2 * z.conjugate() * eu)


def _gamma_values(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    g = np.zeros(z.shape + (2, 2, 2), dtype=complex)
    g[..., 0, 0, 1] = g[..., 0, 1, 0] = 0.5
    g[..., 0, 1, 1] = z / 2
    g[..., 1, 1, 1] = -0.5
    return g


def warren_christoffel(p: CPoint) -> ChristoffelSet:
    return ChristoffelSet(_gamma_values(p.z))


class WarrenClosedForm:
    """The Warren metric as a closed-form provider with the field query interface."""

    name = "warren-closed"

    def metric(self, p: CPoint) -> HermitianMetric:
        return warren_metric(p)

    def christoffel(self, p: CPoint) -> ChristoffelSet:
        return warren_christoffel(p)

    def metric_batch(self, z, w) -> np.ndarray:
        z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
        eu = np.exp(w.real)
        G = np.empty(np.broadcast(z, w).shape + (2, 2), dtype=complex)
        G[..., 0, 0] = 4 * eu
        G[..., 0, 1] = 2 * np.conj(z) * eu
        G[..., 1, 0] = 2 * z * eu
        G[..., 1, 1] = np.abs(z) ** 2 * eu + 0.25 / eu
        return G

    def christoffel_batch(self, z, w) -> np.ndarray:
        return _gamma_values(np.broadcast_to(z, np.broadcast(z, w).shape))


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class WarrenGeodesicParams:
    z0: complex
    w0: complex
    Z: complex
    W: complex

    @classmethod
    def from_state(cls, p: CPoint, t: CTangent) -> "WarrenGeodesicParams":
        return cls(p.z, p.w, t.Z, t.W)

    @property
    def U(self) -> float:
        return self.W.real

    @property
    def V(self) -> float:
        return self.W.imag


@dataclass(frozen=True)
class QTheta:
    t: float
    Q: float
    theta: float


def q_of_t(W: complex, t: float) -> float:
    """Q(t) = |W|^2 t^2 / 4 - U t + 1, which equals |1 - W t / 2|^2."""
    return abs(W) ** 2 / 4 * t * t - W.real * t + 1


def _theta(W: complex, t: float) -> float:
    U, V = W.real, W.imag
    if V == 0:
        return 0.0
    return 2 * math.atan(U / V) - 2 * math.atan((U - abs(W) ** 2 / 2 * t) / V)


def q_theta(params: WarrenGeodesicParams, t: float) -> QTheta:
    return QTheta(t, q_of_t(params.W, t), _theta(params.W, t))


def _check_domain(params: WarrenGeodesicParams, t: float) -> float:
    Q = q_of_t(params.W, t)
    if not Q > 0:
        raise OutOfDomainError(f"Q({t}) = {Q:.3e} <= 0: geodesic has blown up")
    return Q


def geodesic_closed_form(params: WarrenGeodesicParams, t: float) -> CPoint:
    """Point of the Warren geodesic at time ``t``."""
    Q = _check_domain(params, t)
    W, z0, w0 = params.W, params.z0, params.w0
    u = w0.real - math.log(Q)
    v = w0.imag + _theta(W, t)
    z = (1 - W / 2 * t) * (z0 + (params.Z + z0 * W / 2) * t)
    return CPoint(z.real, z.imag, u, v)


def geodesic_velocity_closed_form(params: WarrenGeodesicParams, t: float) -> CTangent:
    """Time derivative of :func:`geodesic_closed_form`."""
    Q = _check_domain(params, t)
    W, z0 = params.W, params.z0
    U, V = W.real, W.imag
    B = params.Z + z0 * W / 2
    zdot = -W / 2 * (z0 + B * t) + (1 - W / 2 * t) * B
    udot = -(abs(W) ** 2 / 2 * t - U) / Q
    vdot = V / Q
    return CTangent(zdot.real, zdot.imag, udot, vdot)


def first_integral(params: WarrenGeodesicParams, t: float) -> complex:
    """zdot + z wdot along the closed-form geodesic; constant Z + z0 W."""
    p = geodesic_closed_form(params, t)
    vel = geodesic_velocity_closed_form(params, t)
    return vel.Z + p.z * vel.W


def first_integral_of_state(z: complex, Z: complex, W: complex) -> complex:
    return Z + z * W


@dataclass(frozen=True)
class DirectionClass:
    kind: str  # complete | sign_switch | blowup
    t0: float | None = None


def classify_direction(U: float, V: float) -> DirectionClass:
    """How the w-component of a geodesic with initial velocity U + iV behaves."""
    if U <= 0:
        return DirectionClass("complete")
    if V != 0:
        return DirectionClass("sign_switch", 2 * U / (U * U + V * V))
    return DirectionClass("blowup", 2 / U)


def min_q_on(W: complex, t_end: float = 1.0) -> float:
    """Minimum of Q over [0, t_end]."""
    a = abs(W) ** 2 / 4
    ts = [0.0, t_end]
    if a > 0:
        tc = W.real / (2 * a)
        if 0 < tc < t_end:
            ts.append(tc)
    return min(q_of_t(W, s) for s in ts)


def exp_jacobian_closed_form(tangent: CTangent) -> float:
    """Determinant of the time-1 exp-map Jacobian in the (X, Y, U, V) variables.

    The matrix is block upper triangular; only the diagonal blocks enter.
    """
    U, V = tangent.U, tangent.V
    Q1 = q_of_t(tangent.W, 1.0)
    if Q1 == 0:
        raise UndefinedJacobianError(f"Q(1) = 0 for U = {U}, V = {V}")
    upper = np.array([[(2 - U) / 2, V / 2], [-V / 2, (2 - U) / 2]])
    lower = np.array([[(2 - U) / (2 * Q1), -V / (2 * Q1)], [V / (2 * Q1), (2 - U) / (2 * Q1)]])
    return float(np.linalg.det(upper) * np.linalg.det(lower))


def hermitian_speed(G: np.ndarray, Z: complex, W: complex) -> float:
    v = np.array([Z, W])
    return float(np.real(v @ G @ np.conj(v)))
