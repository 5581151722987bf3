"""Geodesic integration for any metric field.

The complex geodesic equations zddot^a + Gamma^a_{bc} zdot^b zdot^c = 0 are
integrated as an 8-dimensional real system (x, y, u, v and their velocities)
with the Dormand-Prince 5(4) pair.  Every routine works on a batch of
trajectories at once; each row keeps its own time and step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metricfield import CPoint, CTangent

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

BLOWUP_U = 50.0
MIN_STEP = 1e-12
MIN_REL_STEP = 1e-6
GROWTH_FACTOR = 100.0
TOL_RANGE = (1e-13, 1e-3)

ACTIVE, REACHED, BLOWUP, COLLAPSE = 0, 1, 2, 3
_STATUS_NAMES = {REACHED: "reached_t_end", BLOWUP: "blowup_detected", COLLAPSE: "step_collapse"}


class GeodesicError(RuntimeError):
    pass


class BlowupError(GeodesicError):
    def __init__(self, message: str, t: float | None = None):
        self.t = t
        super().__init__(message)


class NotPositiveDefiniteError(GeodesicError):
    pass


@dataclass(frozen=True)
class GeodesicState:
    t: float
    p: CPoint
    velocity: CTangent

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p.as_array(), self.velocity.as_array()])

    @classmethod
    def from_array(cls, t: float, y) -> "GeodesicState":
        return cls(float(t), CPoint.from_array(y[:4]), CTangent.from_array(y[4:]))


@dataclass(frozen=True)
class Termination:
    kind: str  # reached_t_end | blowup_detected | step_collapse
    t: float


@dataclass
class GeodesicTrace:
    """Accepted steps of one integration.

    ``on_grid`` marks the samples that sit on the output stride; those are
    what gets written out, and they are accepted steps, not interpolants.
    """

    times: np.ndarray
    states: np.ndarray
    on_grid: np.ndarray
    termination: Termination
    speed: np.ndarray
    first_integral: np.ndarray | None = None
    n_rejected: int = 0

    @property
    def samples(self) -> list[GeodesicState]:
        return [GeodesicState.from_array(t, y) for t, y in zip(self.times, self.states)]

    @property
    def final(self) -> GeodesicState:
        return GeodesicState.from_array(self.times[-1], self.states[-1])

    @property
    def speed_drift(self) -> float:
        s0 = self.speed[0]
        return float(np.max(np.abs(self.speed - s0)) / max(abs(s0), 1e-300))

    def first_integral_drift(self) -> float | None:
        if self.first_integral is None:
            return None
        return float(np.max(np.abs(self.first_integral - self.first_integral[0])))


def geodesic_rhs(field, y: np.ndarray) -> np.ndarray:
    """Time derivative of states ``y[..., 8]`` = (x, y, u, v, xdot, ydot, udot, vdot)."""
    y = np.asarray(y, dtype=float)
    z = y[..., 0] + 1j * y[..., 1]
    w = y[..., 2] + 1j * y[..., 3]
    vel = np.stack([y[..., 4] + 1j * y[..., 5], y[..., 6] + 1j * y[..., 7]], axis=-1)
    gamma = field.christoffel_batch(z, w)
    acc = -np.einsum("...abc,...b,...c->...a", gamma, vel, vel)
    out = np.empty_like(y)
    out[..., :4] = y[..., 4:]
    out[..., 4] = acc[..., 0].real
    out[..., 5] = acc[..., 0].imag
    out[..., 6] = acc[..., 1].real
    out[..., 7] = acc[..., 1].imag
    return out


def _check_tolerances(rtol: float, atol: float) -> None:
    lo, hi = TOL_RANGE
    for name, tol in (("rtol", rtol), ("atol", atol)):
        if not lo <= tol <= hi:
            raise ValueError(f"{name} = {tol} outside [{lo}, {hi}]")


def _block_scale(y: np.ndarray) -> np.ndarray:
    # Positions share one error scale and velocities another: a component
    # that should stay at zero (vdot for a real initial velocity) carries
    # rounding noise from the Christoffel contraction that a per-component
    # scale would chase with ever smaller steps.
    a = np.abs(y)
    out = np.empty_like(a)
    out[:, :4] = a[:, :4].max(axis=1, keepdims=True)
    out[:, 4:] = a[:, 4:].max(axis=1, keepdims=True)
    return out


def _initial_step(f0, y0, span, rtol, atol):
    sc = atol + rtol * _block_scale(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2, axis=-1))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2, axis=-1))
    h = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    return np.minimum(np.maximum(h, 1e-6), span)


@dataclass
class _BatchResult:
    t: np.ndarray
    y: np.ndarray
    status: np.ndarray
    n_rejected: int = 0


def _dopri_batch(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_end: float,
    rtol: float,
    atol: float,
    stride: float | None = None,
    observer: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
    max_steps: int = 200_000,
) -> _BatchResult:
    y = np.array(y0, dtype=float)
    n = y.shape[0]
    t = np.zeros(n)
    status = np.full(n, ACTIVE)
    with np.errstate(all="ignore"):
        k1 = rhs(y)
    h = _initial_step(k1, y, t_end, rtol, atol)
    grid_k = np.ones(n)  # index of the next stride point
    last_norm = np.linalg.norm(y, axis=1)
    norm0 = last_norm.copy()
    rejected = 0
    eps_t = 1e-13 * max(1.0, abs(t_end))

    for _ in range(max_steps):
        idx = np.flatnonzero(status == ACTIVE)
        if idx.size == 0:
            break
        ti, yi, hi, k1i = t[idx], y[idx], h[idx], k1[idx]
        limit = np.full(idx.size, float(t_end))
        if stride:
            limit = np.minimum(limit, grid_k[idx] * stride)
        hs = np.minimum(hi, limit - ti)
        clipped = hs < hi

        K = np.empty((7,) + yi.shape)
        K[0] = k1i
        with np.errstate(all="ignore"):
            for s in range(1, 7):
                ys = yi + hs[:, None] * np.tensordot(np.array(_A[s]), K[:s], axes=(0, 0))
                K[s] = rhs(ys)
            y_new = yi + hs[:, None] * np.tensordot(_B5[:6], K[:6], axes=(0, 0))
            err_vec = hs[:, None] * np.tensordot(_E, K, axes=(0, 0))
            sc = atol + rtol * np.maximum(_block_scale(yi), _block_scale(y_new))
            err = np.sqrt(np.mean((err_vec / sc) ** 2, axis=1))
        bad = ~np.all(np.isfinite(y_new), axis=1) | ~np.isfinite(err)
        err[bad] = np.inf
        accept = err <= 1.0
        rejected += int(np.count_nonzero(~accept))

        with np.errstate(divide="ignore"):
            fac = np.clip(0.9 * err ** -0.2, 0.2, 5.0)
        fac[~accept] = np.minimum(fac[~accept], 1.0)
        fac[bad] = 0.2
        h_new = hs * fac
        h_new = np.where(clipped & accept, np.maximum(h_new, hi), h_new)

        a = idx[accept]
        t[a] = ti[accept] + hs[accept]
        y[a] = y_new[accept]
        k1[a] = K[6][accept]
        h[idx] = h_new

        if a.size:
            new_norm = np.linalg.norm(y[a], axis=1)
            grows = new_norm > last_norm[a]
            last_norm[a] = new_norm
            landed = np.zeros(a.size, dtype=bool)
            if stride:
                landed = np.abs(t[a] - grid_k[a] * stride) <= eps_t
                grid_k[a] += landed
            done = t[a] >= t_end - eps_t
            landed |= done
            if observer is not None:
                observer(a, t[a], y[a], landed)
            status[a[done]] = REACHED
            blown = (np.abs(y[a, 2]) > BLOWUP_U) & ~done
            tiny = (hs[accept] < MIN_STEP) & grows & ~done
            # noise-limited crawl towards a singularity: the step is tiny
            # relative to the elapsed time and the state has grown a lot
            crawl = (
                (hs[accept] < MIN_REL_STEP * np.maximum(1.0, t[a]))
                & grows
                & (new_norm > GROWTH_FACTOR * np.maximum(norm0[a], 1.0))
                & ~done
            )
            status[a[blown | tiny | crawl]] = BLOWUP

        # a row whose step keeps shrinking without progress has collapsed
        still = idx[status[idx] == ACTIVE]
        stuck = still[h[still] < MIN_STEP * 1e-3]
        if stuck.size:
            growing = np.linalg.norm(y[stuck], axis=1) >= last_norm[stuck]
            grew_far = np.abs(y[stuck, 2]) > 1.0 + np.abs(y0[stuck, 2])
            status[stuck] = np.where(growing & grew_far, BLOWUP, COLLAPSE)
    else:
        status[status == ACTIVE] = COLLAPSE

    return _BatchResult(t, y, status, rejected)


def _first_integral_enabled(field) -> bool:
    return getattr(field, "name", "") in ("warren", "warren-closed")


def _speeds(field, y: np.ndarray) -> np.ndarray:
    z = y[:, 0] + 1j * y[:, 1]
    w = y[:, 2] + 1j * y[:, 3]
    vel = np.stack([y[:, 4] + 1j * y[:, 5], y[:, 6] + 1j * y[:, 7]], axis=-1)
    G = field.metric_batch(z, w)
    return np.real(np.einsum("na,nab,nb->n", vel, G, np.conj(vel)))


def _first_integrals(y: np.ndarray) -> np.ndarray:
    z = y[:, 0] + 1j * y[:, 1]
    return (y[:, 4] + 1j * y[:, 5]) + z * (y[:, 6] + 1j * y[:, 7])


def _require_pd(field, p: CPoint) -> None:
    m = field.metric(p)
    if not m.positive_definite:
        raise NotPositiveDefiniteError(f"metric is not positive definite at {p}")


def integrate(
    field,
    start: GeodesicState,
    t_end: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    stride: float | None = 1e-2,
) -> GeodesicTrace:
    """Integrate one geodesic from ``start`` up to ``t_end``.

    The run stops early with ``blowup_detected`` once |u| exceeds 50 or the
    accepted step drops below 1e-12 while the state keeps growing.  With a
    ``stride`` the steps are clipped so that every multiple of it is hit
    exactly.
    """
    _check_tolerances(rtol, atol)
    if not t_end > start.t:
        raise ValueError("t_end must exceed the start time")
    _require_pd(field, start.p)

    span = t_end - start.t
    times, states, grid = [0.0], [start.as_array()], [True]

    def observe(rows, ts, ys, landed):
        times.append(float(ts[0]))
        states.append(ys[0].copy())
        grid.append(bool(landed[0]))

    res = _dopri_batch(
        lambda y: geodesic_rhs(field, y),
        start.as_array()[None, :],
        span,
        rtol,
        atol,
        stride=stride,
        observer=observe,
    )
    st = np.array(states)
    kind = _STATUS_NAMES[int(res.status[0])]
    t_arr = np.array(times) + start.t
    return GeodesicTrace(
        times=t_arr,
        states=st,
        on_grid=np.array(grid),
        termination=Termination(kind, float(t_arr[-1])),
        speed=_speeds(field, st),
        first_integral=_first_integrals(st) if _first_integral_enabled(field) else None,
        n_rejected=res.n_rejected,
    )


def integrate_batch(
    field,
    starts: np.ndarray,
    t_end: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate many geodesics from t = 0; returns (final states, final times, status codes)."""
    _check_tolerances(rtol, atol)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    res = _dopri_batch(lambda y: geodesic_rhs(field, y), starts, t_end, rtol, atol)
    return res.y, res.t, res.status


def exp_map_batch(field, base, tangents: np.ndarray, rtol: float = 1e-11, atol: float = 1e-12):
    """Time-1 endpoints (x, y, u, v) for a batch of tangents at ``base``.

    Returns ``(points, ok)``; rows that blew up or collapsed before t = 1
    have ``ok`` False.
    """
    tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
    base = np.broadcast_to(np.asarray(base, dtype=float), tangents.shape)
    y_end, _, status = integrate_batch(field, np.concatenate([base, tangents], axis=1), 1.0, rtol, atol)
    return y_end[:, :4], status == REACHED


def exp_map(field, base: CPoint, tangent: CTangent, rtol: float = 1e-11, atol: float = 1e-12) -> CPoint:
    """Endpoint at t = 1 of the geodesic leaving ``base`` with velocity ``tangent``."""
    _require_pd(field, base)
    if not np.any(tangent.as_array()):
        return base
    y_end, t_end, status = integrate_batch(
        field, np.concatenate([base.as_array(), tangent.as_array()])[None, :], 1.0, rtol, atol
    )
    if status[0] != REACHED:
        raise BlowupError(
            f"geodesic from {base} with velocity {tangent} ends ({_STATUS_NAMES[int(status[0])]}) at t = {t_end[0]:.6g} < 1",
            float(t_end[0]),
        )
    return CPoint.from_array(y_end[0, :4])
