"""Geodesic balls: tangent frames, exp-map Jacobians and Monte Carlo volumes.

Complex 2x2 matrices act on real 4-vectors (x, y, u, v) through the
embedding a + bi -> [[a, -b], [b, a]] applied blockwise.  A Hermitian matrix
becomes a symmetric 4x4 this way.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geodesic import NotPositiveDefiniteError, exp_map_batch
from .metricfield import CPoint, CTangent, HermitianMetric, inverse

THREADS_ENV = "GEOMLAB_THREADS"
CHUNK = 2048


class BlowupSampleError(RuntimeError):
    def __init__(self, xi: np.ndarray, tangent: np.ndarray):
        self.xi = xi
        self.tangent = tangent
        super().__init__(
            "exp map undefined for sample direction "
            f"{np.array2string(xi, precision=6)} (tangent {np.array2string(tangent, precision=6)})"
        )


def embed(m: np.ndarray) -> np.ndarray:
    """Real 4x4 matrix of a complex 2x2 matrix."""
    m = np.asarray(m)
    out = np.empty((4, 4), dtype=m.real.dtype)
    for i in range(2):
        for j in range(2):
            a, b = m[i, j].real, m[i, j].imag
            out[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = [[a, -b], [b, a]]
    return out


def hermitian_sqrt(m: HermitianMetric) -> np.ndarray:
    """Positive square root of a positive-definite 2x2 Hermitian matrix.

    sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)).
    """
    if not m.positive_definite:
        raise NotPositiveDefiniteError("square root needs a positive-definite matrix")
    s = np.sqrt(m.det)
    t = np.sqrt(m.g11 + m.g22 + 2 * s)
    dtype = np.result_type(m.g11, m.g12, np.complex128)
    return np.array([[(m.g11 + s) / t, m.g12 / t], [np.conj(m.g12) / t, (m.g22 + s) / t]], dtype=dtype)


def sqrt_inverse(m: HermitianMetric) -> np.ndarray:
    """Real 4x4 form of the transpose of the positive square root of m^-1.

    It maps the Euclidean ball onto the metric ball of the tangent space:
    |xi| = r iff the Hermitian speed of ``transform @ xi`` is r^2.
    """
    S = hermitian_sqrt(inverse(m))
    return embed(S.T).astype(float)


@dataclass(frozen=True)
class TangentFrame:
    base: CPoint
    transform: np.ndarray

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.transform))

    def apply(self, xi: np.ndarray) -> np.ndarray:
        return np.asarray(xi) @ self.transform.T


def tangent_frame(field, base: CPoint) -> TangentFrame:
    m = field.metric(base)
    if not m.positive_definite:
        raise NotPositiveDefiniteError(f"metric is not positive definite at {base}")
    return TangentFrame(base, sqrt_inverse(m))


def _jacobian_dets(field, frame: TangentFrame, xis: np.ndarray, h: float, rtol: float, atol: float):
    """Determinants of d/dxi exp(base, frame xi) by central differences.

    Returns ``(dets, ok)``; ``ok`` is False where any stencil point blew up.
    """
    n = xis.shape[0]
    steps = np.concatenate([np.eye(4), -np.eye(4)]) * h  # (8, 4)
    stencil = (xis[:, None, :] + steps[None, :, :]).reshape(-1, 4)
    ends, ok = exp_map_batch(field, frame.base.as_array(), frame.apply(stencil), rtol=rtol, atol=atol)
    ends = ends.reshape(n, 8, 4)
    ok = ok.reshape(n, 8).all(axis=1)
    # J[k, :, i] = d exp / d xi_i
    J = (ends[:, :4, :] - ends[:, 4:, :]).transpose(0, 2, 1) / (2 * h)
    with np.errstate(all="ignore"):
        dets = np.linalg.det(J)
    return dets, ok


def exp_jacobians(
    field,
    base: CPoint,
    tangents: np.ndarray,
    h: float = 1e-5,
    rtol: float = 1e-12,
    atol: float = 1e-13,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`exp_jacobian_numeric` over rows of normalized tangents.

    Returns ``(dets, ok)``; rows whose stencil blew up have ``ok`` False.
    """
    frame = tangent_frame(field, base)
    return _jacobian_dets(field, frame, np.atleast_2d(np.asarray(tangents, dtype=float)), h, rtol, atol)


def exp_jacobian_numeric(
    field,
    base: CPoint,
    tangent: CTangent,
    h: float = 1e-5,
    rtol: float = 1e-12,
    atol: float = 1e-13,
) -> float:
    """det of the Jacobian of xi -> exp(base, frame xi) at xi = ``tangent``.

    ``tangent`` is in the normalized variables, i.e. before the frame.
    """
    xi = tangent.as_array()
    dets, ok = exp_jacobians(field, base, xi, h, rtol, atol)
    if not ok[0]:
        raise BlowupSampleError(xi, tangent_frame(field, base).apply(xi))
    return float(dets[0])


@dataclass(frozen=True)
class VolumeEstimate:
    estimate: float
    stderr: float
    n: int
    n_inside: int
    n_skipped: int
    euclidean: float


def euclidean_ball_volume(r: float) -> float:
    return math.pi**2 * r**4 / 2


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        return max(1, int(raw))
    return min(8, os.cpu_count() or 1)


def ball_volume_mc(
    field,
    base: CPoint,
    r: float,
    n: int,
    seed: int,
    skip_blowup: bool = False,
    h: float = 1e-5,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    threads: int | None = None,
) -> VolumeEstimate:
    """Monte Carlo estimate of the integral of the exp-map Jacobian over the Euclidean r-ball.

    Points are drawn uniformly in the cube [-r, r]^4; the integrand is the
    Jacobian inside the ball and zero outside, so the estimate is 16 r^4
    times the sample mean.  Sample chunk k draws from its own child of
    ``SeedSequence(seed)``, which makes the result a function of
    ``(seed, n)`` alone, whatever the thread count.
    """
    if n < 1000:
        raise ValueError(f"need at least 1000 samples, got {n}")
    if r < 0:
        raise ValueError("radius must be non-negative")
    if r == 0:
        return VolumeEstimate(0.0, 0.0, n, 0, 0, 0.0)

    frame = tangent_frame(field, base)
    n_chunks = -(-n // CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)

    def run(k: int):
        m = min(CHUNK, n - k * CHUNK)
        rng = np.random.default_rng(seeds[k])
        xi = rng.uniform(-r, r, size=(m, 4))
        inside = np.einsum("ij,ij->i", xi, xi) < r * r
        vals = np.zeros(m)
        skipped = 0
        if inside.any():
            dets, ok = _jacobian_dets(field, frame, xi[inside], h, rtol, atol)
            if not ok.all():
                if not skip_blowup:
                    bad = xi[inside][~ok][0]
                    raise BlowupSampleError(bad, frame.apply(bad))
                skipped = int(np.count_nonzero(~ok))
                dets = np.where(ok, dets, 0.0)
            vals[inside] = dets
        return float(vals.sum()), float((vals * vals).sum()), int(inside.sum()), skipped

    workers = threads or _threads()
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(k) for k in range(n_chunks)]

    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    cube = (2 * r) ** 4
    return VolumeEstimate(
        estimate=cube * mean,
        stderr=cube * math.sqrt(var / n),
        n=n,
        n_inside=sum(p[2] for p in parts),
        n_skipped=sum(p[3] for p in parts),
        euclidean=euclidean_ball_volume(r),
    )
