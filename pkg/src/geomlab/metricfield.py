"""Hermitian metrics on C^2 and their Kähler connection and curvature.

Index convention: a metric matrix ``G[a][b] = g_{a bbar}`` with a, b in
(z, w).  For a potential f, ``G[a][b] = d^2 f / dz_a dzbar_b``, so the
top-right entry is d^2 f / dz dwbar.  The inverse matrix ``H = G^-1`` holds
``H[nu][a] = g^{nubar a}``.

Christoffel symbols use the Kähler form
``Gamma^a_{bc} = d_b G[c][nu] * H[nu][a]`` and curvature the Kähler shortcut
``R^d_{a bbar c} = -d_bbar Gamma^d_{ac}``.  Pointwise queries run in numpy
extended precision because both expressions cancel terms of size
``|z|^2 e^{2u}`` and larger; the batch entry points used by the integrator
run in float64.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import expr as ex
from . import wirtinger
from .expr import Expr

INDEX = {"z": 0, "w": 1, 0: 0, 1: 1}
HOLO = ("z", "w")
ANTI = ("zbar", "wbar")

SINGULAR_DET = 1e-14
DIAG_IMAG_TOL = 1e-11

EXTENDED = np.clongdouble


class SingularMetricError(ArithmeticError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CPoint:
    """Point (z, w) = (x + iy, u + iv) of C^2."""

    x: float
    y: float
    u: float
    v: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.u, self.v])):
            raise ValueError(f"non-finite point {self}")

    @classmethod
    def from_complex(cls, z: complex, w: complex) -> "CPoint":
        z, w = complex(z), complex(w)
        return cls(z.real, z.imag, w.real, w.imag)

    @classmethod
    def from_array(cls, a) -> "CPoint":
        x, y, u, v = (float(c) for c in a)
        return cls(x, y, u, v)

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @property
    def w(self) -> complex:
        return complex(self.u, self.v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.u, self.v])


@dataclass(frozen=True)
class CTangent:
    """Tangent vector (Z, W) = (X + iY, U + iV)."""

    X: float
    Y: float
    U: float
    V: float

    @classmethod
    def from_complex(cls, Z: complex, W: complex) -> "CTangent":
        Z, W = complex(Z), complex(W)
        return cls(Z.real, Z.imag, W.real, W.imag)

    @classmethod
    def from_array(cls, a) -> "CTangent":
        X, Y, U, V = (float(c) for c in a)
        return cls(X, Y, U, V)

    @property
    def Z(self) -> complex:
        return complex(self.X, self.Y)

    @property
    def W(self) -> complex:
        return complex(self.U, self.V)

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.U, self.V])


@dataclass(frozen=True)
class HermitianMetric:
    """2x2 Hermitian matrix [[g11, g12], [conj(g12), g22]].

    Entries may be numpy extended-precision scalars; ``det`` is computed in
    the same precision.
    """

    g11: Any
    g22: Any
    g12: Any
    det: Any = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "det", self.g11 * self.g22 - (self.g12 * np.conj(self.g12)).real)

    @property
    def g21(self):
        return np.conj(self.g12)

    @property
    def positive_definite(self) -> bool:
        return bool(self.g11 > 0 and self.det > 0)

    def matrix(self, dtype=np.complex128) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g21, self.g22]], dtype=dtype)

    @classmethod
    def from_matrix(cls, m) -> "HermitianMetric":
        return cls(m[0][0].real, m[1][1].real, m[0][1])

    def norm2(self, t: CTangent) -> float:
        """Hermitian speed sum g_{a bbar} V^a conj(V^b)."""
        v = np.array([t.Z, t.W])
        return float(np.real(v @ self.matrix() @ np.conj(v)))


def inverse(m: HermitianMetric) -> HermitianMetric:
    if abs(m.det) < SINGULAR_DET:
        raise SingularMetricError(f"metric is singular (det = {float(m.det):.3e})")
    return HermitianMetric(m.g22 / m.det, m.g11 / m.det, -m.g12 / m.det)


def _sym_label(i: int) -> str:
    return HOLO[i]


@dataclass(frozen=True)
class ChristoffelSet:
    """Gamma^a_{bc}, indexed ``values[a, b, c]`` with 0 = z, 1 = w.

    Only b <= c is computed; ``values[a, 1, 0]`` is a copy of
    ``values[a, 0, 1]``.
    """

    values: np.ndarray

    def __call__(self, a, b, c) -> complex:
        return complex(self.values[INDEX[a], INDEX[b], INDEX[c]])

    def as_dict(self) -> dict[str, complex]:
        out = {}
        for a in range(2):
            for b, c in ((0, 0), (0, 1), (1, 1)):
                out[f"{_sym_label(a)}_{_sym_label(b)}{_sym_label(c)}"] = complex(self.values[a, b, c])
        return out


@dataclass(frozen=True)
class CurvatureTensor:
    """R^d_{a bbar c}, indexed ``values[d, a, b, c]``."""

    values: np.ndarray

    def __call__(self, d, a, b, c) -> complex:
        return complex(self.values[INDEX[d], INDEX[a], INDEX[b], INDEX[c]])

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _symmetrize(gamma: np.ndarray) -> np.ndarray:
    gamma = np.array(gamma)
    gamma[..., 1, 0] = gamma[..., 0, 1]
    return gamma


def _inv2(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched 2x2 inverse by cofactors; returns (H, det)."""
    a, b = G[..., 0, 0], G[..., 0, 1]
    c, d = G[..., 1, 0], G[..., 1, 1]
    det = a * d - b * c
    H = np.empty_like(G)
    H[..., 0, 0] = d / det
    H[..., 0, 1] = -b / det
    H[..., 1, 0] = -c / det
    H[..., 1, 1] = a / det
    return H, det


def christoffel_from_jet(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Gamma[..., a, b, c] from metric G[..., a, b] and dG[..., c, a, b] = d_c G[a][b]."""
    H, _ = _inv2(G)
    # Gamma^a_{bc} = sum_nu d_b G[c][nu] H[nu][a]
    return np.einsum("...bcn,...na->...abc", dG, H)


def curvature_from_jet(G, dG, dbarG, ddG) -> np.ndarray:
    """R[..., d, a, b, c] = -d_bbar Gamma^d_{ac}.

    ``dbarG[..., b, p, q] = d_bbar G[p][q]`` and
    ``ddG[..., a, b, p, q] = d_bbar d_a G[p][q]``.
    """
    H, _ = _inv2(G)
    # d_bbar H = -H (d_bbar G) H
    dbarH = -np.einsum("...pq,...bqr,...rs->...bps", H, dbarG, H)
    term1 = np.einsum("...abcn,...nd->...dabc", ddG, H)
    term2 = np.einsum("...acn,...bnd->...dabc", dG, dbarH)
    return -(term1 + term2)


class MetricField:
    """Metric field given by four entry expressions ``G[a][b] = g_{a bbar}``.

    Derivative trees and their compiled evaluators are built on first use
    and never change afterwards, so one instance can serve many threads.
    """

    def __init__(self, entries: Sequence[Sequence[Expr]], name: str = "custom", potential: Expr | None = None):
        self.entries = tuple(tuple(row) for row in entries)
        if len(self.entries) != 2 or any(len(r) != 2 for r in self.entries):
            raise ValueError("metric needs a 2x2 array of entries")
        self.name = name
        self.potential = potential
        self._jets: dict[tuple[int, bool], Callable] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_potential(cls, f: Expr | str, name: str | None = None) -> "MetricField":
        if isinstance(f, str):
            src, f = f, ex.parse(f)
            name = name or src
        entries = [[wirtinger.derive(f, (a, b)) for b in ANTI] for a in HOLO]
        return cls(entries, name=name or "potential", potential=f)

    def __repr__(self):
        return f"MetricField({self.name!r})"

    # -- symbolic jets --------------------------------------------------

    def _trees(self, level: int) -> list[Expr]:
        E = self.entries
        trees = [E[a][b] for a in range(2) for b in range(2)]
        if level >= 1:
            trees += [wirtinger.derive(E[a][b], HOLO[c]) for c in range(2) for a in range(2) for b in range(2)]
        if level >= 2:
            trees += [wirtinger.derive(E[p][q], ANTI[b]) for b in range(2) for p in range(2) for q in range(2)]
            trees += [
                wirtinger.derive(wirtinger.derive(E[p][q], HOLO[a]), ANTI[b])
                for a in range(2)
                for b in range(2)
                for p in range(2)
                for q in range(2)
            ]
        return trees

    def _jet_fn(self, level: int, checked: bool) -> Callable:
        key = (level, checked)
        with self._lock:
            fn = self._jets.get(key)
        if fn is None:
            fn = ex.compile_exprs(self._trees(level), checked=checked)
            with self._lock:
                self._jets[key] = fn
        return fn

    def jet(self, level: int, z, zbar, w, wbar, checked: bool = False) -> dict[str, np.ndarray]:
        """Metric and entry derivatives up to ``level`` (0, 1 or 2)."""
        with np.errstate(all="ignore"):
            vals = self._jet_fn(level, checked)(z, zbar, w, wbar)
        shape = np.broadcast(z, w).shape
        vals = [np.broadcast_to(np.asarray(v), shape) for v in vals]
        stack = np.stack(vals, axis=-1)
        out = {"G": stack[..., 0:4].reshape(shape + (2, 2))}
        if level >= 1:
            out["dG"] = stack[..., 4:12].reshape(shape + (2, 2, 2))
        if level >= 2:
            out["dbarG"] = stack[..., 12:20].reshape(shape + (2, 2, 2))
            out["ddG"] = stack[..., 20:36].reshape(shape + (2, 2, 2, 2))
        return out

    def _point_jet(self, level: int, p: CPoint) -> dict[str, np.ndarray]:
        return self.jet(level, *ex.point_args(p, EXTENDED), checked=True)

    # -- pointwise queries ------------------------------------------------

    def metric(self, p: CPoint) -> HermitianMetric:
        G = self._point_jet(0, p)["G"]
        return _hermitian(G)

    def christoffel(self, p: CPoint) -> ChristoffelSet:
        j = self._point_jet(1, p)
        _require_nonsingular(_hermitian(j["G"]))
        gamma = christoffel_from_jet(j["G"], j["dG"])
        return ChristoffelSet(_symmetrize(gamma).astype(np.complex128))

    def curvature(self, p: CPoint) -> CurvatureTensor:
        j = self._point_jet(2, p)
        _require_nonsingular(_hermitian(j["G"]))
        R = curvature_from_jet(j["G"], j["dG"], j["dbarG"], j["ddG"])
        return CurvatureTensor(R.astype(np.complex128))

    def kahler_residual(self, p: CPoint) -> float:
        dG = self._point_jet(1, p)["dG"]
        # d_c G[a][b] - d_a G[c][b]
        diff = dG - np.transpose(dG, (1, 0, 2))
        return float(np.max(np.abs(diff)))

    # -- batch queries (float64, no singularity checks) --------------------

    def metric_batch(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.jet(0, z, np.conj(z), w, np.conj(w))["G"]

    def christoffel_batch(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        j = self.jet(1, z, np.conj(z), w, np.conj(w))
        with np.errstate(all="ignore"):
            return _symmetrize(christoffel_from_jet(j["G"], j["dG"]))


def _hermitian(G: np.ndarray) -> HermitianMetric:
    g11, g22 = G[0, 0], G[1, 1]
    for name, g in (("g11", g11), ("g22", g22)):
        if abs(g.imag) > DIAG_IMAG_TOL * max(1.0, abs(g.real)):
            raise NumericalError(f"diagonal entry {name} has imaginary part {float(g.imag):.3e}")
    off = abs(G[0, 1] - np.conj(G[1, 0]))
    if off > DIAG_IMAG_TOL * max(1.0, abs(G[0, 1])):
        raise NumericalError(f"metric is not Hermitian (|g12 - conj(g21)| = {float(off):.3e})")
    return HermitianMetric(g11.real, g22.real, G[0, 1])


def _require_nonsingular(m: HermitianMetric) -> None:
    if abs(m.det) < SINGULAR_DET:
        raise SingularMetricError(f"metric is singular (det = {float(m.det):.3e})")


# Module-level query functions.  Any object with the matching method works,
# which is how the closed-form providers plug in.


def metric_at(field, p: CPoint) -> HermitianMetric:
    return field.metric(p)


def christoffel_at(field, p: CPoint) -> ChristoffelSet:
    return field.christoffel(p)


def curvature_at(field, p: CPoint) -> CurvatureTensor:
    return field.curvature(p)


def kahler_residual(field, p: CPoint) -> float:
    return field.kahler_residual(p)


def euclidean_field() -> MetricField:
    return MetricField.from_potential("|z|^2 + |w|^2", name="euclidean")


def random_points(rng: np.random.Generator, n: int, box: float = 3.0) -> list[CPoint]:
    """``n`` uniform points with every real coordinate in [-box, box]."""
    xs = rng.uniform(-box, box, size=(n, 4))
    return [CPoint.from_array(row) for row in xs]
