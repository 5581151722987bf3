"""The K_h family of unit-determinant metrics built from a real generator h(w).

    K_h = [[e^h,                 zbar d(e^h)/dwbar            ],
           [z d(e^h)/dw,         |z|^2 d^2(e^h)/dw dwbar + e^-h]]

det K_h - 1 = |z|^2 e^{2h} h_{w wbar}, so K_h is unimodular exactly when h
is harmonic, and then it is also flat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import expr as ex
from .expr import Expr
from .metricfield import CPoint, MetricField
from .wirtinger import derive, derive_eval

HARMONIC_TOL = 1e-10
DET_TOL = 1e-10
CURVATURE_TOL = 1e-8
CHRISTOFFEL_TOL = 1e-9

_PROBES = [CPoint(0, 0, u, v) for u, v in ((0.3, 0.1), (-0.7, 0.4), (1.1, -0.9), (0.05, 1.3), (-1.2, -0.6))]


class GeneratorError(ValueError):
    pass


class KhField(MetricField):
    def __init__(self, h: Expr, name: str | None = None):
        eh = ex.exp(h)
        z, zbar = ex.var("z"), ex.var("zbar")
        entries = [
            [eh, ex.mul(zbar, derive(eh, "wbar"))],
            [ex.mul(z, derive(eh, "w")), ex.add(ex.mul(ex.mul(z, zbar), derive(eh, ("w", "wbar"))), ex.exp(ex.neg(h)))],
        ]
        super().__init__(entries, name=name or f"K_h[{ex.to_source(h)}]")
        self.h = h


def build_kh(h: Expr | str) -> KhField:
    """Metric field K_h for a real generator ``h`` in w, wbar only."""
    name = None
    if isinstance(h, str):
        name = f"K_h[{h}]"
        h = ex.parse(h)
    stray = h.symbols() - {"w", "wbar"}
    if stray:
        raise GeneratorError(f"h must depend on w only, found {', '.join(sorted(stray))}")
    for p in _PROBES:
        try:
            val = ex.evaluate(h, p)
        except ex.EvalError:
            continue
        if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
            raise GeneratorError(f"h is not real: Im h = {val.imag:.3e} at w = {p.w}")
    return KhField(h, name=name)


def laplacian_h(h: Expr, p: CPoint) -> float:
    """Delta h = 4 d^2 h / dw dwbar."""
    val = 4 * derive_eval(h, ("w", "wbar"), p)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"Laplacian has imaginary part {val.imag:.3e}")
    return val.real


def conformal_curvature(rho: Expr, p: CPoint) -> float:
    """R(rho) = rho^-1 (rho_{w wbar} - |rho_w|^2 / rho) for the metric rho |dw|^2."""
    r = ex.evaluate(rho, p).real
    r_w = derive_eval(rho, "w", p)
    r_wwb = derive_eval(rho, ("w", "wbar"), p).real
    return (r_wwb - abs(r_w) ** 2 / r) / r


def det_identity_rhs(h: Expr, p: CPoint) -> float:
    """|z|^2 e^{2h} R(e^h), which should equal det K_h - 1."""
    hv = ex.evaluate(h, p).real
    return abs(p.z) ** 2 * np.exp(2 * hv) * conformal_curvature(ex.exp(h), p)


def kh_closed_christoffel(h: Expr, p: CPoint) -> tuple[complex, complex]:
    """(Gamma^z_ww, Gamma^w_ww) = (z (2 h_w^2 + h_ww), -h_w) for harmonic h."""
    h_w = derive_eval(h, "w", p)
    h_ww = derive_eval(h, ("w", "w"), p)
    return p.z * (2 * h_w**2 + h_ww), -h_w


@dataclass(frozen=True)
class KhReport:
    n_points: int
    harmonic: bool
    max_abs_laplacian: float
    max_det_deviation: float
    max_curvature: float
    max_christoffel_deviation: float
    max_kahler_residual: float

    @property
    def passed(self) -> bool | None:
        """None when h is not harmonic: nothing is claimed for that case."""
        if not self.harmonic:
            return None
        return (
            self.max_det_deviation <= DET_TOL
            and self.max_curvature <= CURVATURE_TOL
            and self.max_christoffel_deviation <= CHRISTOFFEL_TOL
        )


def kh_report(field: KhField, points: Iterable[CPoint]) -> KhReport:
    lap = det_dev = curv = chris = kahler = 0.0
    n = 0
    for p in points:
        n += 1
        lap = max(lap, abs(laplacian_h(field.h, p)))
        det_dev = max(det_dev, abs(float(field.metric(p).det) - 1))
        curv = max(curv, field.curvature(p).max_abs)
        gz, gw = kh_closed_christoffel(field.h, p)
        g = field.christoffel(p)
        chris = max(chris, abs(g("z", "w", "w") - gz), abs(g("w", "w", "w") - gw))
        kahler = max(kahler, field.kahler_residual(p))
    return KhReport(n, lap <= HARMONIC_TOL, lap, det_dev, curv, chris, kahler)
