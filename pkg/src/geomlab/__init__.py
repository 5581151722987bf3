"""Symbolic and numeric verification of Kähler metrics on C^2."""

from .expr import Expr, parse, to_source
from .metricfield import CPoint, CTangent, HermitianMetric, MetricField, euclidean_field
from .warren import WarrenClosedForm, warren_field

__all__ = [
    "CPoint",
    "CTangent",
    "Expr",
    "HermitianMetric",
    "MetricField",
    "WarrenClosedForm",
    "euclidean_field",
    "parse",
    "to_source",
    "warren_field",
]
__version__ = "0.1.0"
