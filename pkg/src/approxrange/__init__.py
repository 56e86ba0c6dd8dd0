"""Approximate range emptiness: a filter answering "is S ∩ [a, b] empty?" with one-sided error."""

from .core import Interval, ParamError, Params, PointSet, validate_params
from .filter import BloomBaseline, FilterFormatError, IntervalTooLong, RangeFilter, measure_fpr
from .rangestruct import BucketedRangeStructure

__all__ = [
    "BloomBaseline",
    "BucketedRangeStructure",
    "FilterFormatError",
    "Interval",
    "IntervalTooLong",
    "ParamError",
    "Params",
    "PointSet",
    "RangeFilter",
    "measure_fpr",
    "validate_params",
]
