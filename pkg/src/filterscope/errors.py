"""Exception hierarchy for filterscope.

I/O failures are reported through the native ``OSError`` family; everything
that is a *content* problem (bad bytes, bad shapes, bad preconditions) derives
from :class:`FilterscopeError` so callers can catch the whole toolkit with one
clause.
"""

from __future__ import annotations


class FilterscopeError(Exception):
    """Base class for all filterscope errors."""


# --- model ingestion ---------------------------------------------------------

class MalformedProtobuf(FilterscopeError):
    """The byte stream is not a decodable protobuf message."""


class MissingGraph(FilterscopeError):
    """The model proto carries no graph."""


class ExternalDataUnsupported(FilterscopeError):
    """An initializer is stored outside the model file."""


class CycleDetected(FilterscopeError):
    """The node graph is not a DAG."""


class WeightNotInitializer(FilterscopeError):
    """A convolution's weight input is a dynamic tensor, not an initializer."""


class ShapeMismatch(FilterscopeError):
    """A weight tensor does not have the expected rank/shape."""


class UnsupportedDtype(FilterscopeError):
    """A weight tensor has a dtype outside float16/float32/float64."""


# --- store -------------------------------------------------------------------

class SchemaMismatch(FilterscopeError):
    """A metadata sidecar does not validate against the store schema."""


class DanglingIndex(FilterscopeError):
    """A layer record points outside the filter matrix or at a missing model."""


# --- spectra -----------------------------------------------------------------

class TooFewFilters(FilterscopeError):
    """An operation needs at least two filters."""


class EmptySet(FilterscopeError):
    """An operation needs a non-empty filter set."""


class NoConvergence(FilterscopeError):
    """An iterative numerical routine exhausted its iteration budget."""


# --- degeneracy --------------------------------------------------------------

class FitDiverged(FilterscopeError):
    """No sigmoid fit improved on the constant-model baseline."""


class Unreliable(FilterscopeError):
    """Too few coefficients to assign a phenotype."""


# --- shift -------------------------------------------------------------------

class EmptyCoefficients(FilterscopeError):
    """Histogram building needs at least one coefficient row."""


class DegenerateRange(FilterscopeError):
    """Histogram range has zero (or negative) width."""


class BinMismatch(FilterscopeError):
    """Two histograms do not share bin edges."""
