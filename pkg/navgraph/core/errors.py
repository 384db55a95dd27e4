"""Error types raised by navgraph.

Every error is a ``ValueError`` so callers that only guard against bad input
keep working; the subclasses let the CLI and tests tell failures apart.
"""

from __future__ import annotations


class NavGraphError(ValueError):
    """Base class for all navgraph errors."""


class AngleOutOfRange(NavGraphError):
    """Dense threshold argument M * n^(-1/d) exceeds 1."""


class RegimeMismatch(NavGraphError):
    """Sparse threshold argument 2 M ln(n) / d exceeds 1."""


class DegenerateDistance(NavGraphError):
    """Two dataset points coincide where a positive distance is required."""


class MalformedHeader(NavGraphError):
    """A vector file record has a missing or nonpositive dimension prefix."""


class InconsistentDimensions(NavGraphError):
    """Vector file records disagree on their dimension."""


class TruncatedFile(NavGraphError):
    """A vector file ends in the middle of a record."""


class GraphDatasetMismatch(NavGraphError):
    """A graph, edge list or file does not belong to the given dataset."""


class DimensionMismatch(NavGraphError):
    """Vectors of incompatible length were combined."""
