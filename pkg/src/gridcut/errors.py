"""Exception types shared across the package."""

from __future__ import annotations


class GridcutError(Exception):
    """Base class for all errors raised by this package."""


class CaseFormatError(GridcutError):
    """Raised when a case file cannot be parsed or fails ingestion checks.

    ``locus`` pinpoints the offending line or field when known.
    """

    def __init__(self, message: str, locus: str | None = None):
        self.locus = locus
        super().__init__(message if locus is None else f"{message} (at {locus})")


class UnknownBranchError(GridcutError):
    """A branch id or name does not exist in the network."""


class BranchStateError(GridcutError):
    """A branch is in the wrong service state for the requested operation."""


class IslandedNetworkError(GridcutError):
    """The in-service subgraph is disconnected where connectivity is required."""


class SingularSystemError(GridcutError):
    """The reduced nodal susceptance system could not be factorized."""


class InfeasibleFlowError(GridcutError):
    """No rating-respecting flow can route the demanded transfer.

    Carries the certifying saturated cut: the branch ids crossing the
    bipartition found by residual reachability, the source-side bus set,
    and the margin (available minus required transfer, negative).
    """

    def __init__(self, message: str, cut_branches: frozenset, source_side: frozenset,
                 margin: float):
        self.cut_branches = cut_branches
        self.source_side = source_side
        self.margin = margin
        super().__init__(f"{message}: margin {margin:.6f} MW across cut "
                         f"{sorted(cut_branches)}")


class InfeasibleRedispatchError(GridcutError):
    """An injection delta could not be absorbed by the flow graph.

    Deltas produced by a rating-respecting dispatch are always absorbable,
    so this signals an internal consistency failure upstream.
    """


class SnapshotMismatchError(GridcutError):
    """Inputs derived from different network snapshots were mixed."""


class SolverError(GridcutError):
    """The QP solver failed (iteration limit or singular working set)."""
