"""Dense quadrature matrices for truncated Hilbert and Riesz transforms.

For disjoint closures the kernels are smooth, so the transforms are plain
weighted sums over the source nodes::

    (A f)(x_m) = sum_k K(x_m, t_k) w_k f_k

with ``K(x, t) = 1/(x - t)`` (Hilbert) and ``K(x, y) = (x_j - y_j)/|x - y|^(n+1)``
(Riesz). No normalization constants are applied, so the n = 1 Riesz kernel is
exactly the Hilbert kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridMismatchError, SingularKernelError, ValidationError
from .grids import Grid, GridFn, box_distance

__all__ = [
    "OpMatrix",
    "StackedOp",
    "assemble_truncated_hilbert",
    "assemble_truncated_riesz",
    "stack_components",
    "apply_operator",
    "weighted_adjoint",
    "dense_matrix",
    "source_weights",
    "target_weights",
    "target_norm",
]


@dataclass(frozen=True, eq=False)
class OpMatrix:
    """Dense map between GridFn spaces; ``entries`` is (target nodes x source nodes)."""

    entries: np.ndarray = field(repr=False)
    source: Grid
    target: Grid
    kind: str
    axis: int | None = None
    adjoint: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.shape != (self.target.size, self.source.size):
            raise GridMismatchError(
                f"entries {entries.shape} do not match grids "
                f"({self.target.size}, {self.source.size})"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    @property
    def source_weights(self) -> np.ndarray:
        return self.source.weights

    @property
    def target_weights(self) -> np.ndarray:
        return self.target.weights

    @property
    def label(self) -> str:
        name = self.kind if self.axis is None else f"{self.kind}({self.axis})"
        return name + ("*" if self.adjoint else "")


@dataclass(frozen=True, eq=False)
class StackedOp:
    """Block column ``(A_1; ...; A_n)`` of operators sharing one source grid.

    With ``adjoint=True`` the object stands for the row block
    ``(v_1, ..., v_n) -> sum_j A_j* v_j`` instead.
    """

    components: tuple[OpMatrix, ...]
    adjoint: bool = False

    @property
    def source(self) -> Grid:
        return self.components[0].source

    @property
    def blocks(self) -> tuple[Grid, ...]:
        return tuple(c.target for c in self.components)

    @property
    def kind(self) -> str:
        return "stacked"

    @property
    def matrix(self) -> np.ndarray:
        m = np.vstack([c.entries for c in self.components])
        if self.adjoint:
            return m.T * (_concat_weights(self.blocks)[None, :] / self.source.weights[:, None])
        return m

    @property
    def source_weights(self) -> np.ndarray:
        return _concat_weights(self.blocks) if self.adjoint else self.source.weights

    @property
    def target_weights(self) -> np.ndarray:
        return self.source.weights if self.adjoint else _concat_weights(self.blocks)

    @property
    def label(self) -> str:
        inner = ", ".join(c.label for c in self.components)
        return f"stacked[{inner}]" + ("*" if self.adjoint else "")


def _concat_weights(grids: Sequence[Grid]) -> np.ndarray:
    return np.concatenate([g.weights for g in grids])


def dense_matrix(A) -> np.ndarray:
    return A.matrix


def source_weights(A) -> np.ndarray:
    return A.source_weights


def target_weights(A) -> np.ndarray:
    return A.target_weights


def _require_disjoint(source: Grid, target: Grid):
    if source.dim != target.dim:
        raise ValidationError("source and target grids have different dimensions")
    if box_distance(source.domain, target.domain) <= 0.0:
        raise SingularKernelError(
            "source and target closures overlap; the principal-value case is not supported"
        )


def assemble_truncated_hilbert(source: Grid, target: Grid) -> OpMatrix:
    """Midpoint-rule matrix of ``f -> chi_J H(chi_I f)`` with ``entry[m, k] = w_k/(x_m - t_k)``."""
    if source.dim != 1 or target.dim != 1:
        raise ValidationError("the Hilbert transform needs 1-D grids")
    _require_disjoint(source, target)
    diff = target.x[:, None] - source.x[None, :]
    return OpMatrix(source.weights[None, :] / diff, source, target, "hilbert")


def riesz_kernel(x: np.ndarray, y: np.ndarray, axis: int) -> np.ndarray:
    """``(x_j - y_j)/|x - y|^(n+1)`` for all pairs; ``axis`` is 1-based."""
    diff = x[:, None, :] - y[None, :, :]
    n = x.shape[1]
    r2 = np.einsum("mkd,mkd->mk", diff, diff)
    return diff[:, :, axis - 1] / r2 ** ((n + 1) / 2)


def assemble_truncated_riesz(axis: int, source: Grid, target: Grid) -> OpMatrix:
    """Matrix of ``chi_{Omega_2} R_j chi_{Omega_1}`` (``axis`` = j, 1-based)."""
    if not 1 <= axis <= source.dim:
        raise ValidationError(f"axis must be in 1..{source.dim}, got {axis}")
    _require_disjoint(source, target)
    entries = riesz_kernel(target.nodes, source.nodes, axis) * source.weights[None, :]
    return OpMatrix(entries, source, target, "riesz", axis=axis)


def stack_components(ops: Sequence[OpMatrix]) -> StackedOp:
    ops = tuple(ops)
    if not ops:
        raise ValidationError("need at least one component")
    for op in ops[1:]:
        if not op.source.same_as(ops[0].source):
            raise GridMismatchError("stacked components must share the source grid")
    return StackedOp(ops)


def apply_operator(A, g):
    """Apply ``A`` to ``g``.

    A :class:`StackedOp` returns one GridFn per component; its adjoint takes
    such a list and returns a single GridFn.
    """
    if isinstance(A, StackedOp):
        if A.adjoint:
            gs = list(g)
            if len(gs) != len(A.components):
                raise GridMismatchError("one input per stacked component required")
            total = np.zeros(A.source.size)
            for comp, v in zip(A.components, gs):
                total += apply_operator(weighted_adjoint(comp), v).values
            return GridFn(A.source, total)
        return [apply_operator(c, g) for c in A.components]
    if not g.grid.same_as(A.source):
        raise GridMismatchError("input does not live on the operator's source grid")
    return GridFn(A.target, A.entries @ g.values)


def weighted_adjoint(A):
    """Adjoint w.r.t. the weighted inner products: ``adj[k, m] = entries[m, k] w_m / w_k``."""
    if isinstance(A, StackedOp):
        return StackedOp(A.components, adjoint=not A.adjoint)
    entries = A.entries.T * (A.target.weights[None, :] / A.source.weights[:, None])
    return OpMatrix(entries, A.target, A.source, A.kind, A.axis, not A.adjoint)


def target_norm(A, values: np.ndarray) -> float:
    """Weighted L2 norm of a flat vector living on ``A``'s (possibly stacked) target."""
    w = A.target_weights
    return float(np.sqrt(max(np.dot(w * values, values), 0.0)))
