"""Bit-flipping error correction over learned constraint graphs.

Constraint neurons report the sign of their violation, pattern neurons
average those reports over their neighbourhood, and a pattern neuron moves
one state up or down only when the averaged feedback is confident enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ValidationError, ZeroColumn
from .learner import ConstraintGraph

LOCAL, GLOBAL = 1, 2


@dataclass(frozen=True)
class RecallParams:
    """``t_max`` fixes the iteration budget; when ``None`` the harness uses
    ``t_max_coef * ||z||_0`` and library calls use ``t_max_coef * len(x)``."""

    phi: float = 0.8
    eps_zero: float = 0.01
    t_max_coef: int = 20
    t_max: int | None = None
    S: int = 2

    def __post_init__(self):
        if self.phi <= 0 or self.eps_zero <= 0 or self.t_max_coef < 1:
            raise ValidationError("phi, eps_zero and t_max_coef must be positive")
        if self.t_max is not None and self.t_max < 1:
            raise ValidationError("t_max must be >= 1")
        if self.S < 2:
            raise ValidationError("S must be >= 2")

    def budget(self, length: int, noise_weight: int | None = None) -> int:
        if self.t_max is not None:
            return self.t_max
        base = length if noise_weight is None else noise_weight
        return max(1, self.t_max_coef * base)


@dataclass
class MultiLevelNetwork:
    locals: list
    global_graph: ConstraintGraph
    blocks: list

    def __post_init__(self):
        if len(self.locals) != len(self.blocks):
            raise ValidationError("one local graph per block is required")
        pos = 0
        for g, (a, b) in zip(self.locals, self.blocks):
            if a != pos or b <= a or g.n != b - a:
                raise ValidationError("blocks must tile the pattern and match local widths")
            pos = b
        if pos != self.global_graph.n:
            raise ValidationError("local widths must sum to the global width")

    @property
    def n(self) -> int:
        return self.global_graph.n


@dataclass
class RecallOutcome:
    pattern: np.ndarray
    level: int = LOCAL
    iterations: dict = field(default_factory=dict)
    satisfied: bool = False
    level1_pattern: np.ndarray | None = None


def _matrix(W) -> np.ndarray:
    return W.W if isinstance(W, ConstraintGraph) else np.asarray(W, dtype=float)


def forward_pass(W, x, eps_zero: float = 0.01) -> np.ndarray:
    """Constraint-neuron outputs in {-1, 0, +1}: +1 for ``h < -eps``, -1 for ``h > eps``."""
    W = _matrix(W)
    x = np.asarray(x)
    if W.ndim != 2 or x.shape != (W.shape[1],):
        raise DimensionMismatch(f"W is {W.shape}, x is {x.shape}")
    h = W @ x
    y = np.zeros(W.shape[0], dtype=np.int64)
    y[h < -eps_zero] = 1
    y[h > eps_zero] = -1
    return y


def _feedback(W, y, degree):
    num = W.T @ y
    out = np.zeros_like(num)
    np.divide(num, degree, out=out, where=degree > 0)
    return out


def backward_pass(W, y) -> np.ndarray:
    """Normalised feedback ``g_j = sum_i W_ij y_i / sum_i |W_ij|``."""
    W = _matrix(W)
    y = np.asarray(y, dtype=float)
    if y.shape != (W.shape[0],):
        raise DimensionMismatch(f"W is {W.shape}, y is {y.shape}")
    degree = np.abs(W).sum(axis=0)
    if np.any(degree == 0):
        raise ZeroColumn(f"columns {np.flatnonzero(degree == 0).tolist()} have no edges")
    return (W.T @ y) / degree


def constraints_satisfied(W, x, eps_zero: float = 0.01) -> bool:
    return not forward_pass(W, x, eps_zero).any()


def correct(W, x_noisy, params: RecallParams, t_max: int | None = None) -> RecallOutcome:
    """Run the forward/backward dynamics for at most ``t_max`` rounds.

    All feedback values of a round are computed from the same snapshot and
    applied together.  A pattern neuron with no incident constraint gets no
    feedback and is never moved.
    """
    W = _matrix(W)
    x = np.array(x_noisy, dtype=np.int64)
    if x.shape != (W.shape[1],):
        raise DimensionMismatch(f"W is {W.shape}, x is {x.shape}")
    t_max = params.budget(len(x)) if t_max is None else t_max
    degree = np.abs(W).sum(axis=0)
    for t in range(1, t_max + 1):
        y = forward_pass(W, x, params.eps_zero)
        if not y.any():
            return RecallOutcome(x, LOCAL, {LOCAL: t}, True)
        g = _feedback(W, y, degree)
        move = np.abs(g) > params.phi
        if not move.any():
            # the state is frozen; further rounds would repeat this one
            return RecallOutcome(x, LOCAL, {LOCAL: t}, False)
        x[move] = np.clip(x[move] + np.sign(g[move]).astype(np.int64), 0, params.S - 1)
    return RecallOutcome(x, LOCAL, {LOCAL: t_max}, constraints_satisfied(W, x, params.eps_zero))


def multilevel_correct(net: MultiLevelNetwork, x_noisy, params: RecallParams,
                       t_max: int | None = None) -> RecallOutcome:
    """Correct each block with its local graph, then fall back to the global graph.

    The global pass runs when any local graph is left with violated
    constraints or when the reassembled pattern violates a global constraint.
    """
    x = np.array(x_noisy, dtype=np.int64)
    if x.shape != (net.n,):
        raise DimensionMismatch(f"network has n={net.n}, x is {x.shape}")
    level1 = x.copy()
    # local networks run side by side; the level costs its slowest block
    iters1, all_local = 0, True
    for graph, (a, b) in zip(net.locals, net.blocks):
        out = correct(graph, x[a:b], params, t_max)
        level1[a:b] = out.pattern
        iters1 = max(iters1, out.iterations[LOCAL])
        all_local &= out.satisfied
    if all_local and constraints_satisfied(net.global_graph, level1, params.eps_zero):
        return RecallOutcome(level1, LOCAL, {LOCAL: iters1, GLOBAL: 0}, True, level1.copy())
    out = correct(net.global_graph, level1, params, t_max)
    return RecallOutcome(out.pattern, GLOBAL, {LOCAL: iters1, GLOBAL: out.iterations[LOCAL]},
                         out.satisfied, level1)
