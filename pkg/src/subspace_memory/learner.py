"""Learning sparse vectors orthogonal to a pattern set.

The default path (:func:`learn_constraint`) is the thresholded primal-dual
iteration: a gradient step on ``||X w||^2 / ||X||^2``, a multiplier
``lambda`` that inflates ``w`` whenever ``||w||^2`` drops below ``epsilon``,
and a decaying hard threshold ``theta_t = c / t`` that zeroes small entries.
:func:`learn_constraint_reference` keeps the smooth sparsity penalty and its
own dual variable instead of thresholding; it exists as a cross-check.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    DegenerateZero,
    InsufficientRows,
    LambdaOutOfRange,
    NoConvergence,
    ValidationError,
    ZeroMatrix,
)

log = logging.getLogger(__name__)

PAPER_TABLE = "paper-table"
THEOREM_SAFE = "theorem-safe"
ALPHA_MODES = (PAPER_TABLE, THEOREM_SAFE)

DEGENERATE_RETRIES = 10


@dataclass(frozen=True)
class LearnParams:
    """Knobs of the learning iteration.

    ``p_stop`` is the stopping point on ``max |X w| / ||X||_2``.  With
    ``scale_p_by_norm`` (the default) the effective threshold is
    ``p_stop / ||X||_2``, i.e. the run stops once every ``|x . w| <= p_stop``.
    """

    epsilon_norm: float = 0.01
    q_sparsity: float | None = None
    q_relaxed: float | None = None
    delta: float = 10.0
    theta_coef: float = 0.25
    alpha_mode: str = PAPER_TABLE
    alpha_fixed: float = 0.49
    p_stop: float = 0.01
    scale_p_by_norm: bool = True
    sigma: float = 1.0
    max_iters: int = 50000
    seed: int = 0
    converged_fraction: float = 0.99
    max_cosine: float = 0.95

    def __post_init__(self):
        checks = {
            "epsilon_norm": self.epsilon_norm > 0,
            "delta": self.delta > 0,
            "theta_coef": self.theta_coef > 0,
            "alpha_fixed": 0 < self.alpha_fixed < 1,
            "p_stop": self.p_stop > 0,
            "sigma": self.sigma > 0,
            "max_iters": self.max_iters >= 1,
            "converged_fraction": 0 < self.converged_fraction <= 1,
            "max_cosine": 0 < self.max_cosine <= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValidationError(f"invalid learning parameters: {', '.join(bad)}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValidationError(f"alpha_mode must be one of {ALPHA_MODES}")

    def effective_p(self, norm_x: float) -> float:
        return self.p_stop / norm_x if self.scale_p_by_norm else self.p_stop

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class LearnerState:
    w: np.ndarray
    lambda_t: float = 0.0
    gamma_t: float = 0.0
    t: int = 0
    E_t: float = float("inf")


@dataclass
class LearnTrace:
    """Per-iteration record of one learning run.

    ``E[t]`` is the residual of the iterate entering step ``t``; ``lam``,
    ``alpha`` and ``theta`` are the values used to produce the next iterate,
    so ``E`` has one more entry than the other arrays once a run stops.
    """

    E: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    attempts: int = 1
    theta_coef: float = 0.0
    seed: int = 0

    @property
    def iterations(self) -> int:
        return len(self.alpha)


@dataclass
class ConstraintGraph:
    """An ``m x n`` constraint matrix with the statistics it was accepted under.

    ``W`` is kept dense; rows are sparse in content (exact zeros) and the
    on-disk form is a triplet list.
    """

    W: np.ndarray
    residuals: np.ndarray
    norm_x: float
    seeds: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    params_hash: str = ""

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    def row_support(self, i: int):
        idx = np.flatnonzero(self.W[i])
        return idx, self.W[i, idx]

    def triplets(self):
        rows, cols = np.nonzero(self.W)
        return rows, cols, self.W[rows, cols]


def spectral_norm(X, tol: float = 1e-10, max_iters: int = 10000) -> float:
    """Largest singular value of ``X`` by power iteration on its Gram matrix."""
    X = np.asarray(X, dtype=float)
    if not np.any(X):
        raise ZeroMatrix("spectral norm of an all-zero matrix")
    # the smaller Gram matrix has the same nonzero spectrum
    gram = X @ X.T if X.shape[0] <= X.shape[1] else X.T @ X
    v = np.random.default_rng(0).uniform(0.5, 1.5, gram.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iters):
        u = gram @ v
        new = float(v @ u)
        nu = np.linalg.norm(u)
        if nu == 0:
            # start vector fell in the null space; restart on a fresh direction
            v = np.random.default_rng(len(v)).standard_normal(len(v))
            v /= np.linalg.norm(v)
            continue
        v = u / nu
        if abs(new - est) <= tol * abs(new):
            est = new
            break
        est = new
    return float(np.sqrt(est))


def soft_threshold(u, theta: float):
    """Zero the entries with ``|u| <= theta`` and pass the rest through unchanged.

    This is the thresholding map used by the learning iteration; surviving
    entries are *not* shrunk towards zero.
    """
    if theta < 0:
        raise ValidationError("theta must be non-negative")
    if np.isscalar(u):
        return float(u) if abs(u) > theta else 0.0
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) > theta, u, 0.0)


def sparsity_penalty(w, sigma: float = 1.0) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.tanh(sigma * w * w).sum())


def sparsity_grad(w, sigma: float = 1.0) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    t = np.tanh(sigma * w * w)
    return 2.0 * sigma * w * (1.0 - t * t)


def pattern_energies(X, norm_x: float | None = None):
    """Return ``(a_min, a_max)`` with ``a_i = ||x_i||^2 / ||X||_2^2`` over nonzero rows."""
    X = np.asarray(X, dtype=float)
    X = X[np.any(X != 0, axis=1)]
    if X.size == 0:
        raise ZeroMatrix("no nonzero patterns")
    norm_x = spectral_norm(X) if norm_x is None else norm_x
    a = np.einsum("ij,ij->i", X, X) / norm_x**2
    return float(a.min()), float(a.max())


def alpha_schedule(lambda_t: float, a_min: float, a_max: float,
                   mode: str = PAPER_TABLE, alpha_fixed: float = 0.49) -> float:
    """Step size for the gradient term.

    ``paper-table`` uses ``min(lambda/a_min, 1 + lambda)``.  ``theorem-safe``
    takes the midpoint of ``(lambda/a_min, min(1, 1 + lambda))``, the window
    in which every diagonal entry of the iteration matrix has modulus below
    one; it raises :class:`LambdaOutOfRange` once ``lambda`` exceeds
    ``a_min / (a_max - a_min)`` or the window closes.  Both modes return
    ``alpha_fixed`` when ``lambda == 0``.
    """
    if lambda_t == 0:
        return alpha_fixed
    if mode == PAPER_TABLE:
        return min(lambda_t / a_min, 1.0 + lambda_t)
    if mode != THEOREM_SAFE:
        raise ValidationError(f"unknown alpha mode {mode!r}")
    bound = a_min / (a_max - a_min) if a_max > a_min else np.inf
    lo, hi = lambda_t / a_min, min(1.0, 1.0 + lambda_t)
    if lambda_t > bound or lo >= hi:
        raise LambdaOutOfRange(
            f"lambda={lambda_t:.4g} outside the admissible range (bound {bound:.4g})"
        )
    return 0.5 * (lo + hi)


def iteration_matrix(X, lambda_t: float, alpha_t: float, norm_x: float | None = None):
    """``(1 + 2 lambda) I - 2 alpha X X^T / ||X||_2^2``, the map taking ``y(t)`` to the
    unthresholded ``y(t+1)``."""
    X = np.asarray(X, dtype=float)
    norm_x = spectral_norm(X) if norm_x is None else norm_x
    C = X.shape[0]
    return (1 + 2 * lambda_t) * np.eye(C) - 2 * alpha_t * (X @ X.T) / norm_x**2


def _prepare(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("X must be a 2-D matrix")
    X = X[np.any(X != 0, axis=1)]
    if X.size == 0:
        raise ZeroMatrix("pattern matrix has no nonzero rows")
    return X, spectral_norm(X)


def _initial_w(n: int, eps: float, rng) -> np.ndarray:
    w = rng.uniform(-1.0, 1.0, n)
    return w * np.sqrt(2 * eps) / np.linalg.norm(w)


def _run(Xs, norm_x, params: LearnParams, w, theta_coef, a_min, a_max,
         reference=False, q_relaxed=None):
    """Core loop shared by both learners.  ``Xs`` is ``X / ||X||_2``."""
    eps, delta = params.epsilon_norm, params.delta
    p = params.effective_p(norm_x)
    lam = gam = 0.0
    trace = LearnTrace(theta_coef=theta_coef)
    for t in range(1, params.max_iters + 1):
        y = Xs @ w
        E = float(np.abs(y).max())
        trace.E.append(E)
        if E <= p and w @ w >= eps:
            return w, trace
        try:
            alpha = alpha_schedule(lam, a_min, a_max, params.alpha_mode, params.alpha_fixed)
        except LambdaOutOfRange as err:
            raise LambdaOutOfRange(str(err), w=w, trace=trace) from None
        w_new = (1 + 2 * lam) * w - 2 * alpha * (Xs.T @ y)
        theta = theta_coef / t
        if reference:
            w_new = w_new - gam * sparsity_grad(w, params.sigma)
            gam = max(gam + delta * (sparsity_penalty(w_new, params.sigma) - q_relaxed), 0.0)
        else:
            w_new = soft_threshold(w_new, theta)
        trace.lam.append(lam)
        trace.alpha.append(alpha)
        trace.theta.append(0.0 if reference else theta)
        w = w_new
        if not w.any():
            raise DegenerateZero(f"all entries thresholded to zero at t={t}")
        lam = max(lam + delta * (eps - w @ w), 0.0)
    trace.E.append(float(np.abs(Xs @ w).max()))
    raise NoConvergence(
        f"residual {trace.E[-1]:.3g} > {p:.3g} after {params.max_iters} iterations",
        w=w, trace=trace,
    )


def learn_constraint(X, params: LearnParams | None = None, seed: int | None = None):
    """Find one sparse ``w`` with ``X w ~ 0`` and ``||w||^2 >= epsilon``.

    Returns ``(w, trace)``.  A run that thresholds ``w`` to all zeros is
    restarted from a fresh random start with the threshold coefficient
    halved, up to 10 attempts in total.

    Raises:
        NoConvergence: the iteration cap was hit; ``err.w`` holds the last iterate.
        DegenerateZero: every attempt collapsed to the zero vector.
        LambdaOutOfRange: ``theorem-safe`` step sizes became unavailable.
    """
    params = params or LearnParams()
    seed = params.seed if seed is None else seed
    Xf, norm_x = _prepare(X)
    Xs = Xf / norm_x
    a_min, a_max = pattern_energies(Xf, norm_x)
    seq = np.random.SeedSequence(seed)
    coef = params.theta_coef
    for attempt, child in enumerate(seq.spawn(DEGENERATE_RETRIES), start=1):
        rng = np.random.default_rng(child)
        w0 = _initial_w(Xf.shape[1], params.epsilon_norm, rng)
        try:
            w, trace = _run(Xs, norm_x, params, w0, coef, a_min, a_max)
        except DegenerateZero:
            log.debug("degenerate run (attempt %d, theta_coef=%g)", attempt, coef)
            coef /= 2
            continue
        except (NoConvergence, LambdaOutOfRange) as err:
            err.trace.attempts, err.trace.seed = attempt, seed
            raise
        trace.attempts, trace.seed = attempt, seed
        return w, trace
    raise DegenerateZero(f"w collapsed to zero in all {DEGENERATE_RETRIES} attempts")


def learn_constraint_reference(X, params: LearnParams | None = None, seed: int | None = None,
                               w0=None):
    """Un-thresholded primal-dual iteration with the smooth sparsity penalty.

    Runs ``w <- (1+2 lambda) w - 2 alpha X^T y / ||X|| - gamma grad g(w)`` with
    projected dual ascent on both ``lambda`` and ``gamma``.  ``q_relaxed``
    defaults to ``n / 2`` when unset.  Returns ``w`` only.
    """
    params = params or LearnParams()
    seed = params.seed if seed is None else seed
    Xf, norm_x = _prepare(X)
    a_min, a_max = pattern_energies(Xf, norm_x)
    n = Xf.shape[1]
    q = params.q_relaxed if params.q_relaxed is not None else n / 2
    if w0 is None:
        w0 = _initial_w(n, params.epsilon_norm, np.random.default_rng(seed))
    w, _ = _run(Xf / norm_x, norm_x, params, np.asarray(w0, dtype=float), 0.0, a_min, a_max,
                reference=True, q_relaxed=q)
    return w


def _fraction_satisfied(X, w, tol) -> float:
    return float(np.mean(np.abs(X @ w) <= tol))


def learn_network(X, m: int, params: LearnParams | None = None, seed: int | None = None,
                  budget: int | None = None) -> ConstraintGraph:
    """Learn ``m`` diverse constraint rows from independent random restarts.

    A candidate is accepted when at least ``converged_fraction`` of the
    patterns satisfy ``|x . w| <= p_eff ||X||_2``, ``||w||^2 >= epsilon``,
    and its absolute cosine similarity to every accepted row is at most
    ``max_cosine``.  Runs that stop early (iteration cap, or step sizes
    leaving the ``theorem-safe`` window) still offer their last iterate.

    Raises:
        InsufficientRows: ``budget`` (default ``5 m``) attempts were spent
            before ``m`` rows were accepted.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    params = params or LearnParams()
    seed = params.seed if seed is None else seed
    Xf, norm_x = _prepare(X)
    tol = params.effective_p(norm_x) * norm_x
    budget = 5 * m if budget is None else budget
    rows, residuals, seeds, iters = [], [], [], []
    for attempt in range(budget):
        if len(rows) == m:
            break
        row_seed = int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        try:
            w, trace = learn_constraint(Xf, params, seed=row_seed)
        except (NoConvergence, LambdaOutOfRange) as err:
            w, trace = err.w, err.trace
        except DegenerateZero as err:
            log.debug("row attempt %d rejected: %s", attempt, err)
            continue
        if w @ w < params.epsilon_norm:
            continue
        if _fraction_satisfied(Xf, w, tol) < params.converged_fraction:
            continue
        unit = w / np.linalg.norm(w)
        if rows and max(abs(unit @ r) / np.linalg.norm(r) for r in rows) > params.max_cosine:
            continue
        rows.append(w)
        residuals.append(float(np.abs(Xf @ w).max() / norm_x))
        seeds.append(row_seed)
        iters.append(trace.iterations)
    if len(rows) < m:
        raise InsufficientRows(f"accepted {len(rows)} of {m} rows within {budget} attempts")
    return ConstraintGraph(
        W=np.array(rows),
        residuals=np.array(residuals),
        norm_x=norm_x,
        seeds=seeds,
        iterations=iters,
        params_hash=params.digest(),
    )
