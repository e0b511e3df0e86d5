"""Degree statistics, the single-error correction bound, and error-rate gains."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError, VacuousBound, ZeroColumn
from .learner import ConstraintGraph

Z95 = 1.959963984540054


@dataclass
class DegreeProfile:
    lambda_i: dict
    d_bar: float
    d_min: int
    m: int

    def poly(self, x: float) -> float:
        """Evaluate the degree generating polynomial ``sum_i lambda_i x**i``."""
        return sum(frac * x**deg for deg, frac in self.lambda_i.items())


class SingleErrorBound(NamedTuple):
    exact: float
    loose: float

    @property
    def vacuous(self) -> bool:
        return self.loose <= 0.0


@dataclass
class GainRow:
    errors: int
    trials: int
    failures1: int
    failures2: int
    per1: float
    per2: float
    gain: float | None
    gain_is_lower_bound: bool
    ci1: tuple
    ci2: tuple

    @property
    def gain_ci(self) -> tuple:
        return ratio_interval(self.failures1, self.failures2, self.trials)


def degree_profile(W, allow_zero: bool = False) -> DegreeProfile:
    """Pattern-node degree distribution of a constraint matrix.

    A degree-0 column raises :class:`ZeroColumn` unless ``allow_zero`` is
    set, in which case the profile is returned with ``d_min == 0``.
    """
    W = W.W if isinstance(W, ConstraintGraph) else np.asarray(W, dtype=float)
    if W.size == 0:
        raise ValidationError("empty constraint matrix")
    deg = np.count_nonzero(W, axis=0)
    if not allow_zero and np.any(deg == 0):
        raise ZeroColumn(f"pattern nodes {np.flatnonzero(deg == 0).tolist()} have degree 0")
    values, counts = np.unique(deg, return_counts=True)
    n = deg.size
    lam = {int(v): c / n for v, c in zip(values, counts)}
    return DegreeProfile(lambda_i=lam, d_bar=float(deg.mean()), d_min=int(deg.min()), m=W.shape[0])


def single_error_bound(profile: DegreeProfile) -> SingleErrorBound:
    """Lower bounds ``1 - lambda(d/m)`` and ``1 - (d/m)**d_min`` on the
    probability of correcting one error, ``d`` being the average degree."""
    if profile.d_bar >= profile.m:
        raise VacuousBound(f"average degree {profile.d_bar:.3g} >= m={profile.m}")
    x = profile.d_bar / profile.m
    return SingleErrorBound(1.0 - profile.poly(x), 1.0 - x**profile.d_min)


def sparsity_ratio(v) -> float:
    v = np.asarray(v)
    if v.size == 0:
        raise ValidationError("empty vector")
    return np.count_nonzero(v) / v.size


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple:
    if trials <= 0:
        raise ValidationError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def ratio_interval(failures1: int, failures2: int, trials: int, z: float = Z95) -> tuple:
    """Katz log interval for ``(f1/N) / (f2/N)``.

    Zero counts get the usual half-count correction.  The two rates come
    from the same trials and are positively correlated, so treating them as
    independent makes the interval wider, never narrower.
    """
    if trials <= 0:
        raise ValidationError("trials must be positive")
    if failures1 == 0 and failures2 == 0:
        return 0.0, math.inf
    a, b = failures1, failures2
    if a == 0 or b == 0:
        a, b, trials = a + 0.5, b + 0.5, trials + 0.5
    log_ratio = math.log(a / b)
    se = math.sqrt(1 / a - 1 / trials + 1 / b - 1 / trials)
    return math.exp(log_ratio - z * se), math.exp(log_ratio + z * se)


def per_gain(failures1: int, failures2: int, trials: int, errors: int = 0) -> GainRow:
    """Pattern error rates of both levels and their ratio.

    With no level-2 failures the ratio is unbounded; the row then carries
    ``PER1 * trials`` as a lower bound on the gain (the gain if one more
    trial had failed at level 2) and ``gain_is_lower_bound`` is set.
    """
    if trials <= 0:
        raise ValidationError("trials must be positive")
    per1, per2 = failures1 / trials, failures2 / trials
    if failures2 > 0:
        gain, lower = per1 / per2, False
    elif failures1 > 0:
        gain, lower = per1 * trials, True
    else:
        gain, lower = None, False
    return GainRow(errors, trials, failures1, failures2, per1, per2, gain, lower,
                   wilson_interval(failures1, trials), wilson_interval(failures2, trials))
