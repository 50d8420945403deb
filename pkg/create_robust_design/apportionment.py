# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import logging
import math
import minimax_design_lib as minimax
import numpy as np

from dataclasses import dataclass
from minimax_design_lib import criteria

from create_robust_design.optimizer import directional_scores

log = logging.getLogger("create_robust_design")

kCeilRemove = "ceil_remove"
kEfficientApportionment = "efficient_apportionment"
kMethods = (kCeilRemove, kEfficientApportionment)

# n * xi_i a hair above an integer still rounds down to it.
kCeilSlack = 1e-9
kTieTolerance = 1e-12


class ExactDesign(object):
    """Integer allocations n_1..n_N summing to the run size n."""

    def __init__(self, allocations, *, method, admissible=None):
        allocations = np.array(allocations)
        if allocations.ndim != 1 or allocations.size < 1:
            raise ValueError(f"allocations must be a non-empty vector: {allocations}")
        if np.any(allocations < 0) or np.any(np.round(allocations) != allocations):
            raise ValueError(f"allocations must be nonnegative integers: {allocations}")
        if method not in kMethods:
            raise ValueError(f"unknown apportionment method {method}")
        allocations = allocations.astype(np.int64)
        allocations.setflags(write=False)
        self.allocations = allocations
        self.method = method
        self.admissible = admissible

    @property
    def n(self):
        return int(self.allocations.sum())

    @property
    def N(self):
        return self.allocations.size

    @property
    def support(self):
        return np.flatnonzero(self.allocations > 0)

    def __repr__(self):
        placed = ", ".join(f"{i}:{self.allocations[i]}" for i in self.support)
        return f"ExactDesign(n={self.n}, method={self.method}, [{placed}])"

    def __eq__(self, other):
        return (
            isinstance(other, ExactDesign)
            and self.method == other.method
            and np.array_equal(self.allocations, other.allocations)
        )

    def __hash__(self):
        return hash((self.method, self.allocations.tobytes()))


@dataclass(frozen=True)
class RoundingComparison:
    nu: float
    n: int
    loss_continuous: float
    loss_ceil_remove: float
    loss_efficient_apportionment: float
    excess_ceil_remove: float
    excess_efficient_apportionment: float
    ceil_remove: ExactDesign
    efficient_apportionment: ExactDesign = None


def _ceil(values):
    return np.ceil(values - kCeilSlack * np.maximum(1.0, np.abs(values))).astype(np.int64)


def _lowest(values, candidates):
    """Lowest index among the candidates whose value is minimal within tolerance."""
    smallest = min(values[i] for i in candidates)
    limit = smallest + kTieTolerance * (1 + abs(smallest))
    return min(i for i in candidates if values[i] <= limit)


def _check_run_size(n):
    if int(n) != n or n < 1:
        raise ValueError(f"run size must be a positive integer, got {n}")
    return int(n)


def exact_to_measure(d):
    if d.n <= 0:
        raise ValueError(f"{d} has no observations")
    return minimax.DesignMeasure(d.allocations / d.n)


def ceil_then_remove(Q, xi, n, nu):
    """Rounds every n xi_i up, then removes one observation at a time from the
    point whose score t is smallest at the current allocation."""
    n = _check_run_size(n)
    criteria.check_nu(nu)
    basis = minimax.as_basis(Q)
    if n < basis.p:
        raise minimax.ApportionmentException(
            f"run size {n} is smaller than the {basis.p} regressors"
        )
    basis.check_admissible(xi)

    weights = xi.weights
    # Every support point keeps at least one observation.
    allocations = np.where(weights > 0, np.maximum(1, _ceil(n * weights)), 0)
    removals = 0
    while allocations.sum() > n:
        measure = minimax.DesignMeasure(allocations / allocations.sum())
        scores = directional_scores(basis, measure, nu)

        candidates = set(np.flatnonzero(allocations >= 1).tolist())
        while candidates:
            index = _lowest(scores, candidates)
            trial = allocations.copy()
            trial[index] -= 1
            if basis.spans(np.flatnonzero(trial > 0)):
                allocations = trial
                break
            candidates.discard(index)
        else:
            raise minimax.ApportionmentException(
                f"no observation can be removed from {allocations.tolist()} "
                + f"without losing rank {basis.p}"
            )
        removals += 1

    if not basis.spans(np.flatnonzero(allocations > 0)):
        raise minimax.ApportionmentException(
            f"allocation {allocations.tolist()} does not span the {basis.p} regressors"
        )
    log.debug(f"ceil_then_remove n={n} nu={nu}: {removals} removals")
    return ExactDesign(allocations, method=kCeilRemove, admissible=True)


def pukelsheim_rieder(xi, n, *, Q=None):
    """Efficient design apportionment on the support of xi. With Q given the
    result is flagged admissible or not."""
    n = _check_run_size(n)
    support = xi.support
    if n < support.size:
        raise minimax.ApportionmentException(
            f"run size {n} is smaller than the support size {support.size}"
        )

    weights = xi.weights[support]
    allocations = _ceil((n - support.size / 2) * weights)
    positions = range(support.size)
    while allocations.sum() < n:
        allocations[_lowest(allocations / weights, positions)] += 1
    while allocations.sum() > n:
        allocations[_lowest(-(allocations - 1) / weights, positions)] -= 1

    full = np.zeros(xi.N, dtype=np.int64)
    full[support] = allocations
    admissible = None
    if Q is not None:
        admissible = minimax.as_basis(Q).spans(support)
    return ExactDesign(full, method=kEfficientApportionment, admissible=admissible)


def compare_rounding(Q, xi, n, nu):
    basis = minimax.as_basis(Q)
    continuous = criteria.loss(nu, *criteria.evaluate(basis, xi))

    ceil_remove = ceil_then_remove(basis, xi, n, nu)
    loss_ceil = criteria.loss(nu, *criteria.evaluate(basis, exact_to_measure(ceil_remove)))

    try:
        efficient = pukelsheim_rieder(xi, n, Q=basis)
        loss_efficient = criteria.loss(
            nu, *criteria.evaluate(basis, exact_to_measure(efficient))
        )
    except (
        minimax.ApportionmentException,
        minimax.InadmissibleDesignException,
        minimax.SingularMomentException,
    ) as e:
        log.warning(f"efficient apportionment not applicable at nu={nu} n={n}: {e}")
        efficient, loss_efficient = None, math.nan

    return RoundingComparison(
        nu=nu,
        n=int(n),
        loss_continuous=continuous,
        loss_ceil_remove=loss_ceil,
        loss_efficient_apportionment=loss_efficient,
        excess_ceil_remove=(loss_ceil - continuous) / continuous,
        excess_efficient_apportionment=(loss_efficient - continuous) / continuous,
        ceil_remove=ceil_remove,
        efficient_apportionment=efficient,
    )
