# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import logging
import math
import minimax_design_lib as minimax
import numpy as np
import progressbar

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from minimax_design_lib import criteria

from create_robust_design import settings

log = logging.getLogger("create_robust_design")

kDescentSlack = 1e-12
kTieTolerance = 1e-12
kFiniteDifferenceStep = 1e-6
kPruneSlack = 1e-9
kFlatTolerance = 1e-6

# Bisection stopping rules shared by the bounded-bias, bounded-variance and
# CMB searches.
kBoundTolerance = 1e-3
kCmbTolerance = 1e-3
kNuIntervalTolerance = 1e-6

kMinimumBiasSlack = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    tol: float = settings.OPTIMIZER_TOL
    max_iter: int = None
    start: minimax.DesignMeasure = None
    pseudo_count_start: float = None
    prune_below: float = settings.PRUNE_BELOW

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter is not None and (
            self.max_iter < 1 or int(self.max_iter) != self.max_iter
        ):
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if self.pseudo_count_start is not None and not self.pseudo_count_start > 0:
            raise ValueError(
                f"pseudo_count_start must be positive, got {self.pseudo_count_start}"
            )
        if self.prune_below < 0:
            raise ValueError(f"prune_below must be >= 0, got {self.prune_below}")

    def iterations_for(self, N):
        if self.max_iter is None:
            return settings.OPTIMIZER_ITERATIONS_PER_POINT * N
        return int(self.max_iter)

    def start_for(self, N):
        if self.start is None:
            return minimax.DesignMeasure.uniform(N)
        return self.start

    def pseudo_count_for(self, N):
        if self.pseudo_count_start is None:
            return float(N)
        return float(self.pseudo_count_start)


@dataclass
class SolveTrace:
    iterations: int
    final_max_score: float
    loss_history: tuple
    converged: bool
    accepted_steps: int = 0
    pruned: bool = False


@dataclass(frozen=True)
class FrontierPoint:
    nu: float
    design: minimax.DesignMeasure
    var: float
    maxbias: float
    cmb: float
    loss_value: float
    trace: SolveTrace = field(default=None, compare=False, repr=False)

    @classmethod
    def from_design(cls, Q, nu, xi, *, trace=None):
        var, bias = criteria.evaluate(Q, xi)
        return cls(
            nu=nu,
            design=xi,
            var=var,
            maxbias=bias,
            cmb=criteria.cmb_value(var, bias),
            loss_value=criteria.loss(nu, var, bias),
            trace=trace,
        )


@dataclass(frozen=True)
class FrontierExtremes:
    bias_peak_at_zero: bool
    variance_peak_at_one: bool
    bias_flat: bool
    variance_flat: bool


def _argmax_lowest(scores):
    best = scores.max()
    return int(np.flatnonzero(scores >= best - kTieTolerance * (1 + abs(best)))[0])


def _argmin_lowest(scores):
    return _argmax_lowest(-scores)


def _batched_maxbias(Q, weight_rows):
    R = np.einsum("kj,ja,jb->kab", weight_rows, Q, Q)
    S = np.einsum("kj,ja,jb->kab", weight_rows * weight_rows, Q, Q)
    R_inv = np.linalg.inv(R)
    U = R_inv @ S @ R_inv
    U = (U + np.swapaxes(U, 1, 2)) / 2
    return np.linalg.eigvalsh(U)[:, -1]


def finite_difference_bias(Q, weights, step=kFiniteDifferenceStep):
    """Central difference of ch_max U along every delta_i - xi."""
    Q = minimax.as_basis(Q).Q
    directions = np.eye(weights.size) - weights[np.newaxis, :]
    upper = _batched_maxbias(Q, weights + step * directions)
    lower = _batched_maxbias(Q, weights - step * directions)
    return (upper - lower) / (2 * step)


def _scores(Q, weights, bundle, nu):
    A = Q @ bundle.R_inv
    d_var = -(np.einsum("ij,ij->i", A, A) - np.trace(bundle.R_inv))
    if nu == 0:
        d_bias = np.zeros_like(d_var)
    elif bundle.unique_top:
        av = A @ bundle.v_max
        qv = Q @ bundle.v_max
        d_bias = 2 * weights * av * av - 2 * bundle.lambda_max * qv * av
    else:
        d_bias = finite_difference_bias(Q, weights)
    return -((1 - nu) * d_var + nu * d_bias)


def directional_scores(Q, xi, nu):
    """t_i: minus the derivative of I_nu at xi toward the one-point design at x_i.

    Adding mass at x_i lowers the loss to first order exactly when t_i > 0.
    When the top eigenvalue of U is (near-)degenerate the bias part falls back
    to finite differences."""
    criteria.check_nu(nu)
    basis = minimax.as_basis(Q)
    bundle = criteria.moments(basis, xi)
    return _scores(basis.Q, xi.weights, bundle, nu)


def _loss(nu, bundle):
    return criteria.loss(nu, criteria.variance(bundle), criteria.maxbias(bundle))


def prune_design(Q, xi, nu, min_weight):
    """Drops weights below min_weight when that does not worsen I_nu.

    Returns (design, pruned)."""
    if min_weight <= 0:
        return xi, False
    basis = minimax.as_basis(Q)
    weights = np.where(xi.weights < min_weight, 0.0, xi.weights)
    if np.array_equal(weights, xi.weights) or weights.sum() <= 0:
        return xi, False

    candidate = minimax.DesignMeasure(weights / weights.sum())
    if not basis.is_admissible(candidate):
        return xi, False
    original = criteria.loss(nu, *criteria.evaluate(basis, xi))
    try:
        pruned = criteria.loss(nu, *criteria.evaluate(basis, candidate))
    except minimax.SingularMomentException:
        return xi, False
    if pruned > original + kPruneSlack * abs(original):
        log.debug(f"prune_design kept {xi}: pruning raises the loss to {pruned}")
        return xi, False
    return candidate, True


def minimize_loss(Q, nu, cfg=None):
    """Sequential point addition: xi <- (n xi + delta_i)/(n + 1) at the point
    with the largest score, n <- n + 1.

    A step that would raise the loss is not taken; the pseudo-count still
    advances, so the next attempt is shorter."""
    criteria.check_nu(nu)
    cfg = cfg or OptimizerConfig()
    basis = minimax.as_basis(Q)
    start = cfg.start_for(basis.N)
    basis.check_admissible(start)

    n = cfg.pseudo_count_for(basis.N)
    max_iter = cfg.iterations_for(basis.N)

    weights = np.array(start.weights)
    bundle = criteria.moments_from_weights(basis, weights, label=repr(start))
    current = _loss(nu, bundle)
    best_weights, best_loss = weights, current
    history = [current]
    scores = None
    iterations = accepted = 0
    converged = False

    while True:
        if scores is None:
            scores = _scores(basis.Q, weights, bundle, nu)
            chosen = _argmax_lowest(scores)
        max_score = float(scores[chosen])
        if max_score <= cfg.tol * (1 + abs(current)):
            converged = True
            break
        if iterations >= max_iter:
            break
        iterations += 1

        candidate = weights * (n / (n + 1))
        candidate[chosen] += 1 / (n + 1)
        n += 1
        try:
            candidate_bundle = criteria.moments_from_weights(basis, candidate)
        except minimax.SingularMomentException:
            continue
        candidate_loss = _loss(nu, candidate_bundle)
        if candidate_loss > current + kDescentSlack:
            continue

        weights, bundle, current = candidate, candidate_bundle, candidate_loss
        scores = None
        accepted += 1
        history.append(current)
        if current < best_loss:
            best_weights, best_loss = weights, current

        if iterations % 1000 == 0:
            log.debug(
                f"minimize_loss nu={nu} iteration={iterations} loss={current:.10g} "
                + f"max_score={max_score:.3g}"
            )

    if not converged:
        log.warning(
            f"minimize_loss nu={nu}: max score {max_score:.3g} above "
            + f"{cfg.tol:g} after {iterations} iterations; returning the best iterate"
        )

    xi, pruned = prune_design(
        basis, minimax.DesignMeasure(best_weights), nu, cfg.prune_below
    )
    trace = SolveTrace(
        iterations=iterations,
        final_max_score=float(np.max(directional_scores(basis, xi, nu))),
        loss_history=tuple(history),
        converged=converged,
        accepted_steps=accepted,
        pruned=pruned,
    )
    return xi, trace


def solve_nu(Q, nu, cfg=None):
    basis = minimax.as_basis(Q)
    xi, trace = minimize_loss(basis, nu, cfg)
    point = FrontierPoint.from_design(basis, nu, xi, trace=trace)
    log.info(
        f"nu={nu:.6g} var={point.var:.6g} maxbias={point.maxbias:.6g} "
        + f"cmb={point.cmb:.6g} loss={point.loss_value:.6g} "
        + f"iterations={trace.iterations} converged={trace.converged}"
    )
    return point


def sweep_frontier(Q, nu_grid, cfg=None, *, workers=1, progress=False):
    """One cold-started solve per nu. With workers > 1 the solves run in
    separate processes; results are identical to the sequential order."""
    grid = [float(nu) for nu in nu_grid]
    if not grid:
        raise ValueError("the nu grid is empty")
    for nu in grid:
        criteria.check_nu(nu)
    if any(later < earlier for earlier, later in zip(grid, grid[1:])):
        raise ValueError("the nu grid must be sorted")

    solve = partial(solve_nu, minimax.as_basis(Q), cfg=cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(solve, grid)
            if progress:
                results = progressbar.progressbar(results, max_value=len(grid))
            return list(results)

    results = map(solve, grid)
    if progress:
        results = progressbar.progressbar(results, max_value=len(grid))
    return list(results)


def frontier_extremes(points):
    """Whether b^2 peaks only at nu = 0 and s^2 only at nu = 1, and whether
    either curve is flat."""
    points = sorted(points, key=lambda point: point.nu)
    biases = np.array([point.maxbias for point in points])
    variances = np.array([point.var for point in points])

    def flat(values):
        return bool(np.ptp(values) <= kFlatTolerance * np.max(np.abs(values)))

    bias_peak = (
        len(points) > 1
        and points[0].nu == 0
        and biases[0] > np.max(biases[1:]) + kFlatTolerance * biases[0]
    )
    variance_peak = (
        len(points) > 1
        and points[-1].nu == 1
        and variances[-1] > np.max(variances[:-1]) + kFlatTolerance * variances[-1]
    )
    return FrontierExtremes(
        bias_peak_at_zero=bool(bias_peak),
        variance_peak_at_one=bool(variance_peak),
        bias_flat=flat(biases),
        variance_flat=flat(variances),
    )


class _FrontierProbe(object):
    """solve_nu with a per-search cache keyed by nu."""

    def __init__(self, Q, cfg):
        self.basis = minimax.as_basis(Q)
        self.cfg = cfg
        self.points = {}

    def __call__(self, nu):
        if nu not in self.points:
            self.points[nu] = solve_nu(self.basis, nu, self.cfg)
        return self.points[nu]


def _bisect_nu(probe, measure, target, *, tolerance, increasing):
    """Bisection for measure(point(nu)) == target along a monotone frontier.

    Returns (point, lo, hi): point is set when a probe lands within tolerance,
    otherwise the bracket has shrunk below the nu interval tolerance."""
    lo, hi = 0.0, 1.0
    while hi - lo >= kNuIntervalTolerance:
        mid = (lo + hi) / 2
        point = probe(mid)
        value = measure(point)
        log.debug(f"bisection nu={mid:.8f} value={value:.8g} target={target:.8g}")
        if abs(value - target) <= tolerance:
            return point, lo, hi
        if (value > target) != increasing:
            lo = mid
        else:
            hi = mid
    return None, lo, hi


def _warn_if_flat(name, start_value, end_value):
    if abs(start_value - end_value) <= kFlatTolerance * max(
        abs(start_value), abs(end_value)
    ):
        log.warning(
            f"{name} is flat along the frontier ({start_value:.6g} at nu = 0, "
            + f"{end_value:.6g} at nu = 1); taking the smallest nu"
        )


def solve_rbb(Q, b2, cfg=None):
    """Minimum variance subject to maxbias <= b2."""
    if b2 < 1 - kMinimumBiasSlack:
        raise minimax.InfeasibleBoundException(
            f"bias bound {b2} is below the smallest attainable maxbias 1"
        )
    probe = _FrontierProbe(Q, cfg)
    start = probe(0.0)
    if start.maxbias <= b2 * (1 + kBoundTolerance):
        return start
    end = probe(1.0)
    _warn_if_flat("maxbias", start.maxbias, end.maxbias)
    if b2 <= end.maxbias * (1 + kBoundTolerance):
        return end

    point, _, hi = _bisect_nu(
        probe,
        lambda p: p.maxbias,
        b2,
        tolerance=kBoundTolerance * b2,
        increasing=False,
    )
    return point or probe(hi)


def solve_rbv(Q, s2, cfg=None):
    """Minimum maxbias subject to var <= s2."""
    probe = _FrontierProbe(Q, cfg)
    start = probe(0.0)
    if start.var > s2 * (1 + kBoundTolerance):
        raise minimax.InfeasibleBoundException(
            f"variance bound {s2} is below the computed I-optimal variance "
            + f"{start.var:.6g}"
        )
    if s2 <= start.var * (1 + kBoundTolerance):
        return start
    end = probe(1.0)
    _warn_if_flat("var", start.var, end.var)
    if s2 >= end.var * (1 - kBoundTolerance):
        return end

    point, lo, _ = _bisect_nu(
        probe,
        lambda p: p.var,
        s2,
        tolerance=kBoundTolerance * s2,
        increasing=True,
    )
    return point or probe(lo)


def find_nu_for_cmb(Q, target, cfg=None):
    probe = _FrontierProbe(Q, cfg)
    start = probe(0.0)
    end = probe(1.0)
    if not end.cmb - kCmbTolerance <= target <= start.cmb + kCmbTolerance:
        raise minimax.InfeasibleBoundException(
            f"CMB target {target} is outside the attainable range "
            + f"[{end.cmb:.6g}, {start.cmb:.6g}]"
        )
    _warn_if_flat("CMB", start.cmb, end.cmb)
    if abs(target - start.cmb) <= kCmbTolerance:
        return start
    if abs(target - end.cmb) <= kCmbTolerance:
        return end

    point, _, _ = _bisect_nu(
        probe,
        lambda p: p.cmb,
        target,
        tolerance=kCmbTolerance,
        increasing=False,
    )
    if point is not None:
        return point
    return min(
        probe.points.values(), key=lambda p: (abs(p.cmb - target), p.nu)
    )
