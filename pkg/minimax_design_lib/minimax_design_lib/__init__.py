#!/usr/bin/env python3

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import itertools
import logging
import numpy as np

from pathlib import Path
from scipy import linalg

log = logging.getLogger("minimax_design_lib")

# Singular values below this fraction of the largest one count as zero.
kRankTolerance = 1e-10

# Weight vectors are sanitized, not rejected, inside these bounds.
kNegativeWeightTolerance = 1e-14
kWeightSumTolerance = 1e-10

kOrthonormalTolerance = 1e-10


class DesignException(Exception):
    pass


class RankDeficiencyException(DesignException):
    pass


class InadmissibleDesignException(DesignException):
    pass


class SingularMomentException(DesignException):
    pass


class OracleDisagreementException(DesignException):
    pass


class InfeasibleBoundException(DesignException):
    pass


class ApportionmentException(DesignException):
    pass


def _frozen(values, *, ndim):
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("array contains non-finite entries")
    array.setflags(write=False)
    return array


def numerical_rank(matrix):
    singular = linalg.svdvals(matrix)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > kRankTolerance * singular[0]))


class DesignSpace(object):
    """An ordered, finite set of N distinct points in q dimensions."""

    def __init__(self, points):
        points = np.array(points, dtype=float)
        if points.ndim == 1:
            points = points[:, np.newaxis]
        points = _frozen(points, ndim=2)
        if points.shape[0] < 1 or points.shape[1] < 1:
            raise ValueError(f"a design space needs N >= 1 points, got {points.shape}")
        if len(np.unique(points, axis=0)) != len(points):
            raise ValueError("design space points must be distinct")
        self.points = points

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def q(self):
        return self.points.shape[1]

    def __len__(self):
        return self.N

    def __repr__(self):
        return f"DesignSpace(N={self.N}, q={self.q})"

    def __eq__(self, other):
        return isinstance(other, DesignSpace) and np.array_equal(
            self.points, other.points
        )

    def __hash__(self):
        return hash((self.points.shape, self.points.tobytes()))


def _grid_axis(lower, upper, count):
    if count < 1:
        raise ValueError(f"nonpositive point count {count}")
    if lower > upper:
        raise ValueError(f"lower bound {lower} exceeds upper bound {upper}")
    if count == 1:
        if lower != upper:
            raise ValueError(
                f"a single-point axis needs a degenerate interval, got [{lower}, {upper}]"
            )
        return np.array([lower])
    if lower == upper:
        raise ValueError(f"{count} points cannot be distinct on [{lower}, {upper}]")

    steps = np.arange(count, dtype=float)
    axis = lower + (upper - lower) * steps / (count - 1)
    axis[-1] = upper
    if lower == -upper:
        # x_i = -x_{N-i+1} exactly
        axis = (axis - axis[::-1]) / 2
    return axis


def build_grid_space(bounds, counts):
    """Cartesian grid with the evenly spaced rule
    x_i = lower + (upper - lower)(i - 1)/(count - 1) on every axis. A single
    interval and count may be given for q = 1."""
    if np.ndim(bounds) == 1:
        bounds = [bounds]
    if np.ndim(counts) == 0:
        counts = [counts]
    if len(bounds) != len(counts):
        raise ValueError(
            f"{len(bounds)} intervals given for {len(counts)} point counts"
        )

    axes = []
    for interval, count in zip(bounds, counts):
        if len(interval) != 2:
            raise ValueError(f"interval {interval} must be a (lower, upper) pair")
        if int(count) != count:
            raise ValueError(f"point count {count} is not an integer")
        axes.append(_grid_axis(float(interval[0]), float(interval[1]), int(count)))

    return DesignSpace(np.array(list(itertools.product(*axes))))


class RegressorSpec(object):
    kPolynomial = "polynomial"
    kExplicit = "explicit"

    def __init__(
        self, *, kind, degree=None, intercept=True, interaction=None, path=None
    ):
        if kind == self.kPolynomial:
            if degree is None or int(degree) != degree or degree < 0:
                raise ValueError(f"polynomial degree must be an integer >= 0: {degree}")
            if interaction is not None and interaction < 1:
                raise ValueError(f"interaction order must be >= 1: {interaction}")
            if degree == 0 and not intercept:
                raise ValueError("a degree-0 polynomial without intercept has no terms")
            degree = int(degree)
        elif kind == self.kExplicit:
            if path is None:
                raise ValueError("an explicit regressor table needs a path")
            path = Path(path)
        else:
            raise ValueError(f"unknown regressor kind {kind}")

        self.kind = kind
        self.degree = degree
        self.intercept = bool(intercept)
        self.interaction = interaction
        self.path = path

    @classmethod
    def polynomial(cls, degree, *, intercept=True, interaction=None):
        return cls(
            kind=cls.kPolynomial,
            degree=degree,
            intercept=intercept,
            interaction=interaction,
        )

    @classmethod
    def explicit(cls, path):
        return cls(kind=cls.kExplicit, path=path)

    def exponents(self, q):
        """Monomial exponent tuples in graded lexicographic order."""
        if self.kind != self.kPolynomial:
            raise ValueError("only polynomial specs have exponents")

        terms = []
        if self.intercept:
            terms.append((0,) * q)
        for total in range(1, self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(q), total):
                if self.interaction is not None and len(set(combo)) > self.interaction:
                    continue
                powers = [0] * q
                for variable in combo:
                    powers[variable] += 1
                terms.append(tuple(powers))
        return terms

    def __repr__(self):
        if self.kind == self.kExplicit:
            return f"RegressorSpec(explicit={self.path})"
        return (
            f"RegressorSpec(polynomial degree={self.degree} "
            + f"intercept={self.intercept} interaction={self.interaction})"
        )


def _monomial_name(powers):
    factors = []
    for variable, power in enumerate(powers):
        if power == 1:
            factors.append(f"x{variable + 1}")
        elif power > 1:
            factors.append(f"x{variable + 1}^{power}")
    return "*".join(factors) or "1"


class RegressorMatrix(object):
    """F, with row i holding f'(x_i)."""

    def __init__(self, F, *, names=None):
        F = np.array(F, dtype=float)
        if F.ndim == 1:
            F = F[:, np.newaxis]
        self.F = _frozen(F, ndim=2)
        if names is None:
            names = [f"f{j + 1}" for j in range(self.p)]
        if len(names) != self.p:
            raise ValueError(f"{len(names)} column names for {self.p} columns")
        self.names = list(names)

        if self.p > self.N:
            raise RankDeficiencyException(
                f"{self.p} regressors exceed the {self.N} design points"
            )
        self.rank = numerical_rank(self.F)
        if self.rank < self.p:
            raise RankDeficiencyException(
                f"regressor matrix has rank {self.rank} < p = {self.p} "
                + f"(columns {self.names})"
            )

    @property
    def N(self):
        return self.F.shape[0]

    @property
    def p(self):
        return self.F.shape[1]

    def __repr__(self):
        return f"RegressorMatrix(N={self.N}, p={self.p}, columns={self.names})"


def load_regressor_table(path):
    """Reads a comma-separated table with one header row of column names."""
    path = Path(path)
    with open(path, "r") as f:
        header = f.readline()
    names = [name.strip() for name in header.strip().split(",")]
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    if table.shape[1] != len(names):
        raise ValueError(
            f"{path} has {len(names)} header columns but {table.shape[1]} data columns"
        )
    log.debug(f"load_regressor_table read {table.shape} from {path}")
    return names, table


def evaluate_regressors(spec, space):
    if spec.kind == RegressorSpec.kExplicit:
        names, table = load_regressor_table(spec.path)
        if table.shape[0] != space.N:
            raise ValueError(
                f"regressor table {spec.path} has {table.shape[0]} rows, "
                + f"the design space has {space.N} points"
            )
        return RegressorMatrix(table, names=names)

    exponents = spec.exponents(space.q)
    columns = [np.prod(space.points ** np.array(powers), axis=1) for powers in exponents]
    return RegressorMatrix(
        np.column_stack(columns), names=[_monomial_name(e) for e in exponents]
    )


class OrthonormalBasis(object):
    """N x p matrix Q with orthonormal columns spanning the columns of F."""

    def __init__(self, Q, *, source=None):
        Q = np.array(Q, dtype=float)
        if Q.ndim == 1:
            Q = Q[:, np.newaxis]
        self.Q = _frozen(Q, ndim=2)
        self.source = source

        deviation = np.max(np.abs(self.Q.T @ self.Q - np.eye(self.p)))
        if deviation > kOrthonormalTolerance:
            raise ValueError(f"columns are not orthonormal (max |Q'Q - I| = {deviation})")

    @property
    def N(self):
        return self.Q.shape[0]

    @property
    def p(self):
        return self.Q.shape[1]

    def spans(self, indices):
        """Whether the rows of Q at these indices have rank p."""
        indices = np.asarray(indices, dtype=int)
        if indices.size < self.p:
            return False
        return numerical_rank(self.Q[indices]) == self.p

    def is_admissible(self, design):
        return len(design) == self.N and self.spans(design.support)

    def check_admissible(self, design):
        if len(design) != self.N:
            raise InadmissibleDesignException(
                f"{design} has {len(design)} weights for {self.N} design points"
            )
        if not self.spans(design.support):
            raise InadmissibleDesignException(
                f"support of {design} does not span the {self.p} regressors"
            )

    def __repr__(self):
        return f"OrthonormalBasis(N={self.N}, p={self.p})"


def as_basis(Q):
    if isinstance(Q, OrthonormalBasis):
        return Q
    return OrthonormalBasis(Q)


def orthonormalize(regressors):
    if not isinstance(regressors, RegressorMatrix):
        regressors = RegressorMatrix(regressors)
    F = regressors.F

    singular = linalg.svdvals(F)
    if singular[-1] < kRankTolerance * singular[0]:
        raise RankDeficiencyException(
            f"smallest singular value {singular[-1]:.3g} is below "
            + f"{kRankTolerance} x {singular[0]:.3g}"
        )

    Q, T, pivots = linalg.qr(F, mode="economic", pivoting=True)
    # Sign convention: the triangular factor gets a positive diagonal, so each
    # column of Q points along its (pivoted) column of F.
    signs = np.where(np.diag(T) < 0, -1.0, 1.0)
    # Back to the column order of F.
    Q = (Q * signs)[:, np.argsort(pivots)]
    return OrthonormalBasis(Q, source=regressors)


class DesignMeasure(object):
    """Probability weights xi_1..xi_N over the design points."""

    def __init__(self, weights):
        weights = np.array(weights, dtype=float).ravel()
        if weights.size < 1 or not np.all(np.isfinite(weights)):
            raise ValueError("design weights must be a non-empty finite vector")
        if np.min(weights) < -kNegativeWeightTolerance:
            raise ValueError(f"negative design weight {np.min(weights)}")
        weights = np.clip(weights, 0.0, None)

        total = weights.sum()
        if abs(total - 1.0) > kWeightSumTolerance:
            raise ValueError(f"design weights sum to {total!r}, not 1")
        if total != 1.0:
            weights = weights / total
        weights.setflags(write=False)
        self.weights = weights

    @classmethod
    def uniform(cls, N):
        return cls(np.full(N, 1.0 / N))

    @classmethod
    def point_masses(cls, N, indices, masses=None):
        weights = np.zeros(N)
        if masses is None:
            masses = np.full(len(indices), 1.0 / len(indices))
        weights[np.asarray(indices)] = masses
        return cls(weights)

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)

    @property
    def N(self):
        return self.weights.size

    def __len__(self):
        return self.N

    def __repr__(self):
        support = self.support
        if support.size <= 6:
            points = ", ".join(f"{i}:{self.weights[i]:.4g}" for i in support)
        else:
            points = f"{support.size} points"
        return f"DesignMeasure(N={self.N}, support=[{points}])"

    def __eq__(self, other):
        return isinstance(other, DesignMeasure) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash(self.weights.tobytes())
