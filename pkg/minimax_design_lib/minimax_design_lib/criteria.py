# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import logging
import math
import numpy as np

from dataclasses import dataclass
from scipy import linalg

from minimax_design_lib import (
    DesignMeasure,
    InadmissibleDesignException,
    OracleDisagreementException,
    SingularMomentException,
    as_basis,
    numerical_rank,
)

log = logging.getLogger("minimax_design_lib")

kConditionLimit = 1e12
kDegenerateGap = 1e-9
kOracleTolerance = 1e-8
kPsiNormTolerance = 1e-10
kPsiOrthogonalityTolerance = 1e-8


@dataclass(frozen=True)
class MomentBundle:
    R: np.ndarray
    S: np.ndarray
    U: np.ndarray
    R_inv: np.ndarray
    lambda_max: float
    v_max: np.ndarray
    eigen_gap: float

    @property
    def unique_top(self):
        """False when ch_max U is (near-)degenerate and v_max is not unique."""
        return self.eigen_gap > kDegenerateGap


@dataclass(frozen=True)
class LossScale:
    sigma2: float
    tau2: float
    n: int

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"run size must be a positive integer: {self.n}")
        nu_from_scale(self.sigma2, self.tau2)

    @property
    def nu(self):
        return nu_from_scale(self.sigma2, self.tau2)


@dataclass(frozen=True)
class WorstCasePsi:
    psi0: np.ndarray
    attained_bias: float


def _fix_sign(vector):
    # Largest-magnitude entry positive; argmax takes the lowest index on ties.
    if vector[np.argmax(np.abs(vector))] < 0:
        return -vector
    return vector


def symmetric_top_eigenpair(matrix):
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    gap = eigenvalues[-1] - eigenvalues[-2] if eigenvalues.size > 1 else math.inf
    return eigenvalues[-1], _fix_sign(eigenvectors[:, -1]), gap


def check_nu(nu):
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")


def moments_from_weights(Q, weights, *, label="design"):
    """Moment matrices for a raw weight vector, skipping the admissibility and
    sanitation checks of DesignMeasure. Weights may be slightly negative, as
    happens for finite-difference probes."""
    Q = as_basis(Q).Q
    weights = np.asarray(weights, dtype=float)

    R = Q.T @ (weights[:, np.newaxis] * Q)
    S = Q.T @ ((weights * weights)[:, np.newaxis] * Q)
    R = (R + R.T) / 2
    S = (S + S.T) / 2

    r_eigenvalues = linalg.eigvalsh(R)
    if r_eigenvalues[0] <= 0 or r_eigenvalues[-1] > kConditionLimit * r_eigenvalues[0]:
        raise SingularMomentException(
            f"R is numerically singular for {label} "
            + f"(eigenvalues {r_eigenvalues[0]:.3g} .. {r_eigenvalues[-1]:.3g})"
        )

    R_inv = linalg.inv(R)
    R_inv = (R_inv + R_inv.T) / 2
    U = R_inv @ S @ R_inv
    U = (U + U.T) / 2
    lambda_max, v_max, gap = symmetric_top_eigenpair(U)

    return MomentBundle(
        R=R,
        S=S,
        U=U,
        R_inv=R_inv,
        lambda_max=float(lambda_max),
        v_max=v_max,
        eigen_gap=float(gap),
    )


def moments(Q, xi):
    basis = as_basis(Q)
    basis.check_admissible(xi)
    return moments_from_weights(basis, xi.weights, label=repr(xi))


def variance(bundle):
    return float(np.trace(bundle.R_inv))


def maxbias(bundle):
    return bundle.lambda_max


def evaluate(Q, xi):
    """(var, maxbias) of a design."""
    bundle = moments(Q, xi)
    return variance(bundle), maxbias(bundle)


def loss(nu, var, maxbias):
    check_nu(nu)
    return (1.0 - nu) * var + nu * maxbias


def nu_from_scale(sigma2, tau2):
    if sigma2 < 0 or tau2 < 0:
        raise ValueError(f"variances must be nonnegative: sigma2={sigma2} tau2={tau2}")
    if sigma2 + tau2 <= 0:
        raise ValueError("sigma2 and tau2 cannot both be zero")
    return tau2 / (sigma2 + tau2)


def imse_scale(loss_value, scale):
    """Absolute worst-case IMSE, (sigma2 + tau2)/n times the loss."""
    return (scale.sigma2 + scale.tau2) / scale.n * loss_value


def cmb_value(var, maxbias):
    if var <= 0:
        raise ValueError(f"variance must be positive, got {var}")
    return math.sqrt(maxbias / var)


def worst_case_psi(Q, xi):
    """The unit contaminant, orthogonal to the regressors, that maximizes the
    integrated squared bias of xi. Computed over an orthonormal basis of the
    complement of Q, independently of ch_max U."""
    basis = as_basis(Q)
    if basis.N <= basis.p:
        raise InadmissibleDesignException(
            f"no contaminant is orthogonal to {basis.p} regressors on {basis.N} points"
        )
    bundle = moments(basis, xi)

    complement = linalg.null_space(basis.Q.T)
    B = complement.T @ (xi.weights[:, np.newaxis] * basis.Q) @ bundle.R_inv
    top, direction, _ = symmetric_top_eigenpair(B @ B.T)

    psi0 = complement @ direction
    psi0 = _fix_sign(psi0 / np.linalg.norm(psi0))
    return WorstCasePsi(psi0=psi0, attained_bias=float(top) + 1.0)


def bias_given_psi(Q, xi, psi0):
    basis = as_basis(Q)
    psi0 = np.asarray(psi0, dtype=float)
    if psi0.shape != (basis.N,):
        raise ValueError(f"psi0 has shape {psi0.shape}, expected ({basis.N},)")
    if abs(np.linalg.norm(psi0) - 1.0) > kPsiNormTolerance:
        raise ValueError(f"psi0 must have unit norm, got {np.linalg.norm(psi0)}")
    if np.max(np.abs(basis.Q.T @ psi0)) > kPsiOrthogonalityTolerance:
        raise ValueError("psi0 is not orthogonal to the regressors")

    bundle = moments(basis, xi)
    projected = bundle.R_inv @ (basis.Q.T @ (xi.weights * psi0))
    return float(projected @ projected) + 1.0


def cross_check_variance(F, xi):
    """tr(A M^-1) computed from the raw regressors, A = F'F, M = F'DF."""
    F = getattr(F, "F", F)
    F = np.asarray(F, dtype=float)
    if numerical_rank(F[xi.support]) < F.shape[1]:
        raise SingularMomentException(f"M is singular for {xi}")

    A = F.T @ F
    M = F.T @ (xi.weights[:, np.newaxis] * F)
    M = (M + M.T) / 2
    m_eigenvalues = linalg.eigvalsh(M)
    if m_eigenvalues[0] <= 0 or m_eigenvalues[-1] > kConditionLimit * m_eigenvalues[0]:
        raise SingularMomentException(f"M is numerically singular for {xi}")
    return float(np.trace(linalg.solve(M, A, assume_a="pos")))


def verify_design(Q, xi, *, F=None):
    """Cross-checks ch_max U against the worst-case contaminant oracle and, if the
    regressors are known, tr R^-1 against tr(A M^-1). Disagreement is raised,
    never resolved."""
    basis = as_basis(Q)
    var, bias = evaluate(basis, xi)

    if basis.N > basis.p:
        oracle = worst_case_psi(basis, xi).attained_bias
        if abs(bias - oracle) > kOracleTolerance * (1.0 + bias):
            raise OracleDisagreementException(
                f"ch_max U = {bias!r} but the worst-case contaminant attains "
                + f"{oracle!r} for {xi}"
            )

    if F is None and basis.source is not None:
        F = basis.source
    if F is not None:
        checked = cross_check_variance(F, xi)
        if abs(var - checked) > kOracleTolerance * abs(checked):
            raise OracleDisagreementException(
                f"tr R^-1 = {var!r} but tr(A M^-1) = {checked!r} for {xi}"
            )

    log.debug(f"verify_design {xi}: var={var:.6g} maxbias={bias:.6g} agree")
    return var, bias


def random_designs(N, count, rng, *, concentration=1.0):
    """Dirichlet-distributed designs on N points."""
    for weights in rng.dirichlet(np.full(N, concentration), size=count):
        yield DesignMeasure(weights / weights.sum())
