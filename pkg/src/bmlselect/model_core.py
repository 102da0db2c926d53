"""Whitened generalized-least-squares core.

Every selection criterion is assembled from a handful of scalars computed
here: the quadratic forms y'Py and y'Ay, the log-determinants of V, of
X'V^{-1}X and of W X'V^{-1}X + I, and the two variance estimates.  The
production path uses two factorizations only, a Cholesky whitening of the
error covariance followed by a QR of the whitened candidate design; the
n x n projection matrices of the theory are never formed (test oracles do
form them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .covariance import RANK_PIVOT_RTOL, CovarianceSpec, PriorScale, make_whitener
from .exceptions import (
    CovarianceError,
    DegenerateVarianceError,
    SaturatedModelError,
    SingularDesignError,
)

LOG_2PI = math.log(2.0 * math.pi)

# A residual sum of squares at or below this fraction of y'V^{-1}y is an
# exact interpolation up to rounding; taking its log would be meaningless.
DEGENERATE_RTOL = 4e-14


@dataclass(frozen=True)
class CandidateModel:
    """A candidate regression model: a subset of full-model columns.

    Indices are 1-based (column 1 is the first predictor), strictly
    increasing, and may be empty for the null model.
    """

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])) or (idx and idx[0] < 1):
            raise ValueError(f"candidate indices must be strictly increasing and >= 1: {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def p(self) -> int:
        return len(self.indices)

    @property
    def zero_based(self) -> tuple[int, ...]:
        return tuple(i - 1 for i in self.indices)

    @property
    def sort_key(self) -> tuple:
        return (self.p, self.indices)

    def label(self) -> str:
        return " ".join(str(i) for i in self.indices) if self.indices else "(null)"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector, full design matrix, and an error-covariance descriptor."""

    y: np.ndarray
    x_full: np.ndarray
    cov: CovarianceSpec

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x_full, dtype=float)
        if x.ndim != 2:
            raise ValueError("x_full must be a 2-D matrix")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"y has {y.shape[0]} rows but x_full has {x.shape[0]}")
        if y.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("need n >= 1 observations and p_omega >= 1 predictors")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        if not np.all(np.isfinite(x)):
            raise ValueError("x_full contains non-finite values")
        rd = np.abs(np.diag(np.linalg.qr(x, mode="r")))
        if rd.max() == 0.0 or rd.min() < RANK_PIVOT_RTOL * rd.max():
            raise SingularDesignError("full design matrix is rank deficient")
        if self.cov.kind == "nerm" and sum(self.cov.group_sizes) != y.shape[0]:
            raise CovarianceError(
                f"nerm group sizes sum to {sum(self.cov.group_sizes)}, expected n = {y.shape[0]}"
            )
        if self.cov.kind == "custom" and self.cov.matrix.shape[0] != y.shape[0]:
            raise CovarianceError("custom covariance size does not match n")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_full", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p_omega(self) -> int:
        return self.x_full.shape[1]


@dataclass(frozen=True, eq=False)
class WhitenedData:
    """Design and response premultiplied by L^{-1} for V = L L^t."""

    x: np.ndarray
    y: np.ndarray
    logdet_v: float

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p_omega(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class WhitenedFit:
    """Per-candidate GLS computation cache.

    ``ypy`` is the GLS residual quadratic form y'Py; both variance estimates
    derive from this one stored scalar.  ``yay`` and ``logdet_wxvx_plus_i``
    are present only when the fit was computed with a prior scale.  ``yty``
    is the whitened total sum of squares y'V^{-1}y, kept for degeneracy
    checks.
    """

    p: int
    n: int
    beta_hat: np.ndarray
    ypy: float
    yty: float
    logdet_v: float
    logdet_xvx: float
    yay: float | None = None
    logdet_wxvx_plus_i: float | None = None

    @property
    def sigma2_hat(self) -> float:
        return self.ypy / self.n

    @property
    def sigma2_tilde(self) -> float:
        if self.n - self.p <= 0:
            raise SaturatedModelError(f"saturated model: p = {self.p} >= n = {self.n}")
        return self.ypy / (self.n - self.p)

    @property
    def has_prior(self) -> bool:
        return self.yay is not None


def whiten(dataset: Dataset) -> WhitenedData:
    """Apply the lower-triangular whitening factor of V to y and X.

    Returns the transformed data together with log|V|; y'V^{-1}y equals the
    squared norm of the whitened response.
    """
    if dataset.cov.has_unknown_phi:
        raise CovarianceError(
            "covariance parameter is unknown; run estimate_phi_full_model first"
        )
    wh = make_whitener(dataset.cov, dataset.n)
    return WhitenedData(
        x=wh.whiten(dataset.x_full), y=wh.whiten(dataset.y), logdet_v=float(wh.logdet)
    )


def gls_fit(
    whitened: WhitenedData,
    model: CandidateModel,
    prior: PriorScale | None = None,
) -> WhitenedFit:
    """GLS fit of one candidate on whitened data.

    With a prior scale the marginal-likelihood quantities are filled in:
    y'Ay = y'V^{-1}y - z'(G + W^{-1})^{-1} z for z = X'V^{-1}y and
    G = X'V^{-1}X, and log|W X'V^{-1}X + I| = log|G + W^{-1}| + log|W|.
    """
    yt = whitened.y
    n = whitened.n
    yty = float(yt @ yt)
    if model.indices and model.indices[-1] > whitened.p_omega:
        raise ValueError(
            f"candidate {model.label()} uses column {model.indices[-1]} "
            f"but the design has {whitened.p_omega}"
        )
    if model.p == 0:
        return WhitenedFit(
            p=0,
            n=n,
            beta_hat=np.zeros(0),
            ypy=yty,
            yty=yty,
            logdet_v=whitened.logdet_v,
            logdet_xvx=0.0,
            yay=yty if prior is not None else None,
            logdet_wxvx_plus_i=0.0 if prior is not None else None,
        )
    xj = whitened.x[:, model.zero_based]
    q, r = np.linalg.qr(xj, mode="reduced")
    rd = np.abs(np.diag(r))
    if rd.max() == 0.0 or rd.min() < RANK_PIVOT_RTOL * rd.max():
        raise SingularDesignError(f"singular design for candidate {model.label()}")
    c = q.T @ yt
    ypy = max(float(yty - c @ c), 0.0)
    beta = scipy.linalg.solve_triangular(r, c, lower=False, check_finite=False)
    logdet_xvx = 2.0 * float(np.sum(np.log(rd)))
    yay = None
    logdet_wxvx = None
    if prior is not None:
        gram = r.T @ r
        m = gram + prior.w_inverse(gram)
        cf = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
        z = r.T @ c
        yay = max(float(yty - z @ scipy.linalg.cho_solve(cf, z, check_finite=False)), 0.0)
        logdet_m = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        logdet_wxvx = logdet_m + prior.logdet_w(model.p, logdet_xvx)
    return WhitenedFit(
        p=model.p,
        n=n,
        beta_hat=beta,
        ypy=ypy,
        yty=yty,
        logdet_v=whitened.logdet_v,
        logdet_xvx=logdet_xvx,
        yay=yay,
        logdet_wxvx_plus_i=logdet_wxvx,
    )


def check_variance(fit: WhitenedFit) -> None:
    """Raise when the residual variance is zero up to rounding."""
    if fit.ypy <= DEGENERATE_RTOL * fit.yty:
        raise DegenerateVarianceError(
            f"degenerate variance: residual quadratic form is zero (p = {fit.p}, n = {fit.n})"
        )


def neg2_log_marginal(fit: WhitenedFit) -> float:
    """-2 log of the normal-prior marginal density at the plug-in variance.

    Equals n log(2 pi sigma2_hat) + log|V| + log|W X'V^{-1}X + I| +
    y'Ay / sigma2_hat.
    """
    if fit.yay is None:
        raise ValueError("fit was computed without a prior scale")
    check_variance(fit)
    s2 = fit.sigma2_hat
    return (
        fit.n * (LOG_2PI + math.log(s2))
        + fit.logdet_v
        + fit.logdet_wxvx_plus_i
        + fit.yay / s2
    )


def neg2_log_residual(fit: WhitenedFit) -> float:
    """-2 log of the flat-prior (residual) likelihood at the REML variance.

    The final quadratic term y'Py / sigma2_tilde is n - p identically, so it
    is emitted as that exact integer.
    """
    if fit.p >= fit.n:
        raise SaturatedModelError(f"saturated model: p = {fit.p} >= n = {fit.n}")
    check_variance(fit)
    dof = fit.n - fit.p
    return (
        dof * (LOG_2PI + math.log(fit.sigma2_tilde))
        + fit.logdet_v
        + fit.logdet_xvx
        + float(dof)
    )
