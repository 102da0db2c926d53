"""Exhaustive candidate enumeration, scoring, and argmin selection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import criteria as _criteria
from .covariance import PriorScale, estimate_lambda, estimate_phi_full_model
from .exceptions import (
    CandidateExplosionError,
    DegenerateVarianceError,
    NoAdmissibleCandidateError,
    PenaltyUndefinedError,
    SaturatedModelError,
    SingularDesignError,
)
from .model_core import CandidateModel, Dataset, WhitenedData, gls_fit, whiten

MAX_P_OMEGA = 20


@dataclass(frozen=True)
class SelectionOptions:
    """Knobs shared by select(), score_candidates() and the CLI.

    ``lam=None`` re-estimates the prior scale per candidate (the default);
    a float fixes it for every candidate.
    """

    prior_kind: str = "ridge"
    lam: float | None = None
    include_null: bool = True


@dataclass
class CandidateScores:
    """One scored candidate: criterion values plus per-criterion exclusions."""

    model: CandidateModel
    scores: dict[str, float] = field(default_factory=dict)
    excluded: dict[str, str] = field(default_factory=dict)
    beta_hat: np.ndarray | None = None
    lambda_hat: float | None = None
    lambda_at_boundary: bool = False


@dataclass
class ScoreTable:
    rows: list[CandidateScores]
    criteria: tuple[str, ...]
    whitened: WhitenedData
    phi_hat: float | None = None
    phi_at_boundary: bool = False


@dataclass
class SelectionReport:
    """Selection outcome for one criterion.

    ``ranked`` is ascending in (score, p, indices); ``selected`` is its first
    entry; candidates that could not be scored appear in ``excluded`` with a
    reason.
    """

    criterion: str
    ranked: list[tuple[CandidateModel, float]]
    selected: CandidateModel
    excluded: list[tuple[CandidateModel, str]]
    phi_hat: float | None = None
    phi_at_boundary: bool = False


def enumerate_candidates(p_omega: int, include_null: bool = True) -> list[CandidateModel]:
    """All column subsets of {1, ..., p_omega}, ordered by size then lexicographically."""
    if p_omega > MAX_P_OMEGA:
        raise CandidateExplosionError(
            f"candidate explosion: 2^{p_omega} subsets; restrict the design "
            f"to at most {MAX_P_OMEGA} columns"
        )
    start = 0 if include_null else 1
    out = []
    for size in range(start, p_omega + 1):
        for combo in itertools.combinations(range(1, p_omega + 1), size):
            out.append(CandidateModel(combo))
    return out


def _resolved_whitened(dataset: Dataset):
    """Estimate phi if needed and whiten; returns (whitened, phi_estimate)."""
    phi_est = estimate_phi_full_model(dataset)
    if phi_est is not None:
        dataset = replace(dataset, cov=dataset.cov.with_phi(phi_est.value))
    return whiten(dataset), phi_est


def score_candidates(
    dataset: Dataset,
    criteria: tuple[str, ...] | list[str],
    options: SelectionOptions | None = None,
) -> ScoreTable:
    """Score every candidate with every requested criterion.

    Rank-deficient candidates are excluded for all criteria; candidates with
    n - p - 2 <= 0 or p >= n are excluded for the criteria whose penalty or
    likelihood is undefined there.  Degenerate (interpolating) fits raise.
    """
    criteria = tuple(criteria)
    unknown = [c for c in criteria if c not in _criteria.CRITERION_NAMES]
    if unknown:
        raise ValueError(f"unknown criteria: {unknown}")
    opts = options or SelectionOptions()
    wd, phi_est = _resolved_whitened(dataset)
    needs_prior = any(c in _criteria.NEEDS_PRIOR for c in criteria)
    rows: list[CandidateScores] = []
    for cand in enumerate_candidates(dataset.p_omega, opts.include_null):
        row = CandidateScores(model=cand)
        try:
            prior = None
            if needs_prior:
                if opts.lam is not None:
                    lam, at_bound = float(opts.lam), False
                elif cand.p == 0:
                    lam, at_bound = 1.0, False
                else:
                    lam, at_bound = estimate_lambda(wd, cand, opts.prior_kind)
                    row.lambda_hat = lam
                    row.lambda_at_boundary = at_bound
                prior = PriorScale(opts.prior_kind, lam)
            fit = gls_fit(wd, cand, prior)
        except SingularDesignError:
            row.excluded = {name: "singular design" for name in criteria}
            rows.append(row)
            continue
        except DegenerateVarianceError as exc:
            raise DegenerateVarianceError(f"candidate {cand.label()}: {exc}") from exc
        row.beta_hat = fit.beta_hat
        for name in criteria:
            try:
                row.scores[name] = _criteria.score(
                    name, fit, whitened=wd, model=cand, prior=prior
                )
            except PenaltyUndefinedError:
                row.excluded[name] = "penalty undefined"
            except SaturatedModelError:
                row.excluded[name] = "saturated model"
            except DegenerateVarianceError as exc:
                raise DegenerateVarianceError(f"candidate {cand.label()}: {exc}") from exc
        rows.append(row)
    return ScoreTable(
        rows=rows,
        criteria=criteria,
        whitened=wd,
        phi_hat=None if phi_est is None else phi_est.value,
        phi_at_boundary=False if phi_est is None else phi_est.at_boundary,
    )


def report_from_table(table: ScoreTable, criterion: str) -> SelectionReport:
    """Build the single-criterion report from a score table."""
    scored = [
        (row.model, row.scores[criterion]) for row in table.rows if criterion in row.scores
    ]
    excluded = [
        (row.model, row.excluded[criterion]) for row in table.rows if criterion in row.excluded
    ]
    if not scored:
        raise NoAdmissibleCandidateError(f"no admissible candidate for {criterion}")
    # Ties break toward smaller p, then lexicographic indices.
    ranked = sorted(scored, key=lambda ms: (ms[1],) + ms[0].sort_key)
    return SelectionReport(
        criterion=criterion,
        ranked=ranked,
        selected=ranked[0][0],
        excluded=excluded,
        phi_hat=table.phi_hat,
        phi_at_boundary=table.phi_at_boundary,
    )


def select(
    dataset: Dataset,
    criterion: str,
    options: SelectionOptions | None = None,
) -> SelectionReport:
    """Score the power set of columns and pick the criterion's argmin."""
    table = score_candidates(dataset, (criterion,), options)
    return report_from_table(table, criterion)


def prediction_error(
    selected: CandidateModel,
    dataset: Dataset,
    truth: tuple[np.ndarray, np.ndarray],
    phi_hat: float | None = None,
) -> float:
    """Quadratic loss ||X_j beta_hat_j - X* beta*||^2 / n of the selected model.

    ``beta_hat_j`` is the GLS estimator under V(phi_hat); the loss itself is
    the plain Euclidean norm on the original (unwhitened) scale.
    """
    x_true, beta_true = truth
    x_true = np.asarray(x_true, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float).reshape(-1)
    if x_true.shape != (dataset.n, beta_true.shape[0]):
        raise ValueError("truth dimensions do not conform to the dataset")
    cov = dataset.cov
    if phi_hat is not None and cov.kind in ("ar1", "nerm"):
        cov = cov.with_phi(phi_hat)
    ds = replace(dataset, cov=cov)
    fit = gls_fit(whiten(ds), selected)
    if selected.p:
        mu_hat = dataset.x_full[:, selected.zero_based] @ fit.beta_hat
    else:
        mu_hat = np.zeros(dataset.n)
    diff = mu_hat - x_true @ beta_true
    return float(diff @ diff) / dataset.n
