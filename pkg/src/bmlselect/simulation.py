"""Monte Carlo harness: data generation with SNR control, replication loops,
true-model selection counts, and mean prediction error per criterion.

Determinism contract: the RNG stream of every replication is derived from
(master_seed, cell_index, replication_index) through ``numpy``'s
SeedSequence, so results are bit-identical for any worker count.  Worker
processes are capped by the BMLSELECT_THREADS environment variable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import product
from multiprocessing import get_context

import numpy as np

from .covariance import CovarianceSpec, make_whitener
from .criteria import CRITERION_NAMES
from .exceptions import NoAdmissibleCandidateError
from .model_core import CandidateModel, Dataset
from .selection import SelectionOptions, score_candidates

MODEL_KINDS = ("constant_variance", "ar1", "nerm")

BETA_PATTERNS = {
    "four_ones": (1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
    "two_ones": (1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
}

# The comparison set used by the experiment defaults.
DEFAULT_CRITERIA = ("ic_pi1", "ic_r", "aic", "bic", "dic", "ml")


@dataclass(frozen=True)
class Cell:
    n: int
    snr: float
    index: int


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment grid: model kind x n_grid x snr_grid, fixed truth pattern."""

    model_kind: str = "constant_variance"
    n_grid: tuple[int, ...] = (20, 40, 80)
    snr_grid: tuple[float, ...] = (1.0, 3.0, 5.0)
    beta_pattern: str = "four_ones"
    replications: int = 1000
    criteria: tuple[str, ...] = DEFAULT_CRITERIA
    master_seed: int = 0
    phi_true: float = 0.5
    nerm_group_size: int = 4
    include_null: bool = True
    prior_kind: str = "ridge"

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.beta_pattern not in BETA_PATTERNS:
            raise ValueError(f"unknown beta pattern {self.beta_pattern!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if any(s <= 0 for s in self.snr_grid):
            raise ValueError("snr values must be positive")
        if not (isinstance(self.master_seed, int) and self.master_seed >= 0):
            raise ValueError("master_seed must be a non-negative integer")
        unknown = [c for c in self.criteria if c not in CRITERION_NAMES]
        if unknown:
            raise ValueError(f"unknown criteria: {unknown}")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "criteria", tuple(self.criteria))
        if self.model_kind == "nerm":
            bad = [n for n in self.n_grid if n % self.nerm_group_size != 0]
            if bad:
                raise ValueError(
                    f"nerm group size {self.nerm_group_size} does not divide n in {bad}"
                )

    @property
    def beta_true_full(self) -> np.ndarray:
        return np.asarray(BETA_PATTERNS[self.beta_pattern], dtype=float)

    @property
    def p_omega(self) -> int:
        return len(BETA_PATTERNS[self.beta_pattern])

    def cells(self) -> tuple[Cell, ...]:
        grid = product(self.n_grid, self.snr_grid)
        return tuple(Cell(n=n, snr=snr, index=i) for i, (n, snr) in enumerate(grid))

    def true_covariance(self, n: int) -> CovarianceSpec:
        if self.model_kind == "constant_variance":
            return CovarianceSpec.identity()
        if self.model_kind == "ar1":
            return CovarianceSpec.ar1(self.phi_true)
        m = n // self.nerm_group_size
        return CovarianceSpec.nerm((self.nerm_group_size,) * m, self.phi_true)

    def fit_covariance(self, n: int) -> CovarianceSpec:
        """Covariance handed to the selection pipeline: phi is re-estimated."""
        if self.model_kind == "constant_variance":
            return CovarianceSpec.identity()
        if self.model_kind == "ar1":
            return CovarianceSpec.ar1(None)
        m = n // self.nerm_group_size
        return CovarianceSpec.nerm((self.nerm_group_size,) * m, None)


@dataclass(frozen=True)
class SimTruth:
    j_star: CandidateModel
    x_true: np.ndarray
    beta_true: np.ndarray
    sigma2: float
    cov_true: CovarianceSpec


@dataclass(frozen=True)
class CriterionSummary:
    true_model_count: int
    mean_prediction_error: float
    standard_error: float


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregate for one grid cell: per-criterion counts and mean losses."""

    model_kind: str
    n: int
    snr: float
    beta_pattern: str
    replications: int
    by_criterion: dict[str, CriterionSummary] = field(default_factory=dict)


def generate_dataset(spec: ExperimentSpec, cell: Cell, replication_index: int):
    """Draw one replication: fresh standard-normal X, correlated noise.

    sigma^2 = beta'beta / SNR^2, which makes var(x'beta) / var(eps) = SNR^2
    for standard-normal regressors; the noise is sigma * L w for V = L L'.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence((spec.master_seed, cell.index, replication_index))
    )
    beta = spec.beta_true_full
    n = cell.n
    x = rng.standard_normal((n, beta.shape[0]))
    sigma2 = float(beta @ beta) / (cell.snr * cell.snr)
    cov_true = spec.true_covariance(n)
    eps = math.sqrt(sigma2) * make_whitener(cov_true, n).color(rng.standard_normal(n))
    y = x @ beta + eps
    dataset = Dataset(y=y, x_full=x, cov=spec.fit_covariance(n))
    nonzero = tuple(int(i) + 1 for i in np.flatnonzero(beta))
    truth = SimTruth(
        j_star=CandidateModel(nonzero),
        x_true=x[:, [i - 1 for i in nonzero]],
        beta_true=beta[[i - 1 for i in nonzero]],
        sigma2=sigma2,
        cov_true=cov_true,
    )
    return dataset, truth


def _run_replication(spec: ExperimentSpec, cell: Cell, replication_index: int):
    """One replication: returns {criterion: (selected_is_true, prediction_error)}."""
    dataset, truth = generate_dataset(spec, cell, replication_index)
    table = score_candidates(
        dataset,
        spec.criteria,
        SelectionOptions(prior_kind=spec.prior_kind, include_null=spec.include_null),
    )
    mu_true = truth.x_true @ truth.beta_true
    out = {}
    for name in spec.criteria:
        best = None
        for row in table.rows:
            if name not in row.scores:
                continue
            key = (row.scores[name],) + row.model.sort_key
            if best is None or key < best[0]:
                best = (key, row)
        if best is None:
            raise NoAdmissibleCandidateError(
                f"cell (n={cell.n}, snr={cell.snr}) replication {replication_index}: "
                f"no admissible candidate for {name}"
            )
        row = best[1]
        if row.model.p:
            mu_hat = dataset.x_full[:, row.model.zero_based] @ row.beta_hat
            diff = mu_hat - mu_true
        else:
            diff = -mu_true
        pe = float(diff @ diff) / cell.n
        out[name] = (row.model == truth.j_star, pe)
    return out


def _replication_task(args):
    return _run_replication(*args)


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: requested or cpu_count, capped by BMLSELECT_THREADS."""
    cap_env = os.environ.get("BMLSELECT_THREADS", "").strip()
    cap = None
    if cap_env:
        try:
            cap = max(1, int(cap_env))
        except ValueError:
            raise ValueError(
                f"BMLSELECT_THREADS must be an integer, got {cap_env!r}"
            ) from None
    workers = requested if requested is not None else (os.cpu_count() or 1)
    if cap is not None:
        workers = min(workers, cap)
    return max(1, int(workers))


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> list[ExperimentResult]:
    """Run the full grid; aggregation is independent of worker scheduling."""
    workers = resolve_workers(workers)
    results = []
    for cell in spec.cells():
        tasks = [(spec, cell, rep) for rep in range(spec.replications)]
        if workers > 1 and spec.replications > 1:
            chunk = max(1, spec.replications // (workers * 8))
            with get_context("fork").Pool(processes=workers) as pool:
                rows = pool.map(_replication_task, tasks, chunksize=chunk)
        else:
            rows = [_run_replication(*task) for task in tasks]
        by_criterion = {}
        for name in spec.criteria:
            hits = sum(1 for r in rows if r[name][0])
            losses = np.array([r[name][1] for r in rows])
            se = float(losses.std(ddof=1) / math.sqrt(len(losses))) if len(losses) > 1 else 0.0
            by_criterion[name] = CriterionSummary(
                true_model_count=hits,
                mean_prediction_error=float(losses.mean()),
                standard_error=se,
            )
        results.append(
            ExperimentResult(
                model_kind=spec.model_kind,
                n=cell.n,
                snr=cell.snr,
                beta_pattern=spec.beta_pattern,
                replications=spec.replications,
                by_criterion=by_criterion,
            )
        )
    return results
