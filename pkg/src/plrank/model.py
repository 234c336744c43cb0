"""Stagewise choice model, mixture likelihood, and forward sampling.

A support vector p > 0 drives sequential choice without replacement: at
each stage the next item is picked with probability proportional to its
support among the items still available. A G-component mixture draws the
support vector per unit according to weights w. Likelihood code runs on
unnormalized supports (scaling a component's row leaves every stagewise
probability unchanged); normalization happens only when reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, PartialOrdering, validate_ordering_matrix
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Component supports (G x K, positive) and weights (G, simplex)."""

    supports: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.supports, dtype=np.float64)
        if p.ndim == 1:
            p = p[None, :]
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if p.ndim != 2 or w.ndim != 1 or w.shape[0] != p.shape[0]:
            raise ValidationError("supports must be G x K with G weights")
        if not np.isfinite(p).all() or (p <= 0).any():
            raise ValidationError("supports must be positive and finite")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be nonnegative and sum to 1")
        p = p.copy()
        w = w.copy()
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "supports", p)
        object.__setattr__(self, "weights", w)

    @property
    def n_components(self) -> int:
        return self.supports.shape[0]

    @property
    def n_items(self) -> int:
        return self.supports.shape[1]

    @classmethod
    def uniform(cls, G: int, K: int) -> "MixtureParams":
        return cls(np.full((G, K), 1.0 / K), np.full(G, 1.0 / G))

    def normalized(self) -> "NormalizedParams":
        rows = self.supports / self.supports.sum(axis=1, keepdims=True)
        marginal = self.weights @ rows
        return NormalizedParams(rows, self.weights.copy(), marginal)


@dataclass(frozen=True, eq=False)
class NormalizedParams:
    """Presentation form: support rows on the simplex plus the
    weight-averaged marginal supports."""

    supports: np.ndarray
    weights: np.ndarray
    marginal: np.ndarray


def _check_params_data(params: MixtureParams, K: int) -> None:
    if params.n_items != K:
        raise ValidationError(
            f"params cover {params.n_items} items but data has {K}"
        )


def component_stage_logliks(data: Dataset, supports: np.ndarray) -> np.ndarray:
    """Log stagewise-choice likelihood of every unit under every support
    row; returns an (N, G) matrix.

    Stage t of unit s contributes log p[chosen] - log(remaining mass),
    where the remaining mass is the row total minus the supports already
    consumed at earlier stages.
    """
    p = np.asarray(supports, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    idx = np.where(data.stage_mask, data.item_idx, 0)
    sel = p.T[idx]                       # (N, K, G) chosen supports
    sel[~data.stage_mask] = 0.0
    consumed = np.cumsum(sel, axis=1) - sel
    rem = p.sum(axis=1)[None, None, :] - consumed
    logp = np.log(p)
    log_sel = logp.T[idx]
    with np.errstate(divide="ignore"):
        log_rem = np.log(rem)
    terms = log_sel - log_rem
    terms[~data.stage_mask] = 0.0
    return terms.sum(axis=1)


def pl_prob(ordering, supports) -> float:
    """Probability of one partial ordering under a single support vector."""
    if isinstance(ordering, PartialOrdering):
        row = ordering.entries
    else:
        row = validate_ordering_matrix(ordering)[0]
    p = np.asarray(supports, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != row.shape[0]:
        raise ValidationError("supports must be a length-K vector")
    if not np.isfinite(p).all() or (p <= 0).any():
        raise ValidationError("supports must be positive and finite")
    data = Dataset.from_orderings(row[None, :])
    return float(np.exp(component_stage_logliks(data, p[None, :])[0, 0]))


def mixture_logliks_per_unit(params: MixtureParams, data: Dataset) -> np.ndarray:
    """Log mixture density of each unit's observed sequence (length N)."""
    _check_params_data(params, data.n_items)
    comp = component_stage_logliks(data, params.supports)
    if params.n_components == 1:
        return comp[:, 0]
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    return logsumexp(comp + logw[None, :], axis=1)


def mixture_loglik(params: MixtureParams, data: Dataset) -> float:
    """Observed-data log-likelihood of the mixture on the dataset."""
    return float(mixture_logliks_per_unit(params, data).sum())


def sample_mixture(n: int, K: int, G: int, params: MixtureParams, rng=None):
    """Draw n complete orderings from a G-component mixture.

    Component labels are drawn from the weights, then each unit's full
    ordering comes from sequential sampling without replacement under its
    component's supports (implemented by sorting Gumbel-perturbed log
    supports, which has the same law).

    Returns (labels, dataset): 1-based component labels of length n and a
    Dataset of n complete orderings.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if params.n_components != G or params.n_items != K:
        raise ValidationError("params shape must match (G, K)")
    if rng is None:
        rng = np.random.default_rng()
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    labels = np.argmax(logw[None, :] + rng.gumbel(size=(n, G)), axis=1)
    key = np.log(params.supports)[labels] + rng.gumbel(size=(n, K))
    orderings = np.argsort(-key, axis=1, kind="stable") + 1
    return labels + 1, Dataset.from_orderings(orderings)
