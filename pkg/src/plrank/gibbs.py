"""Posterior sampling via conjugate data augmentation.

Each observed sequence is augmented with independent exponential stage
times whose rates are the remaining support mass at each selection stage;
this makes every full conditional standard. One sweep updates, in order:

    weights     | memberships           ~ Dirichlet
    stage times | memberships, supports ~ Exponential
    supports    | times, memberships    ~ Gamma
    memberships | everything else       ~ categorical per unit

With a single component the weight and membership moves are skipped. The
recorded trace stores supports normalized within component (the sampler
itself runs on the unnormalized state), the mixture log-likelihood of the
current parameters after each sweep, and its deviance -2 log L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, PartialOrdering, binary_group_ind, validate_ordering_matrix
from .em import Hyperparams, MapFit
from .errors import NumericalError, ValidationError

DEFAULT_N_ITER = 22000
DEFAULT_N_BURN = 2000

# keeps a pathological underflow from planting log(0) in the state
_TINY_SUPPORT = 1e-300


@dataclass(frozen=True, eq=False)
class GibbsChain:
    """Kept draws of a sampler run.

    P has one row per kept sweep and G*K columns, component-major
    (p_1_1 ... p_1_K, p_2_1, ...), each component block normalized to
    sum 1. W holds the weight draws, log_lik the observed-data mixture
    log-likelihood at each kept state, deviance its -2 multiple.
    """

    P: np.ndarray
    W: np.ndarray
    log_lik: np.ndarray
    deviance: np.ndarray
    n_iter: int
    n_burn: int
    seed: int | None = None

    @property
    def n_kept(self) -> int:
        return self.P.shape[0]

    @property
    def n_components(self) -> int:
        return self.W.shape[1]

    @property
    def n_items(self) -> int:
        return self.P.shape[1] // self.W.shape[1]

    def supports_3d(self) -> np.ndarray:
        return self.P.reshape(self.n_kept, self.n_components, self.n_items)


def stage_rates(ordering_row, supports) -> np.ndarray:
    """Exponential rates of the latent stage times for one unit: the
    remaining support mass before each of its n_s selections."""
    if isinstance(ordering_row, PartialOrdering):
        row = ordering_row.entries
    else:
        row = validate_ordering_matrix(ordering_row)[0]
    p = np.asarray(supports, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != row.shape[0]:
        raise ValidationError("supports must be a length-K vector")
    if (p <= 0).any() or not np.isfinite(p).all():
        raise ValidationError("supports must be positive and finite")
    n_s = int((row != 0).sum())
    chosen = p[row[:n_s] - 1]
    return p.sum() - (np.cumsum(chosen) - chosen)


def init_from_map(fit: MapFit) -> dict:
    """Chain starting point from a MAP fit: its supports and the one-hot
    encoding of its classification."""
    return {
        "p": fit.supports.copy(),
        "z": binary_group_ind(fit.labels, fit.n_components),
    }


def _support_conditional(data: Dataset, z, y: np.ndarray, hyper: Hyperparams):
    """Gamma (shape, rate) arrays of the support full conditional.

    z may be one-hot (N, G) or 1-based labels (N,); y holds the latent
    stage times, zero beyond each unit's depth.
    """
    z = np.asarray(z)
    if z.ndim == 2:
        g_of_s = np.argmax(z, axis=1)
    else:
        g_of_s = np.asarray(z, dtype=np.int64) - 1
    G = hyper.n_components
    N, K = data.orderings.shape
    rows, cols = np.nonzero(data.stage_mask)
    items = data.item_idx[rows, cols]
    cum_y = np.cumsum(y, axis=1)
    full_y = cum_y[np.arange(N), data.nranked - 1]
    flat = g_of_s[rows] * K + items
    gamma_z = np.bincount(flat, minlength=G * K).reshape(G, K)
    contrib = np.repeat(full_y[:, None], K, axis=1)
    contrib[rows, items] = cum_y[rows, cols]
    cell = (g_of_s[:, None] * K + np.arange(K)[None, :]).ravel()
    shape = hyper.shape + gamma_z
    rate = hyper.rate[:, None] + np.bincount(
        cell, weights=contrib.ravel(), minlength=G * K
    ).reshape(G, K)
    return shape, rate


def gibbs_run(
    data: Dataset,
    G: int,
    hyper: Hyperparams | None = None,
    init: dict | None = None,
    n_iter: int = DEFAULT_N_ITER,
    n_burn: int = DEFAULT_N_BURN,
    rng=None,
    K: int | None = None,
) -> GibbsChain:
    """Sample the mixture posterior.

    Args:
        data: partial ordering dataset.
        G: number of components.
        hyper: prior; defaults to flat (shape 1, rate 0, alpha 1).
        init: optional dict with "p" (G x K positive supports) and "z"
            (N x G one-hot memberships or length-N 1-based labels); missing
            pieces are drawn uniformly. See init_from_map for seeding a
            chain at a MAP fit.
        n_iter: total sweeps; n_burn: sweeps discarded from the front.
        rng: numpy Generator, or an int seed (recorded on the chain).
        K: optional cross-check on the number of items.

    Returns:
        GibbsChain with n_iter - n_burn kept sweeps.
    """
    if G < 1:
        raise ValidationError("G must be >= 1")
    if K is not None and K != data.n_items:
        raise ValidationError(f"data has {data.n_items} items, not {K}")
    if n_iter < 1 or n_burn < 0 or n_burn >= n_iter:
        raise ValidationError("need n_iter >= 1 and 0 <= n_burn < n_iter")
    N, K = data.orderings.shape
    if hyper is None:
        hyper = Hyperparams.flat(G, K)
    if hyper.n_components != G or hyper.shape.shape[1] != K:
        raise ValidationError("hyper dimensions must match (G, K)")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    if rng is None or seed is not None:
        rng = np.random.default_rng(seed)

    p = None
    g_of_s = None
    if init is not None:
        if "p" in init and init["p"] is not None:
            p = np.array(init["p"], dtype=np.float64)
            if p.shape != (G, K) or (p <= 0).any() or not np.isfinite(p).all():
                raise ValidationError("init p must be G x K positive supports")
        if "z" in init and init["z"] is not None:
            z0 = np.asarray(init["z"])
            if z0.ndim == 2:
                ok = (
                    z0.shape == (N, G)
                    and np.isin(z0, (0, 1)).all()
                    and (z0.sum(axis=1) == 1).all()
                )
                if not ok:
                    raise ValidationError("init z must be one-hot N x G")
                g_of_s = np.argmax(z0, axis=1)
            else:
                lab = np.asarray(z0, dtype=np.int64)
                if lab.shape != (N,) or lab.min() < 1 or lab.max() > G:
                    raise ValidationError("init z labels must be 1..G, length N")
                g_of_s = lab - 1
    if p is None:
        p = rng.uniform(0.01, 1.0, (G, K))
    if g_of_s is None:
        g_of_s = rng.integers(0, G, size=N) if G > 1 else np.zeros(N, dtype=np.int64)
    w = np.full(G, 1.0 / G)

    # static index plumbing
    idx = np.where(data.stage_mask, data.item_idx, 0)
    mask = data.stage_mask
    rows_r, cols_r = np.nonzero(mask)
    items_r = data.item_idx[rows_r, cols_r]
    last = data.nranked - 1
    ar_n = np.arange(N)
    ar_k = np.arange(K)[None, :]
    u_f = data.u.astype(np.float64)
    # with every rate zero the posterior leaves the overall scale of the
    # supports free and the raw chain random-walks in it; the sweep kernel
    # commutes with a global rescaling then, so projecting the state back
    # to mean row total one between sweeps is exact, not an approximation
    free_scale = bool(np.all(hyper.rate == 0.0))

    L = n_iter - n_burn
    P_out = np.empty((L, G * K))
    W_out = np.empty((L, G))
    ll_out = np.empty(L)

    for sweep in range(1, n_iter + 1):
        if free_scale:
            p = p * (G / p.sum())

        # weights | memberships
        if G > 1:
            counts = np.bincount(g_of_s, minlength=G)
            w = rng.dirichlet(hyper.alpha + counts)

        # stage times | memberships, supports
        p_unit = p[g_of_s]
        sel = np.take_along_axis(p_unit, idx, axis=1)
        sel[~mask] = 0.0
        # remainders as suffix sums: exact at the late stages where a
        # running-difference form cancels to zero
        tail = np.maximum(p_unit.sum(axis=1) - sel.sum(axis=1), 0.0)
        rem_own = np.cumsum(sel[:, ::-1], axis=1)[:, ::-1] + tail[:, None]
        y = rng.standard_exponential((N, K)) / rem_own
        y[~mask] = 0.0

        # supports | times, memberships. Each unit adds, to its component's
        # rate for item i, the sum of its stage times while i was still
        # available: the prefix sum through the stage where i was chosen,
        # or the full sum when the unit never ranks i. Scattering those
        # prefix sums directly keeps the accumulation free of cancellation.
        cum_y = np.cumsum(y, axis=1)
        full_y = cum_y[ar_n, last]
        flat = g_of_s[rows_r] * K + items_r
        gamma_z = np.bincount(flat, minlength=G * K).reshape(G, K)
        contrib = np.repeat(full_y[:, None], K, axis=1)
        contrib[rows_r, items_r] = cum_y[rows_r, cols_r]
        cell = (g_of_s[:, None] * K + ar_k).ravel()
        shape = hyper.shape + gamma_z
        rate = hyper.rate[:, None] + np.bincount(
            cell, weights=contrib.ravel(), minlength=G * K
        ).reshape(G, K)
        bad = rate <= 0
        if bad.any():
            g_b, i_b = np.argwhere(bad)[0]
            raise NumericalError(
                f"degenerate support conditional at sweep {sweep}: rate "
                f"{rate[g_b, i_b]:.3g} for component {g_b + 1}, item {i_b + 1}"
            )
        p = np.maximum(rng.standard_gamma(shape) / rate, _TINY_SUPPORT)

        # memberships | weights, times, supports (and the log-likelihood,
        # which shares the per-component stage tables)
        log_p = np.log(p)
        tot = p.sum(axis=1)
        A = u_f @ log_p.T
        P_all = p.T[idx]
        P_all[~mask] = 0.0
        tails = np.maximum(tot[None, :] - P_all.sum(axis=1), 0.0)
        rem_all = (
            np.cumsum(P_all[:, ::-1, :], axis=1)[:, ::-1, :]
            + tails[:, None, :]
        )
        rem_all[~mask] = 1.0
        slr = np.log(rem_all).sum(axis=1)
        if G > 1:
            B = np.einsum("sk,skg->sg", y, rem_all)
            with np.errstate(divide="ignore"):
                log_w = np.log(w)
            log_m = log_w[None, :] + A - B
            g_of_s = np.argmax(log_m + rng.gumbel(size=(N, G)), axis=1)
            ll = float(logsumexp(log_w[None, :] + A - slr, axis=1).sum())
        else:
            ll = float((A[:, 0] - slr[:, 0]).sum())

        if sweep > n_burn:
            k = sweep - n_burn - 1
            P_out[k] = (p / p.sum(axis=1, keepdims=True)).reshape(-1)
            W_out[k] = w
            ll_out[k] = ll

    return GibbsChain(
        P=P_out,
        W=W_out,
        log_lik=ll_out,
        deviance=-2.0 * ll_out,
        n_iter=n_iter,
        n_burn=n_burn,
        seed=int(seed) if seed is not None else None,
    )
