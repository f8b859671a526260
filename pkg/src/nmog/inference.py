"""Coordinate-ascent variational inference for the NMoG-LRMF model.

One sweep updates, in order: responsibilities and mixing weights, the
Normal-Gamma component posteriors, the global rate, the rows of ``U`` then
``V``, and finally the ARD precisions.

From iteration ``PRUNE_START`` on, columns flagged by the ARD rules are
tentatively removed at the start of an iteration.  The pruned model is swept
and kept only if its bound is no lower than the bound before the iteration,
so the recorded bound never decreases.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from . import lowrank, noise_model
from .hsi_data import Cube, ObservationMatrix, band_ranges, cube_to_matrix, matrix_to_cube
from .lowrank import ArdPosterior, FactorState
from .noise_model import (
    LOG_2PI,
    DivergenceError,
    GlobalScalePosterior,
    Hyperparams,
    NoiseState,
)

logger = logging.getLogger(__name__)

PRUNE_START = 5


@dataclass(frozen=True)
class InferenceConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    elbo_check: bool = True
    prune_ratio: float = 1e4
    prune_determination: float = 0.5

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.prune_ratio > 0:
            raise ValueError("prune_ratio must be > 0")


@dataclass
class InferenceReport:
    iterations_run: int
    final_rank: int
    elbo_trace: list
    converged: bool
    bands: list
    seconds: float
    rank_trace: list = field(default_factory=list)
    diverged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations_run,
            "final_rank": self.final_rank,
            "elbo": self.elbo_trace,
            "converged": self.converged,
            "seconds": self.seconds,
            "bands": self.bands,
            "rank_trace": self.rank_trace,
            "diverged": self.diverged,
            "message": self.message,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _gamma_entropy(shape, rate):
    return shape - np.log(rate) + gammaln(shape) + (1.0 - shape) * digamma(shape)


def _gamma_log_prior(shape0, rate0, e_x, e_log_x):
    return shape0 * np.log(rate0) - gammaln(shape0) + (shape0 - 1.0) * e_log_x - rate0 * e_x


def _logdet_spd(cov):
    return 2.0 * np.log(np.diagonal(np.linalg.cholesky(cov), axis1=1, axis2=2)).sum(axis=1)


def compute_elbo(Y, factors: FactorState, noise: NoiseState, ard: ArdPosterior, hyper: Hyperparams) -> float:
    """Evidence lower bound ``<ln p(Y, theta)> - <ln q(theta)>`` of the factorized posterior."""
    Y = getattr(Y, "values", Y)
    n, b = Y.shape
    k = noise.r.shape[2]
    h = hyper
    r = noise.r
    mix = noise.mix
    g = noise.scale

    tau = mix.tau_mean
    log_tau = mix.log_tau_mean
    log_pi = mix.log_pi_mean
    d_mean, log_d = g.mean, g.log_mean

    x_mean, x_var = factors.residual_moments(Y)
    quad = noise_model.expected_sq_error(x_mean, x_var, mix)

    # likelihood and q(Z) terms
    lik = np.sum(r * (0.5 * log_tau - 0.5 * LOG_2PI - 0.5 * quad + log_pi))
    safe_r = np.where(r > 0, r, 1.0)
    ent_z = -np.sum(r * np.log(safe_r))

    # Dirichlet prior and entropy
    p_pi = b * (gammaln(k * h.alpha0) - k * gammaln(h.alpha0)) + (h.alpha0 - 1.0) * log_pi.sum()
    a_sum = mix.alpha.sum(axis=1)
    ent_pi = np.sum(
        gammaln(mix.alpha).sum(axis=1)
        - gammaln(a_sum)
        + (a_sum - k) * digamma(a_sum)
        - ((mix.alpha - 1.0) * digamma(mix.alpha)).sum(axis=1)
    )

    # Normal-Gamma prior (with <ln d>, <d>) and entropy
    p_ng = np.sum(
        0.5 * (np.log(h.beta0) - LOG_2PI)
        + 0.5 * log_tau
        - 0.5 * h.beta0 * (1.0 / mix.beta + tau * (mix.m - h.m0) ** 2)
        + h.c0 * log_d
        - gammaln(h.c0)
        + (h.c0 - 1.0) * log_tau
        - d_mean * tau
    )
    ent_ng = np.sum(
        0.5 * (1.0 + LOG_2PI) - 0.5 * np.log(mix.beta) - 0.5 * log_tau + _gamma_entropy(mix.c, mix.d)
    )

    p_d = _gamma_log_prior(h.eta0, h.lambda0, d_mean, log_d)
    ent_d = _gamma_entropy(g.eta, g.lam)

    # factors under the ARD prior
    gamma = ard.gamma_mean
    log_gamma = digamma(ard.xi) - np.log(ard.delta)
    p_uv = np.sum((n + b) * 0.5 * (log_gamma - LOG_2PI) - 0.5 * gamma * factors.column_energy())
    rank = factors.active_rank
    ent_uv = 0.5 * (n + b) * rank * (1.0 + LOG_2PI) + 0.5 * (
        _logdet_spd(factors.U_cov).sum() + _logdet_spd(factors.V_cov).sum()
    )
    p_gamma = np.sum(_gamma_log_prior(h.xi0, h.delta0, gamma, log_gamma))
    ent_gamma = np.sum(_gamma_entropy(ard.xi, ard.delta))

    total = (
        lik + ent_z + p_pi + ent_pi + p_ng + ent_ng + p_d + ent_d + p_uv + ent_uv + p_gamma + ent_gamma
    )
    total = float(total)
    if not np.isfinite(total):
        raise DivergenceError("non-finite evidence lower bound")
    return total


def band_offsets(noise: NoiseState) -> np.ndarray:
    """Mean of each band's dominant noise component, length ``B``.

    The bound is nearly flat along ``(U V^T + 1 a^T, mu - a)`` whenever the
    all-ones vector lies in the span of ``U``, and the ARD prior drifts signal
    mass into the component means.  The dominant component models the
    background noise, so its mean is attributed back to the signal.
    """
    mix = noise.mix
    dom = np.argmax(mix.pi_mean, axis=1)
    return mix.m[np.arange(mix.m.shape[0]), dom]


def clean_estimate(factors: FactorState, noise: NoiseState) -> np.ndarray:
    """``E[U] E[V]^T`` plus the per-band offsets of :func:`band_offsets`."""
    return factors.reconstruction() + band_offsets(noise)


@dataclass
class _State:
    factors: FactorState
    noise: NoiseState
    ard: ArdPosterior


def initialize(Y, cfg: InferenceConfig) -> _State:
    """Starting posteriors: SVD factors, random responsibilities, prior-scale ``q(d)``."""
    Y = getattr(Y, "values", Y)
    h = cfg.hyper
    n, b = Y.shape
    rng = np.random.default_rng(cfg.seed)
    factors = lowrank.init_factors(Y, min(h.R, n, b))
    r = noise_model.init_responsibilities(n, b, h.K, rng)
    alpha = noise_model.update_mixing(r, h)
    prior_scale = GlobalScalePosterior(eta=h.eta0, lam=h.lambda0)
    mix = noise_model.update_normal_gamma(Y, r, factors, prior_scale, h, alpha=alpha)
    scale = noise_model.update_global_scale(mix, h)
    ard = lowrank.update_ard(factors, h)
    return _State(factors, NoiseState(r=r, mix=mix, scale=scale), ard)


def sweep(Y, state: _State, h: Hyperparams) -> _State:
    """One full pass of the coordinate updates (pruning excluded)."""
    factors, ard = state.factors, state.ard
    r = noise_model.update_responsibilities(Y, state.noise.mix, factors)
    alpha = noise_model.update_mixing(r, h)
    mix = noise_model.update_normal_gamma(Y, r, factors, state.noise.scale, h, alpha=alpha)
    scale = noise_model.update_global_scale(mix, h)
    factors = lowrank.update_factor_rows(Y, r, mix, ard, factors, "U")
    factors = lowrank.update_factor_rows(Y, r, mix, ard, factors, "V")
    ard = lowrank.update_ard(factors, h)
    return _State(factors, NoiseState(r=r, mix=mix, scale=scale), ard)


def prune_candidates(state: _State, cfg: InferenceConfig):
    """Candidate pruned states, most aggressive first.

    The first drops every column :func:`lowrank.prune_rank` flags; if several
    are flagged, the second drops only the least determined of them.
    """
    factors, ard = state.factors, state.ard
    gamma = ard.gamma_mean
    flagged = gamma > cfg.prune_ratio * gamma.min()
    if cfg.prune_determination > 0:
        flagged |= lowrank.determination(factors) < cfg.prune_determination
    flagged[np.argmin(gamma)] = False
    cols = np.flatnonzero(flagged)
    if cols.size == 0:
        return []
    weakest = cols[np.argmin(lowrank.determination(factors)[cols])]
    drops = [cols] if cols.size == 1 else [cols, np.array([weakest])]
    out = []
    for drop in drops:
        keep = np.setdiff1d(np.arange(factors.active_rank), drop)
        out.append(_State(factors.keep_columns(keep), state.noise, ArdPosterior(ard.xi[keep], ard.delta[keep])))
    return out


def step(Y, state: _State, cfg: InferenceConfig, prev_elbo=None, allow_prune=True):
    """One iteration with optional bound-guarded pruning.

    A pruned candidate is swept and kept only if its bound is at least the
    bound of ``state``; otherwise ``state`` itself is swept.  Coordinate
    ascent then keeps the bound non-decreasing across iterations.
    Returns ``(new_state, elbo)`` where ``elbo`` may be ``None`` if it was not
    needed and ``cfg.elbo_check`` is off.
    """
    h = cfg.hyper
    if allow_prune:
        candidates = prune_candidates(state, cfg)
        if candidates:
            if prev_elbo is None:
                prev_elbo = compute_elbo(Y, state.factors, state.noise, state.ard, h)
            for cand in candidates:
                trial = sweep(Y, cand, h)
                if not _finite(trial):
                    continue
                e_trial = compute_elbo(Y, trial.factors, trial.noise, trial.ard, h)
                if e_trial >= prev_elbo:
                    return trial, e_trial
    new = sweep(Y, state, h)
    elbo = compute_elbo(Y, new.factors, new.noise, new.ard, h) if cfg.elbo_check and _finite(new) else None
    return new, elbo


def _finite(state: _State) -> bool:
    arrays = (
        state.factors.U_mean,
        state.factors.V_mean,
        state.noise.mix.m,
        state.noise.mix.d,
        state.ard.delta,
    )
    return all(np.all(np.isfinite(a)) for a in arrays)


def run(Y, cfg: InferenceConfig, callback=None):
    """Fit the model to an ``N x B`` observation matrix.

    ``callback(iteration, factors, noise, ard)`` is invoked after every sweep.
    Returns ``(factors, noise, report)``; see :func:`clean_estimate` for the
    recovered signal.  A :class:`DivergenceError` carries the last
    finite ``(factors, noise, report)`` in its ``state`` attribute.
    """
    Y = np.asarray(getattr(Y, "values", Y), dtype=np.float64)
    n, b = Y.shape
    if n < 2 or b < 2:
        raise ValueError(f"need at least 2 pixels and 2 bands, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("observation matrix contains non-finite values")
    h = cfg.hyper
    if h.R > min(n, b):
        logger.info("rank bound %d exceeds min(N, B) = %d; clipped", h.R, min(n, b))

    start = time.perf_counter()
    state = initialize(Y, cfg)
    elbo_trace = []
    rank_trace = []
    converged = False
    recon = clean_estimate(state.factors, state.noise)
    iterations = 0

    def report(diverged=False, message=""):
        return InferenceReport(
            iterations_run=iterations,
            final_rank=state.factors.active_rank,
            elbo_trace=elbo_trace,
            converged=converged,
            bands=noise_model.band_summaries(state.noise.mix),
            seconds=time.perf_counter() - start,
            rank_trace=rank_trace,
            diverged=diverged,
            message=message,
        )

    for it in range(1, cfg.max_iters + 1):
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                prev = elbo_trace[-1] if elbo_trace else None
                new, elbo = step(Y, state, cfg, prev_elbo=prev, allow_prune=it >= PRUNE_START)
                if not _finite(new):
                    raise DivergenceError("non-finite posterior parameters")
        except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
            msg = f"diverged at iteration {it}: {exc}"
            logger.error(msg)
            err = DivergenceError(msg)
            err.state = (state.factors, state.noise, report(diverged=True, message=msg))
            raise err from exc

        state = new
        iterations = it
        if cfg.elbo_check:
            elbo_trace.append(elbo)
        rank_trace.append(state.factors.active_rank)
        if callback is not None:
            callback(it, state.factors, state.noise, state.ard)

        new_recon = clean_estimate(state.factors, state.noise)
        denom = np.linalg.norm(recon)
        change = np.linalg.norm(new_recon - recon) / (denom if denom > 0 else 1.0)
        recon = new_recon
        logger.debug("iter %d rank %d change %.3e elbo %s", it, state.factors.active_rank, change, elbo)
        # a flagged column must get its chance to be pruned before stopping
        if change < cfg.tol and (it >= PRUNE_START or not prune_candidates(state, cfg)):
            converged = True
            break

    return state.factors, state.noise, report()


def denoise(cube: Cube, cfg: InferenceConfig, normalize: bool = True):
    """Denoise a cube; returns ``(clean_cube, report)``.

    With ``normalize`` every band is mapped to [0, 1] before inference and the
    reconstruction is mapped back through the inverse affine map, so the
    output lives on the input's intensity scale.  The result is clipped to
    [0, 1].
    """
    data = cube.data
    if normalize:
        lo, hi = band_ranges(cube)
        span = np.where(hi > lo, hi - lo, 1.0)
        work = Cube((data - lo) / span)
    else:
        work = cube
    Y = cube_to_matrix(work)
    factors, noise, report = run(Y, cfg)
    L = matrix_to_cube(ObservationMatrix(clean_estimate(factors, noise)), cube.rows, cube.cols).data
    if normalize:
        L = L * span + lo
    return Cube(np.clip(L, 0.0, 1.0)), report
