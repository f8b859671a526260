"""Variational posteriors of the per-band mixture-of-Gaussians noise.

Every band ``j`` carries its own ``K``-component mixture.  Component means and
precisions share a Normal-Gamma prior whose rate ``d`` is itself Gamma
distributed, which couples the bands.  The updates below are the closed-form
mean-field optima for

* ``q(z_ij)``                categorical responsibilities,
* ``q(pi_j)``                Dirichlet mixing weights,
* ``q(mu_jk, tau_jk)``       Normal-Gamma component parameters,
* ``q(d)``                   Gamma global rate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
D_FLOOR = 1e-12


class DivergenceError(FloatingPointError):
    """Raised when an update produces non-finite values."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Hyperparams:
    """Prior constants and model sizes.

    The defaults are the non-informative settings: ``m0 = 0`` and every other
    scale/shape constant ``1e-3``.
    """

    K: int = 3
    R: int = 20
    m0: float = 0.0
    beta0: float = 1e-3
    c0: float = 1e-3
    eta0: float = 1e-3
    lambda0: float = 1e-3
    xi0: float = 1e-3
    delta0: float = 1e-3
    alpha0: float = 1e-3

    def __post_init__(self):
        if self.K < 1 or self.R < 1:
            raise ValueError(f"K and R must be >= 1, got K={self.K}, R={self.R}")
        for name in ("beta0", "c0", "eta0", "lambda0", "xi0", "delta0", "alpha0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class BandMixturePosterior:
    """Per-band, per-component posterior parameters, each of shape ``(B, K)``."""

    alpha: np.ndarray
    m: np.ndarray
    beta: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def tau_mean(self) -> np.ndarray:
        return self.c / self.d

    @property
    def log_tau_mean(self) -> np.ndarray:
        return digamma(self.c) - np.log(self.d)

    @property
    def log_pi_mean(self) -> np.ndarray:
        return digamma(self.alpha) - digamma(self.alpha.sum(axis=1, keepdims=True))

    @property
    def pi_mean(self) -> np.ndarray:
        return self.alpha / self.alpha.sum(axis=1, keepdims=True)


@dataclass
class GlobalScalePosterior:
    eta: float
    lam: float

    @property
    def mean(self) -> float:
        return self.eta / self.lam

    @property
    def log_mean(self) -> float:
        return float(digamma(self.eta) - np.log(self.lam))


@dataclass
class NoiseState:
    """Responsibilities ``r`` of shape ``(N, B, K)`` plus the mixture posteriors."""

    r: np.ndarray
    mix: BandMixturePosterior
    scale: GlobalScalePosterior
    flags: list = field(default_factory=list)


def init_responsibilities(n, b, k, rng) -> np.ndarray:
    """Symmetric Dirichlet(1) draws for every cell ``(i, j)``."""
    if k == 1:
        return np.ones((n, b, 1))
    return rng.dirichlet(np.ones(k), size=(n, b))


def expected_sq_error(x_mean, x_var, mix: BandMixturePosterior) -> np.ndarray:
    """``<tau_jk (x_ij - mu_jk)^2>`` for a residual with mean ``x_mean`` and variance ``x_var``.

    Returns an ``(N, B, K)`` array.  Under the Normal-Gamma posterior
    ``<tau (x - mu)^2> = <tau> ((<x> - m)^2 + var x) + 1/beta``.
    """
    dev = x_mean[:, :, None] - mix.m
    return mix.tau_mean * (dev * dev + x_var[:, :, None]) + 1.0 / mix.beta


def log_rho(x_mean, x_var, mix: BandMixturePosterior) -> np.ndarray:
    return (
        mix.log_pi_mean
        - 0.5 * LOG_2PI
        + 0.5 * mix.log_tau_mean
        - 0.5 * expected_sq_error(x_mean, x_var, mix)
    )


def normalize_log_responsibilities(logp: np.ndarray) -> np.ndarray:
    """Log-sum-exp normalization over the last axis."""
    if not np.all(np.isfinite(logp)):
        raise DivergenceError("non-finite log responsibilities")
    shift = logp.max(axis=-1, keepdims=True)
    w = np.exp(logp - shift)
    total = w.sum(axis=-1, keepdims=True)
    # after the shift total >= 1; kept as a guard for exotic inputs
    tiny = total < 1e-300
    r = w / np.where(tiny, 1.0, total)
    if np.any(tiny):
        r = np.where(tiny, 1.0 / logp.shape[-1], r)
    return r


def update_responsibilities(Y, mix: BandMixturePosterior, factors) -> np.ndarray:
    """Closed-form ``q(Z)``: returns responsibilities of shape ``(N, B, K)``."""
    x_mean, x_var = factors.residual_moments(Y)
    return normalize_log_responsibilities(log_rho(x_mean, x_var, mix))


def update_mixing(r: np.ndarray, h: Hyperparams) -> np.ndarray:
    """Dirichlet concentrations ``alpha_jk = alpha0 + sum_i r_ijk``."""
    return h.alpha0 + r.sum(axis=0)


def normal_gamma_posterior(r, x_mean, x_var, d_mean, h: Hyperparams, alpha=None):
    """Normal-Gamma update from residual moments of shape ``(N, B)``.

    With ``s1 = sum_i r <x>`` and ``s2 = sum_i r <x^2>`` the rate is
    ``<d> + (s2 + beta0 m0^2 - beta m^2) / 2``; it is evaluated in the
    equivalent centred form ``sum_i r ((<x> - m)^2 + var x) + beta0 (m - m0)^2``
    to avoid cancellation when residuals are small.
    """
    counts = r.sum(axis=0)
    s1 = np.einsum("ijk,ij->jk", r, x_mean)
    beta = h.beta0 + counts
    c = h.c0 + 0.5 * counts
    m = (h.beta0 * h.m0 + s1) / beta
    dev = x_mean[:, :, None] - m
    spread = np.einsum("ijk,ijk->jk", r, dev * dev) + np.einsum("ijk,ij->jk", r, x_var)
    d = d_mean + 0.5 * (spread + h.beta0 * (m - h.m0) ** 2)
    bad = ~(d > D_FLOOR)
    if np.any(bad):
        warnings.warn(
            f"Normal-Gamma rate fell below {D_FLOOR:g} in {int(bad.sum())} cell(s); clamped",
            RuntimeWarning,
            stacklevel=3,
        )
        d = np.where(bad, D_FLOOR, d)
    if alpha is None:
        alpha = np.full_like(beta, np.nan)
    return BandMixturePosterior(alpha=alpha, m=m, beta=beta, c=c, d=d)


def update_normal_gamma(Y, r, factors, g: GlobalScalePosterior, h: Hyperparams, alpha=None):
    """Closed-form ``q(mu, tau)`` for all bands and components.

    ``alpha`` is carried into the returned posterior unchanged so that the
    result is a complete :class:`BandMixturePosterior`.
    """
    x_mean, x_var = factors.residual_moments(Y)
    return normal_gamma_posterior(r, x_mean, x_var, g.mean, h, alpha=alpha)


def update_global_scale(mix: BandMixturePosterior, h: Hyperparams) -> GlobalScalePosterior:
    b, k = mix.c.shape
    eta = h.eta0 + h.c0 * k * b
    lam = h.lambda0 + float(mix.tau_mean.sum())
    return GlobalScalePosterior(eta=eta, lam=lam)


def band_summaries(mix: BandMixturePosterior) -> list[dict]:
    """Per-band mixing weights, means and expected precisions."""
    pi = mix.pi_mean
    tau = mix.tau_mean
    return [
        {"band": j, "pi": pi[j].tolist(), "m": mix.m[j].tolist(), "tau": tau[j].tolist()}
        for j in range(pi.shape[0])
    ]


def permute_components(mix: BandMixturePosterior, perm) -> BandMixturePosterior:
    return replace(
        mix,
        alpha=mix.alpha[:, perm],
        m=mix.m[:, perm],
        beta=mix.beta[:, perm],
        c=mix.c[:, perm],
        d=mix.d[:, perm],
    )
