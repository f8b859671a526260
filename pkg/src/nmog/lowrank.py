"""Gaussian posteriors over the factor rows of ``L = U V^T`` with ARD column precisions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise_model import DivergenceError, Hyperparams


@dataclass
class FactorState:
    """Row-wise Gaussian posteriors of ``U`` (``N x R``) and ``V`` (``B x R``).

    ``U_cov`` and ``V_cov`` hold one ``R x R`` covariance per row.
    """

    U_mean: np.ndarray
    U_cov: np.ndarray
    V_mean: np.ndarray
    V_cov: np.ndarray

    @property
    def active_rank(self) -> int:
        return self.U_mean.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.U_mean @ self.V_mean.T

    def second_moments(self, side: str) -> np.ndarray:
        """``<x x^T> = mean mean^T + cov`` for every row of one side, shape ``(rows, R, R)``."""
        mean, cov = (self.U_mean, self.U_cov) if side == "U" else (self.V_mean, self.V_cov)
        return mean[:, :, None] * mean[:, None, :] + cov

    def residual_moments(self, Y):
        """Mean and variance of ``Y_ij - u_i v_j^T`` under ``q(U) q(V)``.

        The variance is ``u S_v u^T + v S_u v^T + tr(S_u S_v)`` expanded as
        ``<u u^T> : S_v + S_u : v v^T``.
        """
        Y = getattr(Y, "values", Y)
        n, r = self.U_mean.shape
        b = self.V_mean.shape[0]
        euu = self.second_moments("U").reshape(n, r * r)
        vv = (self.V_mean[:, :, None] * self.V_mean[:, None, :]).reshape(b, r * r)
        x_var = euu @ self.V_cov.reshape(b, r * r).T + self.U_cov.reshape(n, r * r) @ vv.T
        np.maximum(x_var, 0.0, out=x_var)
        return Y - self.reconstruction(), x_var

    def column_energy(self) -> np.ndarray:
        """``sum_i <u_il^2> + sum_j <v_jl^2>`` for every column ``l``."""
        eu = (self.U_mean**2).sum(axis=0) + np.einsum("ill->l", self.U_cov)
        ev = (self.V_mean**2).sum(axis=0) + np.einsum("ill->l", self.V_cov)
        return eu + ev

    def keep_columns(self, keep) -> "FactorState":
        keep = np.asarray(keep)
        return FactorState(
            U_mean=self.U_mean[:, keep],
            U_cov=self.U_cov[:, keep][:, :, keep],
            V_mean=self.V_mean[:, keep],
            V_cov=self.V_cov[:, keep][:, :, keep],
        )


@dataclass
class ArdPosterior:
    xi: np.ndarray
    delta: np.ndarray

    @property
    def gamma_mean(self) -> np.ndarray:
        return self.xi / self.delta


def init_factors(Y, rank: int, cov_scale: float = 1e-2) -> FactorState:
    """Warm start from the rank-``rank`` truncated SVD with ``S^(1/2)`` split evenly."""
    Y = getattr(Y, "values", Y)
    n, b = Y.shape
    if not 1 <= rank <= min(n, b):
        raise ValueError(f"rank must lie in [1, {min(n, b)}], got {rank}")
    u, s, vt = np.linalg.svd(Y, full_matrices=False)
    root = np.sqrt(s[:rank])
    eye = np.eye(rank) * cov_scale
    return FactorState(
        U_mean=u[:, :rank] * root,
        U_cov=np.broadcast_to(eye, (n, rank, rank)).copy(),
        V_mean=vt[:rank].T * root,
        V_cov=np.broadcast_to(eye, (b, rank, rank)).copy(),
    )


def _solve_rows(A, rhs):
    """Batched SPD solve returning ``(A^-1 rhs, A^-1)``.

    On a failed factorization the offending systems get ``1e-10 * trace / R``
    added to their diagonal and are retried once.
    """
    rank = A.shape[-1]
    eye = np.eye(rank)
    try:
        chol = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(A, axis1=1, axis2=2) / rank
        A = A + jitter[:, None, None] * eye
        try:
            chol = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError("factor system matrix is not positive definite") from exc
    # A^-1 = L^-T L^-1
    linv = np.linalg.solve(chol, np.broadcast_to(eye, A.shape))
    cov = np.swapaxes(linv, 1, 2) @ linv
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    mean = np.einsum("nab,nb->na", cov, rhs)
    return mean, cov


def noise_weights(Y, r, mix):
    """Per-cell precision weights ``w_ij = sum_k r_ijk <tau_jk>`` and targets
    ``h_ij = sum_k r_ijk <tau_jk> (Y_ij - <mu_jk>)``."""
    Y = getattr(Y, "values", Y)
    rt = r * mix.tau_mean
    w = rt.sum(axis=2)
    h = Y * w - np.einsum("ijk,jk->ij", rt, mix.m)
    return w, h


def update_factor_rows(Y, r, mix, ard: ArdPosterior, factors: FactorState, side: str) -> FactorState:
    """Closed-form Gaussian update of every row of ``U`` (``side="U"``) or ``V``.

    The opposite side is held fixed.  Returns a new :class:`FactorState`.
    """
    if side not in ("U", "V"):
        raise ValueError(f"side must be 'U' or 'V', got {side!r}")
    w, h = noise_weights(Y, r, mix)
    rank = factors.active_rank
    prior = np.diag(ard.gamma_mean)
    if side == "U":
        other = factors.second_moments("V").reshape(-1, rank * rank)
        A = (w @ other).reshape(-1, rank, rank) + prior
        rhs = h @ factors.V_mean
        mean, cov = _solve_rows(A, rhs)
        return FactorState(mean, cov, factors.V_mean, factors.V_cov)
    other = factors.second_moments("U").reshape(-1, rank * rank)
    A = (w.T @ other).reshape(-1, rank, rank) + prior
    rhs = h.T @ factors.U_mean
    mean, cov = _solve_rows(A, rhs)
    return FactorState(factors.U_mean, factors.U_cov, mean, cov)


def update_ard(factors: FactorState, h: Hyperparams) -> ArdPosterior:
    """Gamma posterior of the column precisions.

    Column ``l`` of ``U`` has ``N`` entries and of ``V`` has ``B``, so the shape
    grows by ``(N + B) / 2``.
    """
    n = factors.U_mean.shape[0]
    b = factors.V_mean.shape[0]
    rank = factors.active_rank
    xi = np.full(rank, h.xi0 + 0.5 * (n + b))
    delta = h.delta0 + 0.5 * factors.column_energy()
    return ArdPosterior(xi=xi, delta=delta)


def determination(factors: FactorState) -> np.ndarray:
    """Share of each column's expected energy carried by the posterior mean.

    Near 1 for columns the data pins down, near 0 for columns that have
    collapsed onto their zero-mean prior.
    """
    mean_energy = (factors.U_mean**2).sum(axis=0) + (factors.V_mean**2).sum(axis=0)
    return mean_energy / factors.column_energy()


def prune_rank(factors: FactorState, ard: ArdPosterior, threshold_ratio: float = 1e4, min_determination: float = 0.0):
    """Drop columns whose ``<gamma_l>`` exceeds ``threshold_ratio * min <gamma>``.

    With ``min_determination > 0`` columns whose :func:`determination` falls
    below it are dropped as well.  The column with the smallest expected
    precision is always kept.  Returns the pruned ``(factors, ard)`` pair.
    """
    gamma = ard.gamma_mean
    drop = gamma > threshold_ratio * gamma.min()
    if min_determination > 0:
        drop |= determination(factors) < min_determination
    drop[np.argmin(gamma)] = False
    if not drop.any():
        return factors, ard
    keep = np.flatnonzero(~drop)
    return factors.keep_columns(keep), ArdPosterior(ard.xi[keep], ard.delta[keep])
