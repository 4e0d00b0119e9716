"""SVD-based time-series augmentation by geodesic steps on the Stiefel manifold.

A series is reshaped into an ``m x n`` matrix (``m > n``), factored as
``U diag(s) V^T``, and both orthonormal factors are pushed along a random
geodesic of canonical length ``0.89 * pi * beta``.  Reassembling with the
original singular values gives an augmented series.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

INJECTIVITY_RADIUS = 0.89 * np.pi

PAD = "pad"
OVERLAP = "overlap"


@dataclass(frozen=True)
class PerturbationConfig:
    beta: float
    rng_seed: int = 0
    m: int = 150
    n: int = 100
    pad_or_overlap: str = PAD

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.m > self.n >= 1:
            raise ValueError(f"reshape needs m > n >= 1, got m={self.m}, n={self.n}")
        if self.pad_or_overlap not in (PAD, OVERLAP):
            raise ValueError(f"unknown reshape strategy {self.pad_or_overlap!r}")


@dataclass(frozen=True, eq=False)
class StiefelFactorization:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    m: int
    n: int
    p: int
    strategy: str = PAD


@dataclass(frozen=True, eq=False)
class ReshapeMap:
    """Column starts of each length-``m`` segment, so the reshape can be undone."""

    m: int
    n: int
    p: int
    strategy: str
    starts: np.ndarray

    def inverse(self, M: np.ndarray) -> np.ndarray:
        if self.strategy == PAD:
            return np.asarray(M).reshape(-1, order="F")[: self.p].copy()
        acc = np.zeros(self.p)
        cnt = np.zeros(self.p)
        for j, s0 in enumerate(self.starts):
            acc[s0:s0 + self.m] += M[:, j]
            cnt[s0:s0 + self.m] += 1
        return acc / cnt


def reshape_map(p: int, m: int, n: int, strategy: str = PAD) -> ReshapeMap:
    if not m > n >= 1:
        raise ValueError(f"reshape needs m > n >= 1, got m={m}, n={n}")
    if p > m * n:
        raise ValueError(f"series of length {p} does not fit a {m}x{n} matrix")
    if strategy == PAD:
        starts = np.arange(n) * m
    elif strategy == OVERLAP:
        if p < m:
            raise ValueError(f"overlap needs at least m={m} samples, got {p}")
        if n == 1:
            starts = np.array([0])
        else:
            starts = np.rint(np.arange(n) * (p - m) / (n - 1)).astype(int)
    else:
        raise ValueError(f"unknown reshape strategy {strategy!r}")
    return ReshapeMap(m, n, p, strategy, starts)


def reshape_to_matrix(series, m: int, n: int, strategy: str = PAD):
    """Column-major ``m x n`` matrix of ``series`` plus the map that inverts it.

    ``pad`` zero-fills the tail; ``overlap`` spreads ``n`` windows of length
    ``m`` evenly so consecutive columns share samples.
    """
    x = np.asarray(series, dtype=float).ravel()
    rm = reshape_map(x.size, m, n, strategy)
    if strategy == PAD:
        buf = np.zeros(m * n)
        buf[: x.size] = x
        M = buf.reshape((m, n), order="F")
    else:
        M = np.stack([x[s0:s0 + m] for s0 in rm.starts], axis=1)
    return M, rm


def factorize(series, m: int, n: int, strategy: str = PAD) -> StiefelFactorization:
    M, rm = reshape_to_matrix(series, m, n, strategy)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return StiefelFactorization(U, s, Vt.T, m, n, rm.p, strategy)


def _sym(X):
    return 0.5 * (X + X.T)


def sample_tangent(U: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Gaussian ambient draw projected onto the tangent space at ``U``."""
    Z = rng.standard_normal(U.shape)
    return Z - U @ _sym(U.T @ Z)


def canonical_norm(delta: np.ndarray, U: np.ndarray) -> float:
    """``sqrt(tr(D^T (I - U U^T / 2) D))``."""
    UtD = U.T @ delta
    val = np.sum(delta * delta) - 0.5 * np.sum(UtD * UtD)
    return float(np.sqrt(max(val, 0.0)))


def stiefel_exp(U: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Riemannian exponential ``Exp_U(delta)``.

    ``(U  D) expm([[U^T D, -D^T D], [I, U^T D]]) [I; 0] expm(-U^T D)``.
    """
    n = U.shape[1]
    A = U.T @ delta
    S = delta.T @ delta
    block = np.block([[A, -S], [np.eye(n), A]])
    E = expm(block)
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("matrix exponential did not converge")
    Y = np.hstack([U, delta]) @ E[:, :n]
    return Y @ expm(-A)


def perturb(U: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Step from ``U`` along a random unit-speed geodesic for ``0.89 * pi * beta``."""
    delta = sample_tangent(U, rng)
    norm = canonical_norm(delta, U)
    if beta == 0 or norm == 0:
        return U.copy()
    return stiefel_exp(U, (INJECTIVITY_RADIUS * beta / norm) * delta)


def augment(series, config: PerturbationConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """One synthetic series of the same length as ``series``.

    The U- and V-side tangent directions are drawn independently.
    """
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    M, rm = reshape_to_matrix(series, config.m, config.n, config.pad_or_overlap)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U2 = perturb(U, config.beta, rng)
    V2 = perturb(Vt.T, config.beta, rng)
    return rm.inverse((U2 * s) @ V2.T)
