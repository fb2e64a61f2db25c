"""
Spatial-sign primitives.

Pairwise spatial signs ``U(X_i - X_j)``, the Gram matrix of all their inner
products, the spatial-rank and Kendall's tau covariance matrices, and the
Gamma-function ratio that governs the limiting trace of the spatial-rank
covariance under sphericity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import InsufficientSampleError, InvalidInputError

__all__ = [
    "SampleMatrix",
    "PairwiseSignSet",
    "SignGram",
    "TIE_NORM",
    "as_sample",
    "spatial_sign",
    "pairwise_signs",
    "sign_gram",
    "rank_cov",
    "kendall_cov",
    "tau_f_ratio",
]

# Difference vectors shorter than this are ties (zero sign).
TIE_NORM = 1e-300


@dataclass(frozen=True)
class SampleMatrix:
    """An n x p data matrix with observations in rows.

    The array is copied, converted to float64 and made read-only.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise InvalidInputError(f"expected a 2-d array, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise InvalidInputError("dimension p must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("data contain NaN or infinite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


ArrayLike = Union[SampleMatrix, np.ndarray, list]


def as_sample(X: ArrayLike) -> SampleMatrix:
    if isinstance(X, SampleMatrix):
        return X
    return SampleMatrix(X)


def _require_n(n: int, minimum: int, what: str) -> None:
    if n < minimum:
        raise InsufficientSampleError(n, minimum, what)


def _normalize_rows(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each row of D to unit length; rows below TIE_NORM become zero.

    Rows are pre-scaled by their max-abs entry so tiny but nonzero
    differences do not underflow when squared.
    """
    scale = np.max(np.abs(D), axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    Ds = D / safe[:, None]
    inner = np.sqrt(np.einsum("ij,ij->i", Ds, Ds))
    tied = (scale * inner < TIE_NORM) | (scale == 0)
    denom = np.where(tied, 1.0, inner)
    out = Ds / denom[:, None]
    out[tied] = 0.0
    return out, tied


def spatial_sign(x) -> np.ndarray:
    """Return ``x / ||x||``, or the zero vector when ``x`` is zero.

    >>> spatial_sign([3.0, 4.0])
    array([0.6, 0.8])
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("spatial_sign input contains NaN or infinite entries")
    out, _ = _normalize_rows(x[None, :])
    return out[0]


@lru_cache(maxsize=64)
def _pair_tables(n: int):
    """Index tables for the i<j pair layout.

    Returns ``(iu, ju, idx, sgn)`` where ``iu, ju`` enumerate pairs i<j in
    row-major order, ``idx[i, j]`` is the stored row for the unordered pair
    and ``sgn[i, j]`` is +1 for i<j, -1 for i>j and 0 on the diagonal.
    """
    iu, ju = np.triu_indices(n, 1)
    idx = np.zeros((n, n), dtype=np.intp)
    idx[iu, ju] = np.arange(iu.size)
    idx[ju, iu] = np.arange(iu.size)
    sgn = np.zeros((n, n))
    sgn[iu, ju] = 1.0
    sgn[ju, iu] = -1.0
    for a in (iu, ju, idx, sgn):
        a.setflags(write=False)
    return iu, ju, idx, sgn


@dataclass(frozen=True)
class PairwiseSignSet:
    """Spatial signs ``U_ij = U(X_i - X_j)`` for all pairs.

    Only the rows with i<j are stored (``upper``, ordered as
    ``numpy.triu_indices(n, 1)``); ``U_ji`` is produced by negation and
    ``U_ii`` is the zero vector.
    """

    upper: np.ndarray
    n: int
    p: int
    tie_count: int = 0

    def __getitem__(self, pair) -> np.ndarray:
        i, j = pair
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"pair {pair} out of range for n = {self.n}")
        if i == j:
            return np.zeros(self.p)
        _, _, idx, _ = _pair_tables(self.n)
        row = self.upper[idx[i, j]]
        return row.copy() if i < j else -row

    def dense(self) -> np.ndarray:
        """Return the full (n, n, p) array with ``out[i, j] = U_ij``."""
        _, _, idx, sgn = _pair_tables(self.n)
        return sgn[:, :, None] * self.upper[idx]


def pairwise_signs(X: ArrayLike) -> PairwiseSignSet:
    """Compute the spatial sign of every pairwise difference ``X_i - X_j``."""
    S = as_sample(X)
    _require_n(S.n, 2, "pairwise spatial signs")
    iu, ju, _, _ = _pair_tables(S.n)
    upper, tied = _normalize_rows(S.data[iu] - S.data[ju])
    upper.setflags(write=False)
    return PairwiseSignSet(upper=upper, n=S.n, p=S.p, tie_count=int(tied.sum()))


@dataclass(frozen=True)
class SignGram:
    """Inner products between all pairwise spatial signs.

    ``upper_gram[a, b]`` holds ``U_a . U_b`` for stored (i<j) pairs. The
    ordered-pair Gram and the four-index tensor are expanded from it using
    antisymmetry, so every sign-flipped entry is an exact negation.
    """

    upper_gram: np.ndarray
    n: int
    _tensor: np.ndarray = field(default=None, repr=False, compare=False)

    def tensor(self) -> np.ndarray:
        """Return the (n, n, n, n) array ``T[i, j, k, l] = U_ij . U_kl``."""
        if self._tensor is None:
            n = self.n
            _, _, idx, sgn = _pair_tables(n)
            flat = idx.ravel()
            s = sgn.ravel()
            g = np.take(np.take(self.upper_gram, flat, axis=0), flat, axis=1)
            g *= s[:, None]
            g *= s[None, :]
            g = g.reshape(n, n, n, n)
            g.setflags(write=False)
            object.__setattr__(self, "_tensor", g)
        return self._tensor

    @property
    def ordered_pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(self.n) if i != j]

    @property
    def pair_index(self) -> dict[tuple[int, int], int]:
        return {pair: r for r, pair in enumerate(self.ordered_pairs)}

    @property
    def gram(self) -> np.ndarray:
        """The m x m Gram over the m = n(n-1) ordered pairs (i, j), i != j."""
        flat = self.tensor().reshape(self.n * self.n, self.n * self.n)
        off = ~np.eye(self.n, dtype=bool).ravel()
        return flat[np.ix_(off, off)]

    def entry(self, ij, kl) -> float:
        return float(self.tensor()[ij[0], ij[1], kl[0], kl[1]])


def sign_gram(S: PairwiseSignSet) -> SignGram:
    """Materialize all inner products ``U_ij . U_kl`` with one matrix product."""
    G = S.upper @ S.upper.T
    # BLAS may leave the product asymmetric at round-off level.
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return SignGram(upper_gram=G, n=S.n)


def rank_cov(X: ArrayLike) -> np.ndarray:
    """Sample spatial-rank covariance ``(1/n) sum_i R_i R_i^T``.

    ``R_i = (1/n) sum_j U_ij`` is the sample spatial rank of observation i
    (the j = i term is zero).
    """
    S = as_sample(X)
    _require_n(S.n, 2, "rank_cov")
    signs = pairwise_signs(S)
    R = signs.dense().sum(axis=1) / S.n
    omega = R.T @ R / S.n
    return 0.5 * (omega + omega.T)


def kendall_cov(X: ArrayLike) -> np.ndarray:
    """Kendall's tau covariance ``2/(n(n-1)) sum_{i<j} U_ij U_ij^T``."""
    S = as_sample(X)
    _require_n(S.n, 2, "kendall_cov")
    U = pairwise_signs(S).upper
    xi = U.T @ U * (2.0 / (S.n * (S.n - 1)))
    return 0.5 * (xi + xi.T)


def tau_f_ratio(p: int) -> float:
    """Gamma ratio ``Gamma((p+1)/2)^2 / (Gamma(p/2) Gamma((p+2)/2))``.

    Evaluated through log-Gamma; tends to 1 as p grows, which is what drives
    the trace of the null spatial-rank covariance to 1/2.
    """
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise InvalidInputError(f"p must be a positive integer, got {p!r}")
    p = int(p)
    log_ratio = 2.0 * math.lgamma((p + 1) / 2) - math.lgamma(p / 2) - math.lgamma(p / 2 + 1)
    return math.exp(log_ratio)
