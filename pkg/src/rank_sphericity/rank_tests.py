"""
High-dimensional rank tests for sphericity.

The Spearman-type (SR) and Kendall-type (SK) statistics are built from
leave-out U-statistics over ordered quadruples of distinct indices, so no
location estimate is needed and no bias term appears. Both are standardized
by the same null standard deviation, which depends only on n and p.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from statistics import NormalDist
from typing import Optional, Union

import numpy as np

from .errors import DegenerateInputError, InvalidInputError
from .sign_core import (
    ArrayLike,
    PairwiseSignSet,
    SampleMatrix,
    SignGram,
    _require_n,
    as_sample,
    pairwise_signs,
    sign_gram,
    spatial_sign,
)

__all__ = [
    "Method",
    "TestResult",
    "ShapeSpec",
    "tr_omega_sq_hat",
    "tr_xi_sq_hat",
    "sigma0",
    "sigma1",
    "spearman_test",
    "kendall_test",
    "john_statistic",
    "rank_tests",
    "analytic_power",
    "normal_cdf",
    "normal_sf",
    "z_alpha",
    "brute_force_tr_omega_sq",
    "brute_force_tr_xi_sq",
]

_SQRT2 = math.sqrt(2.0)


class Method(str, enum.Enum):
    SR = "SR"
    SK = "SK"
    JOHN = "JOHN"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise InvalidInputError(f"unknown method {value!r}; expected SR, SK or JOHN") from None


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test on one data matrix.

    ``sigma0``, ``z``, ``p_value`` and ``reject`` are None for the John
    statistic, which carries no high-dimensional calibration, and for SR/SK
    at p = 1 where the null standard deviation is zero.
    """

    __test__ = False  # not a pytest class

    method: Method
    statistic: float
    n: int
    p: int
    sigma0: Optional[float] = None
    z: Optional[float] = None
    p_value: Optional[float] = None
    alpha: Optional[float] = None
    reject: Optional[bool] = None
    tie_count: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d


@dataclass(frozen=True)
class ShapeSpec:
    """Traces of the shape matrix ``Lambda = I + Delta`` (with tr Lambda = p)."""

    tr_D2: float
    tr_L2: float
    tr_L4: float
    p: int

    def __post_init__(self):
        if self.p < 1:
            raise InvalidInputError(f"p must be >= 1, got {self.p}")
        vals = (self.tr_D2, self.tr_L2, self.tr_L4)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("shape traces must be finite")
        tol = 1e-10 * max(1.0, abs(self.tr_L2), abs(self.tr_L4))
        if self.tr_D2 < -tol:
            raise InvalidInputError(f"tr_D2 must be >= 0, got {self.tr_D2}")
        if abs(self.tr_L2 - (self.p + self.tr_D2)) > tol:
            raise InvalidInputError("shape violates tr_L2 = p + tr_D2")
        if self.tr_L4 < self.tr_L2**2 / self.p - tol:
            raise InvalidInputError("shape violates tr_L4 >= tr_L2^2 / p")

    @classmethod
    def null(cls, p: int) -> "ShapeSpec":
        return cls(tr_D2=0.0, tr_L2=float(p), tr_L4=float(p), p=p)


# ---------------------------------------------------------------------------
# normal distribution helpers


def normal_cdf(z: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-z / _SQRT2)


def normal_sf(z: float) -> float:
    """Upper tail ``1 - Phi(z)``, computed without cancellation."""
    return 0.5 * math.erfc(z / _SQRT2)


def z_alpha(alpha: float) -> float:
    """Upper alpha quantile of the standard normal."""
    _check_alpha(alpha)
    return NormalDist().inv_cdf(1.0 - alpha)


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")


# ---------------------------------------------------------------------------
# leave-out quadruple estimators


def _set_partitions(items):
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[head]] + part
        for b in range(len(part)):
            yield part[:b] + [[head] + part[b]] + part[b + 1 :]


def _partition_plan(letters="ijkl"):
    """Einsum diagonals and Moebius weights for the partitions of 4 indices.

    Summing ``weight * sum(diagonal)`` over all 15 partitions gives the sum
    over tuples whose indices are pairwise distinct.
    """
    plan = []
    for part in _set_partitions(list(letters)):
        rep = {c: block[0] for block in part for c in block}
        spec_in = "".join(rep[c] for c in letters)
        spec_out = "".join(sorted(set(spec_in), key=letters.index))
        weight = 1
        for block in part:
            weight *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
        plan.append((f"{spec_in}->{spec_out}", weight))
    return tuple(plan)


_PLAN = _partition_plan()


def _fsum_rows(a: np.ndarray) -> float:
    # Pairwise numpy sums along the last axis, then a correctly rounded total.
    a = a.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.reshape(1, -1)
    return math.fsum(a.sum(axis=1).tolist())


def _distinct_sum(terms: np.ndarray) -> float:
    """Sum of ``terms[i, j, k, l]`` over quadruples of distinct indices."""
    n = terms.shape[0]
    total = []
    for spec, weight in _PLAN:
        if spec == "ijkl->ijkl":
            s = _fsum_rows(terms.reshape(n * n, n * n))
        else:
            s = _fsum_rows(np.einsum(spec, terms))
        total.append(weight * s)
    return math.fsum(total)


def _as_gram(obj) -> SignGram:
    if isinstance(obj, SignGram):
        return obj
    if isinstance(obj, PairwiseSignSet):
        return sign_gram(obj)
    return sign_gram(pairwise_signs(as_sample(obj)))


def tr_omega_sq_hat(S: Union[PairwiseSignSet, SignGram, ArrayLike]) -> float:
    """Leave-out estimator of ``tr(Omega_p^2)``.

    Averages ``(U_ij . U_kl)(U_kj . U_il)`` over ordered quadruples of
    distinct indices, with an extra factor 1/2.
    """
    G = _as_gram(S)
    _require_n(G.n, 4, "tr_omega_sq_hat")
    n = G.n
    T = G.tensor()
    terms = T * T.transpose(2, 1, 0, 3)
    return _distinct_sum(terms) / (2.0 * n * (n - 1) * (n - 2) * (n - 3))


def tr_xi_sq_hat(S: Union[PairwiseSignSet, SignGram, ArrayLike]) -> float:
    """Leave-out estimator of ``tr(Xi_p^2)``: mean of ``(U_ij . U_kl)^2``."""
    G = _as_gram(S)
    _require_n(G.n, 4, "tr_xi_sq_hat")
    n = G.n
    T = G.tensor()
    return _distinct_sum(T * T) / (n * (n - 1) * (n - 2) * (n - 3))


def _naive_sign_table(X: ArrayLike, what: str) -> tuple[np.ndarray, int]:
    # Signs for every ordered pair, each one computed from the raw rows.
    S = as_sample(X)
    _require_n(S.n, 4, what)
    x, n = S.data, S.n
    table = np.zeros((n, n, S.p))
    for i in range(n):
        for j in range(n):
            if i != j:
                table[i, j] = spatial_sign(x[i] - x[j])
    return table, n


def brute_force_tr_omega_sq(X: ArrayLike) -> float:
    """Reference value of :func:`tr_omega_sq_hat` by four nested loops.

    Independent of the Gram machinery; intended for n <= 14.
    """
    u, n = _naive_sign_table(X, "brute_force_tr_omega_sq")
    terms = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    if len({i, j, k, l}) < 4:
                        continue
                    a = float(u[i, j] @ u[k, l])
                    b = float(u[k, j] @ u[i, l])
                    terms.append(a * b)
    return math.fsum(terms) / (2.0 * n * (n - 1) * (n - 2) * (n - 3))


def brute_force_tr_xi_sq(X: ArrayLike) -> float:
    """Reference value of :func:`tr_xi_sq_hat` by four nested loops."""
    u, n = _naive_sign_table(X, "brute_force_tr_xi_sq")
    terms = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    if len({i, j, k, l}) < 4:
                        continue
                    d = float(u[i, j] @ u[k, l])
                    terms.append(d * d)
    return math.fsum(terms) / (n * (n - 1) * (n - 2) * (n - 3))


# ---------------------------------------------------------------------------
# variances and power


def sigma0(n: int, p: int) -> float:
    """Null standard deviation of SR and SK: sqrt(4(p-1) / (n(n-1)(p+2)))."""
    if n < 2 or p < 1:
        raise InvalidInputError(f"sigma0 needs n >= 2 and p >= 1, got n={n}, p={p}")
    return math.sqrt(4.0 * (p - 1) / (n * (n - 1) * (p + 2)))


def sigma1(n: int, shape: ShapeSpec) -> float:
    """Standard deviation of SR/SK under the alternative ``Lambda = I + Delta``."""
    p = shape.p
    s0sq = sigma0(n, p) ** 2
    d2 = shape.tr_D2
    spike = (8.0 * p * d2 + 4.0 * d2 * d2) / (n * n * p * p)
    # Nonnegative by Cauchy-Schwarz; clip round-off.
    spread = max(shape.tr_L4 - shape.tr_L2**2 / p, 0.0)
    return math.sqrt(s0sq + spike + 8.0 * spread / (n * p * p))


def analytic_power(n: int, shape: ShapeSpec, alpha: float = 0.05) -> float:
    """Asymptotic power of the one-sided SR (or SK) test at level alpha."""
    za = z_alpha(alpha)
    s0 = sigma0(n, shape.p)
    s1 = sigma1(n, shape)
    if s1 == 0.0:
        raise DegenerateInputError("power is undefined when sigma1 = 0 (p = 1 null shape)")
    return normal_cdf(-(s0 / s1) * za + (shape.tr_D2 / shape.p) / s1)


# ---------------------------------------------------------------------------
# tests


def _finish(method: Method, stat: float, n: int, p: int, alpha: float, ties: int) -> TestResult:
    s0 = sigma0(n, p)
    if s0 == 0.0:
        return TestResult(method, stat, n, p, sigma0=s0, alpha=alpha, tie_count=ties)
    z = stat / s0
    return TestResult(
        method,
        stat,
        n,
        p,
        sigma0=s0,
        z=z,
        p_value=normal_sf(z),
        alpha=alpha,
        reject=bool(z > z_alpha(alpha)),
        tie_count=ties,
    )


def _prepare(X: ArrayLike, alpha: float, what: str):
    _check_alpha(alpha)
    S = as_sample(X)
    _require_n(S.n, 4, what)
    signs = pairwise_signs(S)
    return S, signs, sign_gram(signs)


def spearman_test(X: ArrayLike, alpha: float = 0.05) -> TestResult:
    """Spearman's rho-type test: ``4 p tr_omega_sq_hat - 1``, one-sided."""
    S, signs, G = _prepare(X, alpha, "spearman_test")
    stat = 4.0 * S.p * tr_omega_sq_hat(G) - 1.0
    return _finish(Method.SR, stat, S.n, S.p, alpha, signs.tie_count)


def kendall_test(X: ArrayLike, alpha: float = 0.05) -> TestResult:
    """Kendall's tau-type test: ``p tr_xi_sq_hat - 1``, one-sided."""
    S, signs, G = _prepare(X, alpha, "kendall_test")
    stat = S.p * tr_xi_sq_hat(G) - 1.0
    return _finish(Method.SK, stat, S.n, S.p, alpha, signs.tie_count)


def john_statistic(X: ArrayLike) -> TestResult:
    """John's statistic ``(n p^2 / 2) tr(S / tr S - I / p)^2``.

    S is the sample covariance (divisor n - 1); the statistic does not
    depend on the divisor.
    """
    M = as_sample(X)
    _require_n(M.n, 2, "john_statistic")
    n, p = M.n, M.p
    cov = np.atleast_2d(np.cov(M.data, rowvar=False))
    tr = float(np.trace(cov))
    if not tr > 0.0:
        raise DegenerateInputError("sample covariance has zero trace (constant data)")
    dev = cov / tr - np.eye(p) / p
    stat = 0.5 * n * p * p * float(np.sum(dev * dev))
    return TestResult(Method.JOHN, stat, n, p)


def rank_tests(X: ArrayLike, alpha: float = 0.05, methods=("SR", "SK")) -> dict:
    """Run several tests on X, sharing the sign Gram between SR and SK.

    Returns a dict mapping :class:`Method` to :class:`TestResult`, in the
    order given by ``methods``.
    """
    methods = [Method.parse(m) for m in methods]
    _check_alpha(alpha)
    S = as_sample(X)
    out = {}
    G = signs = None
    if Method.SR in methods or Method.SK in methods:
        S, signs, G = _prepare(S, alpha, "rank tests")
    for m in methods:
        if m is Method.SR:
            stat = 4.0 * S.p * tr_omega_sq_hat(G) - 1.0
            out[m] = _finish(m, stat, S.n, S.p, alpha, signs.tie_count)
        elif m is Method.SK:
            stat = S.p * tr_xi_sq_hat(G) - 1.0
            out[m] = _finish(m, stat, S.n, S.p, alpha, signs.tie_count)
        else:
            out[m] = john_statistic(S)
    return out
