"""Centralized eigenvalue machinery.

Everything here is a pure function of its arguments: sample covariance,
unnormalized power iteration, Lanczos tridiagonalization without
reorthogonalization, symmetric-tridiagonal eigenvalues by Sturm-count
bisection, a cyclic Jacobi solver used as the dense Hermitian oracle, and
post-processing of Ritz lists (spurious-value filtering).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EigenSolution",
    "TridiagonalMatrix",
    "PowerIterationResult",
    "sample_covariance",
    "power_method",
    "lanczos",
    "tridiagonal_eigenvalues",
    "tridiagonal_eigenvalues_batch",
    "dense_hermitian_eig",
    "filter_spurious",
    "cullum_willoughby_spurious",
]

# Pivot guard for Sturm sequences: near-zero pivots are replaced by a tiny
# value of the same sign (exact zeros count as positive).
_PIVOT_FLOOR = 1e-300


@dataclass(frozen=True)
class EigenSolution:
    """Eigenvalues sorted descending, with optional orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray | None = field(default=None, compare=False)


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored as diagonal and off-diagonal arrays.

    ``alpha`` has the M diagonal entries, ``beta`` the M-1 off-diagonal ones.
    ``invariant_subspace`` marks a Lanczos run that terminated early because
    an off-diagonal coefficient vanished (an exact invariant subspace).
    """

    alpha: np.ndarray
    beta: np.ndarray
    invariant_subspace: bool = False

    def __post_init__(self) -> None:
        if self.alpha.ndim != 1 or self.beta.ndim != 1:
            raise ValueError("alpha and beta must be one-dimensional")
        if len(self.beta) != max(len(self.alpha) - 1, 0):
            raise ValueError("beta must have one entry fewer than alpha")
        if len(self.beta) and np.min(self.beta) < 0:
            raise ValueError("off-diagonal entries must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.alpha)

    def inf_norm(self) -> float:
        if self.size == 0:
            return 0.0
        b = np.concatenate(([0.0], np.abs(self.beta), [0.0]))
        return float(np.max(np.abs(self.alpha) + b[:-1] + b[1:]))

    def dense(self) -> np.ndarray:
        t = np.diag(self.alpha)
        if len(self.beta):
            t += np.diag(self.beta, 1) + np.diag(self.beta, -1)
        return t


@dataclass(frozen=True)
class PowerIterationResult:
    """Unnormalized power-iteration output.

    ``vector`` is the final iterate up to the positive factor exp(log_scale);
    rescaling only happens when the iterate magnitude exceeds the overflow
    guard, and it never affects the Rayleigh quotient ``value``.
    """

    vector: np.ndarray
    value: float
    log_scale: float = 0.0


def sample_covariance(y: np.ndarray) -> np.ndarray:
    """Sample covariance (1/N) Y Y^H of a K x N sample matrix."""
    y = np.asarray(y)
    if y.ndim != 2:
        raise ValueError("sample matrix must be two-dimensional")
    if not np.all(np.isfinite(y.view(float) if y.dtype.kind == "c" else y)):
        raise ValueError("sample matrix has non-finite entries")
    n = y.shape[1]
    return (y @ y.conj().T) / n


def power_method(
    r: np.ndarray,
    v0: np.ndarray,
    m_iterations: int,
    *,
    overflow_limit: float = 1e150,
) -> PowerIterationResult:
    """Unnormalized power iteration v <- R v with a tracked overflow guard.

    Returns the final iterate and the Rayleigh quotient estimate of the
    largest eigenvalue. If the iterate norm passes ``overflow_limit`` it is
    renormalized internally and the accumulated positive factor is reported
    through ``log_scale``.
    """
    r = np.asarray(r)
    v = np.asarray(v0, dtype=complex).copy()
    if m_iterations < 1:
        raise ValueError("power method needs at least one iteration")
    if not np.any(v != 0):
        raise ValueError("starting vector must be nonzero")
    log_scale = 0.0
    for _ in range(m_iterations):
        v = r @ v
        nv = float(np.linalg.norm(v))
        if nv > overflow_limit:
            v /= nv
            log_scale += math.log(nv)
    denom = float(np.real(np.vdot(v, v)))
    if denom == 0.0:
        raise ValueError("power iterate collapsed to zero")
    value = float(np.real(np.vdot(v, r @ v)) / denom)
    return PowerIterationResult(vector=v, value=value, log_scale=log_scale)


def lanczos(
    r: np.ndarray,
    v1: np.ndarray,
    m_iterations: int,
    *,
    breakdown_tol: float | None = None,
) -> TridiagonalMatrix:
    """Lanczos tridiagonalization of a Hermitian matrix, no reorthogonalization.

    Iterates alpha_j = v_j^H R v_j, w_j = R v_j - alpha_j v_j - beta_j v_{j-1},
    beta_{j+1} = ||w_j||, v_{j+1} = w_j / beta_{j+1}, starting from a unit
    vector with beta_1 = 0. A beta below the breakdown guard (default
    1e-12 ||R||_F) truncates the output at the current size and flags an
    exact invariant subspace.
    """
    r = np.asarray(r)
    k = r.shape[0]
    v = np.asarray(v1, dtype=complex).copy()
    if not (1 <= m_iterations <= k):
        raise ValueError("iteration count must be between 1 and K")
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("starting vector must have unit norm")
    scale = float(np.linalg.norm(r))
    eps_break = breakdown_tol if breakdown_tol is not None else 1e-12 * scale
    alphas: list[float] = []
    betas: list[float] = []
    v_prev = np.zeros(k, dtype=complex)
    beta = 0.0
    for j in range(1, m_iterations + 1):
        u = r @ v
        alpha = float(np.real(np.vdot(v, u)))
        alphas.append(alpha)
        if j == m_iterations:
            break
        w = u - alpha * v - beta * v_prev
        beta_next = float(np.linalg.norm(w))
        if beta_next < eps_break:
            return TridiagonalMatrix(
                np.array(alphas), np.array(betas), invariant_subspace=True
            )
        betas.append(beta_next)
        v_prev = v
        v = w / beta_next
        beta = beta_next
    return TridiagonalMatrix(np.array(alphas), np.array(betas))


def _sturm_counts(alpha: np.ndarray, beta_sq: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Number of eigenvalues strictly below each shift in ``x``.

    ``alpha`` is (S, m), ``beta_sq`` is (S, m-1), ``x`` is (S, T); the count
    is computed for every (matrix, shift) pair at once.
    """
    m = alpha.shape[1]
    q = alpha[:, 0:1] - x
    q = np.where(np.abs(q) < _PIVOT_FLOOR, np.where(q < 0, -_PIVOT_FLOOR, _PIVOT_FLOOR), q)
    count = (q < 0).astype(np.int64)
    for i in range(1, m):
        q = (alpha[:, i : i + 1] - x) - beta_sq[:, i - 1 : i] / q
        q = np.where(
            np.abs(q) < _PIVOT_FLOOR, np.where(q < 0, -_PIVOT_FLOOR, _PIVOT_FLOOR), q
        )
        count += q < 0
    return count


def tridiagonal_eigenvalues_batch(
    alpha: np.ndarray, beta: np.ndarray, *, tol: np.ndarray | float | None = None
) -> np.ndarray:
    """Eigenvalues (descending) of a stack of symmetric tridiagonal matrices.

    Sturm-count bisection inside per-matrix Gershgorin brackets. ``alpha`` is
    (S, m) and ``beta`` (S, m-1); the default absolute tolerance is
    1e-10 (1 + ||T||_inf) per matrix.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    s, m = alpha.shape
    beta = np.asarray(beta, dtype=float).reshape(s, max(m - 1, 0))
    pad = np.zeros((s, 1))
    babs = np.abs(beta)
    radius = np.hstack([babs, pad]) + np.hstack([pad, babs])
    lo0 = (alpha - radius).min(axis=1)
    hi0 = (alpha + radius).max(axis=1)
    if tol is None:
        inf_norm = (np.abs(alpha) + radius).max(axis=1)
        tol = 1e-10 * (1.0 + inf_norm)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (s,))
    # Inflate brackets so the Sturm counts at the endpoints are 0 and m.
    lo0 = lo0 - tol
    hi0 = hi0 + tol
    span = float(np.max((hi0 - lo0) / tol))
    steps = min(max(int(math.ceil(math.log2(max(span, 2.0)))) + 1, 2), 128)
    lo = np.repeat(lo0[:, None], m, axis=1)
    hi = np.repeat(hi0[:, None], m, axis=1)
    want = np.arange(1, m + 1)[None, :]
    beta_sq = beta**2
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        enough = _sturm_counts(alpha, beta_sq, mid) >= want
        hi = np.where(enough, mid, hi)
        lo = np.where(enough, lo, mid)
    vals = 0.5 * (lo + hi)
    return vals[:, ::-1]


def tridiagonal_eigenvalues(t: TridiagonalMatrix, *, tol: float | None = None) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, sorted descending."""
    if t.size == 0:
        return np.zeros(0)
    if tol is None:
        tol = 1e-10 * (1.0 + t.inf_norm())
    return tridiagonal_eigenvalues_batch(
        t.alpha[None, :], t.beta[None, :], tol=np.array([tol])
    )[0]


def _hermitian_deviation(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - a.conj().T))


def dense_hermitian_eig(
    r: np.ndarray, *, tol: float = 1e-12, max_sweeps: int = 100
) -> EigenSolution:
    """Full Hermitian eigendecomposition by cyclic Jacobi rotations.

    Sweeps rotate every off-diagonal pair until the off-diagonal Frobenius
    norm drops below ``tol * ||R||_F``. Returns descending eigenvalues (stable
    order on ties) and orthonormal eigenvectors as columns.
    """
    a = np.asarray(r, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("input must be a square matrix")
    n = a.shape[0]
    scale = float(np.linalg.norm(a))
    if _hermitian_deviation(a) > 1e-12 * max(scale, 1.0):
        raise ValueError("input must be Hermitian")
    a = (a + a.conj().T) / 2.0
    vecs = np.eye(n, dtype=complex)
    if n == 1 or scale == 0.0:
        values = np.real(np.diag(a)).copy()
        order = np.argsort(-values, kind="stable")
        return EigenSolution(values[order], vecs[:, order])

    def off_norm(mat: np.ndarray) -> float:
        o = mat - np.diag(np.diag(mat))
        return float(np.linalg.norm(o))

    skip = tol * scale / (n * n)
    for _ in range(max_sweeps):
        if off_norm(a) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                # Factor out the phase so the 2x2 block becomes real symmetric,
                # then apply the classic symmetric Schur rotation. The full
                # unitary on the (p, q) plane is
                #   U = [[c, sigma], [-sigma * e^{-i phi}, c * e^{-i phi}]]
                # with phi = arg(a_pq).
                phase = apq / abs(apq)
                pconj = np.conj(phase)
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * abs(apq))
                if tau >= 0:
                    tparam = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    tparam = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + tparam * tparam)
                sigma = tparam * c
                col_p = a[:, p] * c - a[:, q] * (sigma * pconj)
                col_q = a[:, p] * sigma + a[:, q] * (c * pconj)
                a[:, p] = col_p
                a[:, q] = col_q
                row_p = a[p, :] * c - a[q, :] * (sigma * phase)
                row_q = a[p, :] * sigma + a[q, :] * (c * phase)
                a[p, :] = row_p
                a[q, :] = row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vcol_p = vecs[:, p] * c - vecs[:, q] * (sigma * pconj)
                vcol_q = vecs[:, p] * sigma + vecs[:, q] * (c * pconj)
                vecs[:, p] = vcol_p
                vecs[:, q] = vcol_q
    else:
        raise RuntimeError("Jacobi sweeps did not converge")
    values = np.real(np.diag(a)).copy()
    order = np.argsort(-values, kind="stable")
    return EigenSolution(values[order], vecs[:, order])


def filter_spurious(
    current: np.ndarray,
    previous: np.ndarray | None,
    k: int,
    n: int,
    tol: float,
    *,
    iteration: int | None = None,
) -> np.ndarray:
    """Drop spurious Ritz values from an iteration-j list.

    Two criteria, applied in order:

    1. Rank criterion: the covariance matrix has exactly min(K, N) nonzero
       eigenvalues, so past iteration min(K, N) a value absent (within
       ``tol``) from the previous iteration's list is spurious.
    2. Duplicate collapse: values within ``tol`` of the last kept value are
       merged into it (the largest of each cluster survives).

    ``iteration`` defaults to the length of ``current``.
    """
    cur = np.sort(np.asarray(current, dtype=float))[::-1]
    j = iteration if iteration is not None else len(cur)
    if j > min(k, n) and previous is not None and len(cur):
        prev = np.asarray(previous, dtype=float)
        if len(prev):
            seen = np.min(np.abs(cur[:, None] - prev[None, :]), axis=1) <= tol
        else:
            seen = np.zeros(len(cur), dtype=bool)
        cur = cur[seen]
    kept: list[float] = []
    for value in cur:
        if not kept or kept[-1] - value > tol:
            kept.append(float(value))
    return np.array(kept)


def cullum_willoughby_spurious(t: TridiagonalMatrix, tol: float) -> np.ndarray:
    """Boolean mask of Ritz values flagged spurious by first-row/column deletion.

    Compares the spectrum of T against the spectrum of T with its first row
    and column removed; a simple Ritz value that reappears in the reduced
    spectrum (within ``tol``) is flagged. Disabled by default in the
    decentralized pipeline; exposed for experimentation.
    """
    values = tridiagonal_eigenvalues(t)
    if t.size < 2:
        return np.zeros(t.size, dtype=bool)
    reduced = TridiagonalMatrix(t.alpha[1:], t.beta[1:])
    reduced_vals = tridiagonal_eigenvalues(reduced)
    flags = np.zeros(len(values), dtype=bool)
    for i, v in enumerate(values):
        simple = np.sum(np.abs(values - v) <= tol) == 1
        if simple and np.min(np.abs(reduced_vals - v)) <= tol:
            flags[i] = True
    return flags
