"""l1-penalized sparse coding by cyclic coordinate descent.

Solves::

    min_c  (1 - beta) * ||x - D c||^2 + beta * ||c||_1

with no 1/2 or 1/n scaling, so ``beta`` lives in (0, 1).  Coordinate ``j``
is updated in closed form by soft-thresholding::

    c_j <- S_t(a_j' r_j / ||a_j||^2),    t = beta / (2 (1 - beta) ||a_j||^2)

where ``a_j`` is column ``j`` of ``D`` and ``r_j`` the residual with
coordinate ``j`` removed.

The sweep kernel exists twice: an explicit-loop version compiled by numba and
a numpy version used when numba is disabled (see :mod:`sgt._accel`).  Both
take the dictionary *transposed* (atoms as rows) so that atom access is
contiguous, and both accept a ``skip`` index so a sample matrix can be coded
against itself leave-one-out without copying.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._accel import njit, resolve_backend

__all__ = [
    "LassoConfig",
    "LassoError",
    "SparseCoefVector",
    "solve_lasso",
    "objective",
    "kkt_violation",
    "check_scale",
    "soft_threshold",
]


class LassoError(ValueError):
    """Invalid input to the sparse coder."""


@dataclass(frozen=True)
class LassoConfig:
    beta: float = 1e-3
    max_iters: int = 10_000
    tol: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise LassoError(f"beta must lie strictly inside (0, 1), got {self.beta}")
        if int(self.max_iters) < 1:
            raise LassoError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise LassoError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True, eq=False)
class SparseCoefVector:
    """Coefficients of one query over a dictionary.

    ``dictionary_indices[j]`` is the original sample index of atom ``j``
    (for leave-one-out coding the query's own index is absent).
    """

    values: np.ndarray
    dictionary_indices: np.ndarray
    converged: bool = True
    iterations: int = 0

    def __len__(self):
        return self.values.size

    def dense(self, n: int) -> np.ndarray:
        """Scatter into a length-``n`` vector indexed by original sample."""
        out = np.zeros(n)
        out[self.dictionary_indices] = self.values
        return out


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def objective(dictionary, query, c, beta) -> float:
    D = np.asarray(dictionary, dtype=np.float64)
    r = np.asarray(query, dtype=np.float64) - D @ np.asarray(c, dtype=np.float64)
    return float((1.0 - beta) * (r @ r) + beta * np.abs(c).sum())


def kkt_violation(dictionary, query, c, beta) -> float:
    """Largest violation of the subgradient optimality conditions at ``c``.

    For ``c_j != 0`` this is ``|2(1-beta) a_j'r - beta sign(c_j)|``; for
    ``c_j == 0`` it is ``max(0, |2(1-beta) a_j'r| - beta)``.
    """
    D = np.asarray(dictionary, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    g = 2.0 * (1.0 - beta) * (D.T @ (np.asarray(query, dtype=np.float64) - D @ c))
    active = c != 0
    viol = np.where(active, np.abs(g - beta * np.sign(c)), np.maximum(np.abs(g) - beta, 0.0))
    return float(viol.max()) if viol.size else 0.0


# ---------------------------------------------------------------------------
# kernels
#
# Plain cyclic sweeps crawl once the active atoms are nearly collinear, which
# is the normal situation for leave-one-out coding of clustered samples.  The
# sweep kernel therefore hands control back as soon as the sign pattern of
# ``c`` has survived a few sweeps unchanged; the driver then takes one
# feature-sign step (exact minimization over the current orthant face, with a
# line search over zero crossings) and resumes sweeping.  Sweeps add atoms,
# the feature-sign step prunes them; neither ever raises the objective.

CONVERGED, STABLE, EXHAUSTED = 0, 1, 2
STABLE_SWEEPS = 3


@njit(cache=True, nogil=True)
def _sweeps_loops(At, x, skip, beta, tol, max_sweeps, min_sweeps, c):
    m, d = At.shape
    half = beta / (2.0 * (1.0 - beta))
    two_a = 2.0 * (1.0 - beta)
    col_sq = np.zeros(m)
    for j in range(m):
        s = 0.0
        for k in range(d):
            s += At[j, k] * At[j, k]
        col_sq[j] = s
    r = x.copy()
    for j in range(m):
        if c[j] != 0.0:
            for k in range(d):
                r[k] -= c[j] * At[j, k]

    stable = 0
    for it in range(max_sweeps):
        max_delta = 0.0
        flipped = False
        for j in range(m):
            if j == skip or col_sq[j] == 0.0:
                continue
            rho = col_sq[j] * c[j]
            for k in range(d):
                rho += At[j, k] * r[k]
            if rho > half:
                new = (rho - half) / col_sq[j]
            elif rho < -half:
                new = (rho + half) / col_sq[j]
            else:
                new = 0.0
            delta = new - c[j]
            if delta != 0.0:
                if (new > 0.0) != (c[j] > 0.0) or (new < 0.0) != (c[j] < 0.0):
                    flipped = True
                for k in range(d):
                    r[k] -= delta * At[j, k]
                c[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta <= tol:
            worst = 0.0
            for j in range(m):
                if j == skip or col_sq[j] == 0.0:
                    continue
                g = 0.0
                for k in range(d):
                    g += At[j, k] * r[k]
                g *= two_a
                if c[j] > 0.0:
                    v = abs(g - beta)
                elif c[j] < 0.0:
                    v = abs(g + beta)
                else:
                    v = abs(g) - beta
                if v > worst:
                    worst = v
            if worst <= tol:
                return it + 1, CONVERGED
        stable = 0 if flipped else stable + 1
        if stable >= STABLE_SWEEPS and it + 1 >= min_sweeps:
            return it + 1, STABLE
    return max_sweeps, EXHAUSTED


def _sweeps_numpy(At, x, skip, beta, tol, max_sweeps, min_sweeps, c):
    m = At.shape[0]
    half = beta / (2.0 * (1.0 - beta))
    col_sq = np.einsum("ij,ij->i", At, At)
    live = col_sq > 0
    if 0 <= skip < m:
        live[skip] = False
    order = np.flatnonzero(live)
    r = x - At.T @ c
    stable = 0
    for it in range(max_sweeps):
        max_delta = 0.0
        flipped = False
        for j in order:
            a = At[j]
            rho = a @ r + col_sq[j] * c[j]
            new = np.sign(rho) * max(abs(rho) - half, 0.0) / col_sq[j]
            delta = new - c[j]
            if delta != 0.0:
                flipped = flipped or np.sign(new) != np.sign(c[j])
                r -= delta * a
                c[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta <= tol and _kkt(At[order], r, c[order], beta) <= tol:
            return it + 1, CONVERGED
        stable = 0 if flipped else stable + 1
        if stable >= STABLE_SWEEPS and it + 1 >= min_sweeps:
            return it + 1, STABLE
    return max_sweeps, EXHAUSTED


_SWEEPS = {"numba": _sweeps_loops, "numpy": _sweeps_numpy}


def _kkt(At, r, c, beta):
    g = 2.0 * (1.0 - beta) * (At @ r)
    viol = np.where(c != 0, np.abs(g - beta * np.sign(c)), np.abs(g) - beta)
    return viol.max() if viol.size else 0.0


def _scaled_objective(At, x, c, half):
    # objective / (1 - beta)
    r = x - At.T @ c
    return r @ r + 2.0 * half * np.abs(c).sum()


def _feature_sign_step(At, x, c, half):
    """Move ``c`` to the minimizer over its sign pattern, pruning atoms on the way.

    Modifies ``c`` in place.  Each pass either drops at least one atom or
    reaches the face optimum, so the loop is finite.
    """
    f_cur = _scaled_objective(At, x, c, half)
    while True:
        S = np.flatnonzero(c)
        if S.size == 0:
            return
        A = At[S]
        theta = np.sign(c[S])
        _, sv, vt = np.linalg.svd(A.T, full_matrices=True)
        rank = int(np.sum(sv > sv[0] * max(A.shape) * np.finfo(float).eps)) if sv.size else 0
        if rank < S.size:
            # the smooth part is flat along a null direction; slide until an atom hits zero
            v = vt[rank]
            if theta @ v > 0:
                v = -v
            shrinking = c[S] * v < 0
            if not np.any(shrinking):
                v = -v
                shrinking = c[S] * v < 0
            t = -c[S][shrinking] / v[shrinking]
            k = np.flatnonzero(shrinking)[np.argmin(t)]
            trial = c.copy()
            trial[S] += t.min() * v
            trial[S[k]] = 0.0
            trial[S[np.sign(trial[S]) != theta]] = 0.0
            f_new = _scaled_objective(At, x, trial, half)
            if f_new > f_cur:
                return
            c[:] = trial
            f_cur = f_new
            continue
        target = np.linalg.solve(A @ A.T, A @ x - half * theta)
        step = target - c[S]
        crossing = np.sign(target) != theta
        ts = [1.0]
        if np.any(crossing):
            ts.extend(np.clip(c[S][crossing] / -step[crossing], 0.0, 1.0))
        best_t, best_f, best = None, f_cur, None
        for t in ts:
            trial = c.copy()
            trial[S] = c[S] + t * step
            trial[S[np.sign(trial[S]) != theta]] = 0.0
            f = _scaled_objective(At, x, trial, half)
            if f < best_f:
                best_t, best_f, best = t, f, trial
        if best is None:
            return
        c[:] = best
        f_cur = best_f
        if best_t == 1.0 and not np.any(crossing):
            return


def check_scale(X, what: str = "column") -> None:
    """Reject columns whose squared norm overflows; the solver works with ``a'a``."""
    with np.errstate(over="ignore"):
        sq = np.einsum("ij,ij->j", X, X)
    bad = np.flatnonzero(~np.isfinite(sq))
    if bad.size:
        raise LassoError(f"{what} {bad[0]}: squared norm overflows float64; rescale the data")


def coordinate_descent(At, x, cfg: LassoConfig, skip=-1, c0=None, backend=None):
    """Minimize over atoms-as-rows ``At``; returns ``(c, sweeps, converged)``.

    Low-level entry point shared by :func:`solve_lasso` and graph
    construction.  ``skip`` excludes one atom (its coefficient stays 0).
    ``sweeps`` counts coordinate sweeps across all rounds.
    """
    sweeps_kernel = _SWEEPS[resolve_backend(backend)]
    At = np.ascontiguousarray(At, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    c = np.zeros(At.shape[0]) if c0 is None else np.array(c0, dtype=np.float64)
    beta, tol, max_iters = float(cfg.beta), float(cfg.tol), int(cfg.max_iters)
    half = beta / (2.0 * (1.0 - beta))
    live = np.ones(At.shape[0], dtype=bool)
    if 0 <= skip < At.shape[0]:
        live[skip] = False
    done = 0
    min_sweeps = STABLE_SWEEPS
    while done < max_iters:
        sweeps, status = sweeps_kernel(At, x, int(skip), beta, tol, max_iters - done, min_sweeps, c)
        done += int(sweeps)
        if not np.all(np.isfinite(c)):
            raise LassoError("coefficients became non-finite")
        if status == CONVERGED:
            return c, done, True
        if status == EXHAUSTED:
            break
        _feature_sign_step(At, x, c, half)
        if _kkt(At[live], x - At.T @ c, c[live], beta) <= tol:
            return c, done, True
        min_sweeps = max(STABLE_SWEEPS, done // 4)
    return c, done, False


def solve_lasso(dictionary, query, cfg: LassoConfig | None = None, backend=None) -> SparseCoefVector:
    """Sparse-code ``query`` over the columns of ``dictionary`` (d x m).

    Columns with zero norm get coefficient 0.  If ``cfg.max_iters`` sweeps
    pass without meeting ``cfg.tol`` the last iterate is returned with
    ``converged=False``; the objective never increases across sweeps, so it is
    also the best one seen.
    """
    cfg = cfg or LassoConfig()
    D = np.asarray(dictionary, dtype=np.float64)
    x = np.asarray(query, dtype=np.float64)
    if D.ndim != 2 or x.ndim != 1:
        raise LassoError("dictionary must be 2-D and query 1-D")
    if D.shape[1] < 1:
        raise LassoError("dictionary has no atoms")
    if D.shape[0] != x.size:
        raise LassoError(f"dimension mismatch: dictionary has {D.shape[0]} rows, query has {x.size}")
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(x))):
        raise LassoError("non-finite values in dictionary or query")
    check_scale(np.column_stack([D, x]))
    c, iters, ok = coordinate_descent(D.T, x, cfg, backend=backend)
    return SparseCoefVector(c, np.arange(D.shape[1]), ok, iters)
