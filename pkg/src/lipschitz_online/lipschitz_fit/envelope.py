"""Exact Lipschitz-constrained empirical risk minimization on anchored values.

The fitted values at the distinct sample contexts solve

    min_v  sum_t u(v_{c(t)}, y_t)   s.t.  |v_i - v_j| <= L ||x_i - x_j||

per output coordinate, and are extended off-sample by the midpoint of the
upper and lower Lipschitz envelopes, which keeps the budget ``L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import DegeneratePair, NoConvergence, ValidationError
from ..losses import LossFn

__all__ = [
    "LipschitzFn",
    "empirical_lipschitz",
    "mcshane_eval",
    "mcshane_fit",
    "random_lipschitz_fn",
]

VIOLATION_TOL = 1e-8
OBJECTIVE_TOL = 1e-10
MAX_SWEEPS = 100_000
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class LipschitzFn:
    """Anchors ``(x_i, v_i)`` with budget ``L``; callable on a batch of contexts."""

    points: np.ndarray  # (U, m_eff)
    values: np.ndarray  # (U, n_out)
    L: float
    clip: tuple[float, float] | None = (0.0, 1.0)

    @property
    def m_eff(self) -> int:
        return self.points.shape[1]

    @property
    def n_out(self) -> int:
        return self.values.shape[1]

    def __call__(self, X) -> np.ndarray:
        return mcshane_eval(self, X)

    def max_violation(self) -> float:
        """Largest excess ``|v_i - v_j| - L d_ij`` over anchor pairs and coordinates."""
        if len(self.points) < 2:
            return 0.0
        D = _pairwise(self.points, self.points)
        gaps = np.abs(self.values[:, None, :] - self.values[None, :, :])
        return float(np.max(gaps - self.L * D[:, :, None]))


def _pairwise(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def mcshane_eval(fn: LipschitzFn, X) -> np.ndarray:
    """Midpoint of the upper and lower ``L``-envelopes through the anchors, then clipped."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != fn.m_eff:
        X = X.reshape(-1, fn.m_eff) if fn.m_eff else np.empty((len(X), 0))
    out = np.empty((len(X), fn.n_out))
    for s in range(0, len(X), _CHUNK):
        D = fn.L * _pairwise(X[s : s + _CHUNK], fn.points)[:, :, None]
        upper = np.min(fn.values[None, :, :] + D, axis=1)
        lower = np.max(fn.values[None, :, :] - D, axis=1)
        out[s : s + _CHUNK] = 0.5 * (upper + lower)
    if fn.clip is not None:
        np.clip(out, fn.clip[0], fn.clip[1], out=out)
    return out[0] if single else out


@njit(cache=True)
def _dykstra(z, w, I, J, C, v, mu, max_sweeps, tol, obj_tol):  # pragma: no cover - compiled
    # weighted projection of z onto {v : |v_I - v_J| <= C}; one slab per pair.
    # (v, mu) is the full iteration state and is updated in place.
    P = I.shape[0]
    g = np.empty(P)
    for p in range(P):
        g[p] = 1.0 / w[I[p]] + 1.0 / w[J[p]]
    prev = np.inf
    viol = np.inf
    for sweep in range(max_sweeps):
        for p in range(P):
            i = I[p]
            j = J[p]
            s = v[i] - v[j] + mu[p] * g[p]
            if s > C[p]:
                th = (s - C[p]) / g[p]
            elif s < -C[p]:
                th = (s + C[p]) / g[p]
            else:
                th = 0.0
            step = mu[p] - th
            v[i] += step / w[i]
            v[j] -= step / w[j]
            mu[p] = th
        viol = 0.0
        for p in range(P):
            e = abs(v[I[p]] - v[J[p]]) - C[p]
            if e > viol:
                viol = e
        obj = 0.0
        for k in range(v.shape[0]):
            obj += w[k] * (v[k] - z[k]) ** 2
        if viol <= tol and abs(obj - prev) <= obj_tol:
            return sweep + 1, viol
        prev = obj
    return -1, viol


def _interior_point(z, w, I, J, C, tol=1e-10, max_iter=200):
    """Weighted projection onto the pairwise slabs by a primal-dual interior-point method.

    Solves ``min sum_k w_k (v_k - z_k)^2`` subject to ``+-(v_i - v_j) <= C_ij``
    with Mehrotra predictor-corrector steps.  Redundant or nearly dependent
    constraints do not slow it down, unlike cyclic projection.  Returns
    ``None`` if the residuals do not reach ``tol``; tighter targets push the
    slack scaling past what the Newton solve can resolve.
    """
    U, P = len(z), len(I)
    w = w / np.max(w)
    h = np.concatenate([C, C])
    sign = np.concatenate([np.ones(P), -np.ones(P)])
    II, JJ = np.concatenate([I, I]), np.concatenate([J, J])

    def G(v):
        return sign * (v[II] - v[JJ])

    def Gt(x):
        sx = sign * x
        return np.bincount(II, weights=sx, minlength=U) - np.bincount(JJ, weights=sx, minlength=U)

    # a constant vector is strictly feasible (distinct anchors have C > 0)
    v = np.full(U, float(np.average(z, weights=w)))
    s = h - G(v)
    lam = np.ones(2 * P)
    scale = 1.0 + float(np.max(np.abs(h)))
    for _ in range(max_iter):
        r_d = w * (v - z) + Gt(lam)
        r_p = G(v) + s - h
        mu = float(s @ lam) / (2 * P)
        if np.max(np.abs(r_p)) <= tol * scale and np.max(np.abs(r_d)) <= tol and mu <= tol:
            return v
        D = lam / s
        c = D[:P] + D[P:]
        M = np.zeros((U, U))
        np.add.at(M, (I, I), c)
        np.add.at(M, (J, J), c)
        np.add.at(M, (I, J), -c)
        np.add.at(M, (J, I), -c)
        M[np.diag_indices(U)] += w

        def step(r_c):
            dv = np.linalg.solve(M, -r_d - Gt(D * r_p - r_c / s))
            dlam = D * (G(dv) + r_p) - r_c / s
            ds = -(r_c + s * dlam) / lam
            return dv, ds, dlam

        def max_step(x, dx):
            neg = dx < 0
            return min(1.0, float(np.min(-x[neg] / dx[neg]))) if np.any(neg) else 1.0

        try:
            dv, ds, dlam = step(s * lam)
        except np.linalg.LinAlgError:
            return None
        a_aff = min(max_step(s, ds), max_step(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / (2 * P)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dv, ds, dlam = step(s * lam + ds * dlam - sigma * mu)
        alpha = 0.99 * min(max_step(s, ds), max_step(lam, dlam))
        v, s, lam = v + alpha * dv, s + alpha * ds, lam + alpha * dlam
    return None


def _project(z, w, I, J, C, max_sweeps):
    if len(I) == 0:
        return z.copy()
    v = z.copy()
    mu = np.zeros(len(I))
    first = min(1000, max_sweeps)
    sweeps, viol = _dykstra(z, w, I, J, C, v, mu, first, VIOLATION_TOL, OBJECTIVE_TOL)
    if sweeps >= 0:
        return v
    # cyclic projection stalls on degenerate constraint sets; finish by interior point
    ipm = _interior_point(z, w, I, J, C)
    if ipm is not None and np.max(np.abs(ipm[I] - ipm[J]) - C) <= VIOLATION_TOL:
        return ipm
    sweeps, viol = _dykstra(z, w, I, J, C, v, mu, max_sweeps - first, VIOLATION_TOL, OBJECTIVE_TOL)
    if sweeps >= 0:
        return v
    raise NoConvergence(f"Dykstra projection: violation {viol:.3e} after {max_sweeps} sweeps")


def _lower_quantile(vals: np.ndarray, q: float) -> float:
    vals = np.sort(vals)
    return float(vals[max(int(np.ceil(q * len(vals) - 1e-9)) - 1, 0)])


def _group(X: np.ndarray):
    if X.shape[1] == 0:
        inv = np.zeros(len(X), dtype=np.int64)
        return np.empty((1, 0)), inv
    pts, inv = np.unique(X, axis=0, return_inverse=True)
    return pts, inv.reshape(-1)


def _subgradient_coordinate(y, inv, counts, loss: LossFn, I, J, C, max_sweeps, iters, start):
    N = len(y)

    def objective(v):
        return float(loss.elementwise(v[inv], y).sum() / N)

    ones = np.ones(len(counts))
    v = _project(start, ones, I, J, C, max_sweeps)
    best_v, best = v.copy(), objective(v)
    stall = 0
    for k in range(1, iters + 1):
        r = y - v[inv]
        if loss.kind == "absolute":
            gt = -np.sign(r)
        else:
            gt = np.where(r > 0, -loss.tau, np.where(r < 0, 1.0 - loss.tau, 0.0))
        grad = np.bincount(inv, weights=gt, minlength=len(counts)) * loss.rescale / N
        norm = np.linalg.norm(grad)
        if norm == 0.0:
            break
        v = _project(v - (0.5 / np.sqrt(k)) * grad / norm, ones, I, J, C, max_sweeps)
        f = objective(v)
        if f < best - OBJECTIVE_TOL:
            best_v, best, stall = v.copy(), f, 0
        else:
            stall += 1
            if stall >= 200:
                break
    return best_v


def mcshane_fit(
    X,
    Y,
    L: float,
    loss: LossFn,
    *,
    max_sweeps: int = MAX_SWEEPS,
    subgradient_iters: int = 2000,
    clip: tuple[float, float] | None = (0.0, 1.0),
) -> LipschitzFn:
    """Empirical loss minimizer over ``L``-Lipschitz functions of the context.

    Samples sharing a context are pooled, so the problem size is the number of
    distinct contexts.  Squared loss is solved exactly by Dykstra's cyclic
    projection in the count-weighted norm; absolute and pinball losses by
    projected subgradient steps ``0.5 / sqrt(k)`` started from the pooled
    quantiles.

    Parameters
    ----------
    X : array_like, shape (N, m_eff)
        Flattened contexts.
    Y : array_like, shape (N, n_out)
        Targets (next observations).
    L : float
        Lipschitz budget, applied per output coordinate.
    loss : LossFn
        Convex loss in the prediction.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) < 1 or len(X) != len(Y):
        raise ValidationError("need at least one (context, target) sample with matching lengths")
    if not L > 0:
        raise ValidationError("Lipschitz budget must be positive")
    pts, inv = _group(X)
    U = len(pts)
    counts = np.bincount(inv, minlength=U).astype(float)
    I, J = np.triu_indices(U, k=1)
    I = I.astype(np.int64)
    J = J.astype(np.int64)
    C = L * np.sqrt(((pts[I] - pts[J]) ** 2).sum(axis=1)) if U > 1 else np.empty(0)
    values = np.empty((U, Y.shape[1]))
    w = counts / counts.sum()
    for k in range(Y.shape[1]):
        y = Y[:, k]
        if loss.kind == "squared":
            means = np.bincount(inv, weights=y, minlength=U) / counts
            values[:, k] = _project(means, w, I, J, C, max_sweeps)
        else:
            start = np.array([_lower_quantile(y[inv == g], loss.quantile) for g in range(U)])
            values[:, k] = _subgradient_coordinate(y, inv, counts, loss, I, J, C, max_sweeps, subgradient_iters, start)
    return LipschitzFn(pts, values, float(L), clip)


def random_lipschitz_fn(rng: np.random.Generator, L: float, m_eff: int, n_out: int = 1, n_anchors: int = 5) -> LipschitzFn:
    """Random member of the ``L``-Lipschitz class with values in ``[0, 1]``.

    Anchor values are drawn one at a time uniformly from the interval the
    envelopes of the earlier anchors leave feasible, so the anchor set is
    feasible by construction.
    """
    pts = rng.random((n_anchors, m_eff))
    vals = np.empty((n_anchors, n_out))
    for i in range(n_anchors):
        if i == 0:
            vals[0] = rng.random(n_out)
            continue
        dist = L * np.sqrt(((pts[:i] - pts[i]) ** 2).sum(axis=1))[:, None]
        lo = np.maximum(np.max(vals[:i] - dist, axis=0), 0.0)
        hi = np.minimum(np.min(vals[:i] + dist, axis=0), 1.0)
        vals[i] = lo + rng.random(n_out) * np.maximum(hi - lo, 0.0)
    return LipschitzFn(pts, vals, float(L))


def empirical_lipschitz(f, pairs) -> float:
    """Largest ``||f(x) - f(x')|| / ||x - x'||`` over the supplied pairs."""
    A, B = (np.asarray(p, dtype=float) for p in pairs)
    if A.ndim == 1:
        A, B = A[:, None], B[:, None]
    if len(A) < 1:
        raise ValidationError("need at least one pair")
    dx = np.sqrt(((A - B) ** 2).sum(axis=1))
    if np.any(dx == 0.0):
        raise DegeneratePair("pairs must consist of distinct points")
    fa = np.asarray(f(A), dtype=float).reshape(len(A), -1)
    fb = np.asarray(f(B), dtype=float).reshape(len(B), -1)
    return float(np.max(np.sqrt(((fa - fb) ** 2).sum(axis=1)) / dx))
