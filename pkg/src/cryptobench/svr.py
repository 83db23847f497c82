"""Epsilon-insensitive support vector regression with kernel grid search.

The dual is solved in the beta = alpha - alpha* parametrization

    minimize  J(beta) = 1/2 beta'K beta - y'beta + eps * sum|beta_i|
    subject to sum(beta_i) = 0,  -C <= beta_i <= C

by SMO-style pairwise updates: each step picks the maximal violating
pair (first-order working-set selection) and solves the two-variable
subproblem exactly by enumerating the breakpoints of its piecewise
quadratic.  Pair moves preserve the equality constraint, so feasibility
holds throughout.  The sweep loop is a numba kernel (see ``_accel``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._accel import njit

__all__ = [
    "KernelSpec",
    "SvrConfig",
    "SvrModel",
    "GridCell",
    "SvrGrid",
    "ConvergenceWarning",
    "TooFewSamplesError",
    "kernel_eval",
    "gram_matrix",
    "fit",
    "predict",
    "predict_batch",
    "dual_objective",
    "grid_search",
]

KERNEL_KINDS = ("linear", "rbf", "sigmoid")


class ConvergenceWarning(UserWarning):
    """SMO hit its iteration cap; the returned model is the best iterate."""


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus coefficients; gamma is ignored by ``linear``."""

    kind: str
    gamma: float = 1.0
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.kind in ("rbf", "sigmoid") and not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive for {self.kind}, got {self.gamma}")


@dataclass(frozen=True)
class SvrConfig:
    kernel: KernelSpec
    c: float = 1.0
    epsilon: float = 0.1
    tol: float = 1e-3
    max_iter: int | None = None  # defaults to 100 * n_samples at fit time

    def __post_init__(self):
        if not self.c > 0.0:
            raise ValueError(f"C must be positive, got {self.c}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass
class SvrModel:
    """Kernel expansion f(x) = sum_i coef_i K(sv_i, x) + bias."""

    support_vectors: np.ndarray  # (n_sv, d)
    dual_coefs: np.ndarray  # (n_sv,)
    bias: float
    kernel: KernelSpec
    converged: bool = True
    n_iter: int = 0
    kkt_violation: float = 0.0


@dataclass(frozen=True)
class GridCell:
    kernel: str
    gamma: float
    c: float
    cv_mse: float


@dataclass
class SvrGrid:
    cells: list[GridCell]
    best_index: int

    @property
    def best(self) -> GridCell:
        return self.cells[self.best_index]


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """linear: x.z; rbf: exp(-gamma ||x-z||^2); sigmoid: tanh(gamma x.z + coef0)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if spec.kind == "linear":
        return float(x @ z)
    if spec.kind == "rbf":
        diff = x - z
        return float(np.exp(-spec.gamma * (diff @ diff)))
    return float(np.tanh(spec.gamma * (x @ z) + spec.coef0))


def gram_matrix(spec: KernelSpec, X, Z=None) -> np.ndarray:
    """Dense kernel matrix K[i, j] = K(X[i], Z[j]) (Z defaults to X)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = X if Z is None else np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    inner = X @ Z.T
    if spec.kind == "linear":
        return inner
    if spec.kind == "rbf":
        sq = (X * X).sum(axis=1)[:, None] + (Z * Z).sum(axis=1)[None, :] - 2.0 * inner
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-spec.gamma * sq)
    return np.tanh(spec.gamma * inner + spec.coef0)


@njit(cache=True)
def _smo_solve(K, y, c_bound, eps, tol, max_iter):
    """Pairwise maximal-violation descent on the beta-form dual.

    Returns (beta, n_iter, violation, converged).  beta starts at zero
    and every pair move keeps sum(beta) exactly zero and each entry in
    [-C, C].
    """
    n = y.shape[0]
    beta = np.zeros(n)
    F = np.zeros(n)  # K @ beta, maintained incrementally
    # Rounding residue from pair updates leaves entries within ~1e-13 of
    # a box bound or of the L1 kink at zero.  Those must be treated as
    # exactly at the bound/kink during selection, otherwise they are
    # re-selected forever with only phantom room to move.
    bound_margin = 1e-10 * max(1.0, c_bound)
    zero_margin = 1e-12 * max(1.0, c_bound)
    it = 0
    converged = False
    violation = np.inf
    while True:
        # first-order working-set selection: the steepest feasible
        # increase candidate and decrease candidate
        min_up = np.inf
        i_up = -1
        max_down = -np.inf
        i_down = -1
        for k in range(n):
            g = F[k] - y[k]
            if beta[k] < c_bound - bound_margin:
                up = g + (eps if beta[k] >= -zero_margin else -eps)
                if up < min_up:
                    min_up = up
                    i_up = k
            if beta[k] > -c_bound + bound_margin:
                down = g + (eps if beta[k] > zero_margin else -eps)
                if down > max_down:
                    max_down = down
                    i_down = k
        violation = max_down - min_up
        if i_up < 0 or i_down < 0 or i_up == i_down or violation <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        i = i_up
        j = i_down
        bi = beta[i]
        bj = beta[j]
        # move delta from j to i; J restricted to the move is piecewise
        # quadratic in delta with kinks where beta_i or beta_j crosses 0
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        g0 = (F[i] - y[i]) - (F[j] - y[j])
        lo = max(-c_bound - bi, bj - c_bound)
        hi = min(c_bound - bi, bj + c_bound)

        cands = np.empty(7)
        n_c = 0
        cands[n_c] = lo
        n_c += 1
        cands[n_c] = hi
        n_c += 1
        for brk in (-bi, bj):
            if lo < brk < hi:
                cands[n_c] = brk
                n_c += 1
        # interior vertex of each smooth piece (eta > 0 makes pieces convex)
        if eta > 1e-300:
            for s1 in (-1.0, 1.0):
                for s2 in (-1.0, 1.0):
                    d = -(g0 + eps * (s1 - s2)) / eta
                    if lo <= d <= hi:
                        # keep only vertices lying on their own piece
                        sign_i = 1.0 if bi + d >= 0.0 else -1.0
                        sign_j = 1.0 if bj - d > 0.0 else -1.0
                        if sign_i == s1 and sign_j == s2 and n_c < 7:
                            cands[n_c] = d
                            n_c += 1

        best_delta = 0.0
        best_change = 0.0
        for kc in range(n_c):
            d = cands[kc]
            change = (d * g0 + 0.5 * eta * d * d
                      + eps * (abs(bi + d) - abs(bi) + abs(bj - d) - abs(bj)))
            if change < best_change:
                best_change = change
                best_delta = d
        if best_change >= -1e-15:
            # numerically stalled (possible for indefinite kernels)
            break
        beta[i] = bi + best_delta
        beta[j] = bj - best_delta
        for k in range(n):
            F[k] += best_delta * (K[k, i] - K[k, j])
        it += 1
    return beta, it, violation, converged


def dual_objective(K, y, beta, epsilon: float) -> float:
    """Maximized dual value -1/2 b'Kb + y'b - eps ||b||_1 at ``beta``."""
    K = np.asarray(K, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(-0.5 * beta @ K @ beta + y @ beta - epsilon * np.abs(beta).sum())


def _compute_bias(F, y, beta, c_bound, eps):
    """Average over unbounded support vectors, else the KKT-window midpoint."""
    zero_margin = 1e-12 * max(1.0, c_bound)
    bound_margin = 1e-10 * max(1.0, c_bound)
    interior = (np.abs(beta) > zero_margin) & (np.abs(beta) < c_bound - bound_margin)
    if np.any(interior):
        estimates = y[interior] - F[interior] - eps * np.sign(beta[interior])
        return float(estimates.mean())
    g = F - y
    up = np.where(beta >= -zero_margin, g + eps, g - eps)
    down = np.where(beta > zero_margin, g + eps, g - eps)
    can_up = beta < c_bound - bound_margin
    can_down = beta > -c_bound + bound_margin
    lo = down[can_down].max() if np.any(can_down) else None
    hi = up[can_up].min() if np.any(can_up) else None
    if lo is None and hi is None:
        return float(np.mean(y - F))
    if lo is None:
        return float(-hi)
    if hi is None:
        return float(-lo)
    return float(-(hi + lo) / 2.0)


def fit(X, y, cfg: SvrConfig) -> SvrModel:
    """Train on (X, y); X is (n, d) or (n,) for a single feature."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and np.asarray(y).size != 1:
        X = X.T
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but y has {n}")
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")

    K = np.ascontiguousarray(gram_matrix(cfg.kernel, X))
    max_iter = cfg.max_iter if cfg.max_iter is not None else 100 * n
    beta, n_iter, violation, converged = _smo_solve(
        K, y, float(cfg.c), float(cfg.epsilon), float(cfg.tol), int(max_iter))
    if not converged:
        warnings.warn(
            f"SMO stopped after {n_iter} iterations with KKT violation "
            f"{violation:.3e} (tol {cfg.tol:.1e}); returning best iterate",
            ConvergenceWarning,
            stacklevel=2,
        )
    F = K @ beta
    bias = _compute_bias(F, y, beta, cfg.c, cfg.epsilon)
    keep = np.abs(beta) > 1e-12
    return SvrModel(
        support_vectors=X[keep].copy(),
        dual_coefs=beta[keep].copy(),
        bias=bias,
        kernel=cfg.kernel,
        converged=bool(converged),
        n_iter=int(n_iter),
        kkt_violation=float(violation) if np.isfinite(violation) else 0.0,
    )


def predict(model: SvrModel, x) -> float:
    """Kernel expansion plus bias at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    return float(predict_batch(model, x.reshape(1, -1))[0])


def predict_batch(model: SvrModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(
            f"dimension mismatch: model expects {model.support_vectors.shape[1]} "
            f"features, got {X.shape[1]}")
    K = gram_matrix(model.kernel, model.support_vectors, X)
    return K.T @ model.dual_coefs + model.bias


def _fold_bounds(n: int, k: int) -> list[tuple[int, int]]:
    """Contiguous, unshuffled k-fold boundaries (sizes differ by <= 1)."""
    sizes = [n // k + (1 if r < n % k else 0) for r in range(k)]
    bounds = []
    start = 0
    for size in sizes:
        bounds.append((start, start + size))
        start += size
    return bounds


def grid_search(
    X,
    y,
    kernels: Sequence[str],
    gammas: Sequence[float],
    cs: Sequence[float],
    k: int = 5,
    epsilon: float = 0.1,
    tol: float = 1e-3,
    coef0: float = 0.0,
    max_iter: int | None = None,
) -> SvrGrid:
    """Exhaustive kernel x gamma x C sweep scored by k-fold CV MSE.

    Folds are contiguous in time order.  The best cell is the argmin of
    cv_mse with ties resolved by grid order (kernel, then gamma, then C
    as listed).  Non-converged cells keep their score and raise only a
    ConvergenceWarning, so the table always fills.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 1 and np.asarray(y).size != 1:
        X = X.T
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    if k < 2:
        raise ValueError(f"cross-validation needs k >= 2, got {k}")
    if n < k:
        raise TooFewSamplesError(f"{n} samples cannot fill {k} folds")
    bounds = _fold_bounds(n, k)
    if n - max(stop - start for start, stop in bounds) < 2:
        raise TooFewSamplesError(
            f"{n} samples leave fewer than 2 training points per {k}-fold split")
    cells: list[GridCell] = []
    for kind in kernels:
        for gamma in gammas:
            spec = KernelSpec(kind=kind, gamma=float(gamma), coef0=coef0)
            for c in cs:
                cfg = SvrConfig(kernel=spec, c=float(c), epsilon=epsilon,
                                tol=tol, max_iter=max_iter)
                fold_mses = []
                for start, stop in bounds:
                    mask = np.ones(n, dtype=bool)
                    mask[start:stop] = False
                    model = fit(X[mask], y[mask], cfg)
                    preds = predict_batch(model, X[start:stop])
                    resid = preds - y[start:stop]
                    fold_mses.append(float(np.mean(resid * resid)))
                cells.append(GridCell(kernel=kind, gamma=float(gamma),
                                      c=float(c), cv_mse=float(np.mean(fold_mses))))
    best = int(np.argmin([cell.cv_mse for cell in cells]))
    return SvrGrid(cells=cells, best_index=best)
