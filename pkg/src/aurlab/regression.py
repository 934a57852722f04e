"""Least-squares, ridge (AUR) and worst-case robust (WUR) regression solvers.

No intercept is fitted; callers scale their data beforehand.

AUR objective::

    ||y - X b||^2 + lam * ||b||^2

WUR objective (unsquared norms)::

    ||y - X b|| + lam * ||b||
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import ConfigError, DataError, DimensionError, RankDeficientError

AUR_RESIDUAL_TOL = 1e-10
WUR_RESIDUAL_TOL = 1e-8
MAX_GRAM_CONDITION = 1e12
EXACT_FIT_RTOL = 1e-12


class Method(str, enum.Enum):
    OLS = "ols"
    AUR = "aur"
    WUR = "wur"


@dataclass(frozen=True)
class RegressionProblem:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"X must be a nonempty 2-D array, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DimensionError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("X and y must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "RegressionProblem":
        return RegressionProblem(self.X[rows], self.y[rows])


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    objective: float
    optimality_residual: float
    lambda_used: float
    method: Method
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "lambda_used": self.lambda_used,
            "beta": [float(b) for b in self.beta],
            "objective": self.objective,
            "optimality_residual": self.optimality_residual,
            "converged": self.converged,
        }


def aur_objective(problem: RegressionProblem, beta, lam: float) -> float:
    r = problem.y - problem.X @ beta
    return float(r @ r + lam * (beta @ beta))


def wur_objective(problem: RegressionProblem, beta, lam: float) -> float:
    return float(np.linalg.norm(problem.y - problem.X @ beta) + lam * np.linalg.norm(beta))


def mse(problem: RegressionProblem, beta) -> float:
    r = problem.y - problem.X @ beta
    return float(r @ r / problem.n)


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not (math.isfinite(lam) and lam >= 0):
        raise ConfigError(f"lambda must be a nonnegative finite number, got {lam!r}")
    return lam


def _ridge_solve(problem: RegressionProblem, lam: float):
    X, y = problem.X, problem.y
    gram = X.T @ X
    rhs = X.T @ y
    if lam == 0.0:
        s = np.linalg.svd(X, compute_uv=False)
        cond = math.inf if s[-1] == 0.0 or X.shape[0] < X.shape[1] else float((s[0] / s[-1]) ** 2)
        if cond > MAX_GRAM_CONDITION:
            raise RankDeficientError(
                f"X^T X is numerically singular (condition estimate {cond:.3g}); use lambda > 0", cond
            )
    system = gram + lam * np.eye(problem.k)
    try:
        factor = linalg.cho_factor(system, check_finite=False)
    except linalg.LinAlgError as exc:
        raise RankDeficientError(f"Gram system is not positive definite: {exc}") from exc
    beta = linalg.cho_solve(factor, rhs, check_finite=False)
    scale = max(1.0, float(np.linalg.norm(rhs)))
    resid = float(np.linalg.norm(system @ beta - rhs)) / scale
    if resid > AUR_RESIDUAL_TOL:
        beta = beta + linalg.cho_solve(factor, rhs - system @ beta, check_finite=False)
        resid = float(np.linalg.norm(system @ beta - rhs)) / scale
    return beta, resid


def fit_aur(problem: RegressionProblem, lam: float) -> FitResult:
    """Ridge solution of ``(X^T X + lam I) b = X^T y`` by Cholesky.

    ``optimality_residual`` is the normal-equation residual relative to
    ``max(1, ||X^T y||)``.
    """
    lam = _check_lambda(lam)
    beta, resid = _ridge_solve(problem, lam)
    return FitResult(beta, aur_objective(problem, beta, lam), resid, lam, Method.AUR,
                     converged=resid <= AUR_RESIDUAL_TOL)


def fit_ols(problem: RegressionProblem) -> FitResult:
    beta, resid = _ridge_solve(problem, 0.0)
    return FitResult(beta, aur_objective(problem, beta, 0.0), resid, 0.0, Method.OLS,
                     converged=resid <= AUR_RESIDUAL_TOL)


# ---------------------------------------------------------------------------
# worst-case (unsquared) regression


def _trust_region_distance(X: np.ndarray, w: np.ndarray) -> float:
    """``min ||X^T v - w||`` over ``||v|| <= 1``."""
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    keep = s > s[0] * 1e-14 if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    s, vt = s[keep], vt[keep]
    p = vt @ w
    perp2 = max(float(w @ w - p @ p), 0.0)
    if s.size == 0:
        return math.sqrt(float(w @ w))

    def z_norm(mu):
        return float(np.linalg.norm(s * p / (s * s + mu)))

    if z_norm(0.0) <= 1.0:
        return math.sqrt(perp2)
    lo, hi = 0.0, 1.0
    while z_norm(hi) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if z_norm(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    z = s * p / (s * s + hi)
    return math.sqrt(float(np.sum((s * z - p) ** 2)) + perp2)


def wur_subgradient_residual(problem: RegressionProblem, beta, lam: float) -> float:
    """Norm of the minimal-norm subgradient of the WUR objective at ``beta``."""
    X, y = problem.X, problem.y
    beta = np.asarray(beta, dtype=float)
    r = y - X @ beta
    rn = float(np.linalg.norm(r))
    bn = float(np.linalg.norm(beta))
    if rn <= EXACT_FIT_RTOL * max(1.0, float(np.linalg.norm(y))):
        rn = 0.0
    if rn > 0 and bn > 0:
        return float(np.linalg.norm(-X.T @ r / rn + lam * beta / bn))
    if rn > 0:
        return max(0.0, float(np.linalg.norm(X.T @ r)) / rn - lam)
    if bn > 0:
        return _trust_region_distance(X, lam * beta / bn)
    return 0.0


class _RidgePath:
    """Ridge solutions ``b(t) = (X^T X + t I)^-1 X^T y`` from one thin SVD."""

    def __init__(self, problem: RegressionProblem):
        u, s, vt = np.linalg.svd(problem.X, full_matrices=False)
        keep = s > (s[0] * 1e-13 if s.size else 0.0)
        self.s = s[keep]
        self.vt = vt[keep]
        self.c = u[:, keep].T @ problem.y
        perp = problem.y - u[:, keep] @ self.c
        self.perp2 = float(perp @ perp)

    def norms(self, t: float):
        denom = self.s * self.s + t
        beta2 = float(np.sum((self.s * self.c / denom) ** 2))
        r2 = float(np.sum((t * self.c / denom) ** 2)) + self.perp2
        return math.sqrt(r2), math.sqrt(beta2)

    def beta(self, t: float) -> np.ndarray:
        return self.vt.T @ (self.s * self.c / (self.s * self.s + t))


def fit_wur(problem: RegressionProblem, lam: float) -> FitResult:
    """Minimize ``||y - X b|| + lam ||b||``.

    Zero is optimal exactly when ``lam * ||y|| >= ||X^T y||``.  Otherwise any
    optimum with nonzero residual is a ridge point ``b(t)`` whose ridge
    parameter satisfies ``t = lam * ||r(t)|| / ||b(t)||``; that scalar
    equation is bracketed on a log grid and solved by Brent's method.  The
    zero-residual (exact fit) point and zero are compared as well, and the
    best objective wins.
    """
    lam = _check_lambda(lam)
    X, y = problem.X, problem.y
    xty = X.T @ y
    tol = WUR_RESIDUAL_TOL * (1.0 + float(np.linalg.norm(xty)))

    def result(beta):
        resid = wur_subgradient_residual(problem, beta, lam)
        return FitResult(beta, wur_objective(problem, beta, lam), resid, lam, Method.WUR,
                         converged=resid <= tol)

    if lam == 0.0:
        return result(fit_ols(problem).beta)
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0 or lam * ynorm >= float(np.linalg.norm(xty)):
        return result(np.zeros(problem.k))

    path = _RidgePath(problem)
    log_lam = math.log(lam)

    def psi(u):
        rn, bn = path.norms(math.exp(u))
        if rn == 0.0:
            return -math.inf
        return u - log_lam - math.log(rn) + math.log(bn)

    smax2 = float(path.s[0] ** 2)
    lo_u = math.log(smax2) - 60.0
    hi_u = math.log(smax2) + 10.0
    while psi(hi_u) <= 0.0 and hi_u < 700.0:
        hi_u += 10.0
    grid = np.linspace(lo_u, hi_u, 281)
    vals = [psi(u) for u in grid]
    candidates = [np.zeros(problem.k), path.beta(0.0)]
    for i in range(len(grid) - 1):
        if vals[i] < 0.0 <= vals[i + 1] or vals[i] <= 0.0 < vals[i + 1]:
            if vals[i] == -math.inf:
                continue
            root = optimize.brentq(psi, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps,
                                   maxiter=500)
            candidates.append(path.beta(math.exp(root)))
    best = min(candidates, key=lambda b: wur_objective(problem, b, lam))
    fit = result(best)
    if not fit.converged:
        polished = _descent_polish(problem, best, lam)
        alt = result(polished)
        if alt.objective <= fit.objective:
            fit = alt
    return fit


def _descent_polish(problem: RegressionProblem, beta, lam: float, iters: int = 5000) -> np.ndarray:
    """Backtracking descent along the negative minimal subgradient (smooth region)."""
    X, y = problem.X, problem.y
    beta = np.array(beta, dtype=float)
    f = wur_objective(problem, beta, lam)
    step = 1.0
    for _ in range(iters):
        r = y - X @ beta
        rn, bn = np.linalg.norm(r), np.linalg.norm(beta)
        if rn == 0 or bn == 0:
            break
        g = -X.T @ r / rn + lam * beta / bn
        gn = float(g @ g)
        if gn == 0:
            break
        while step > 1e-20:
            cand = beta - step * g
            fc = wur_objective(problem, cand, lam)
            if fc <= f - 0.5 * step * gn:
                beta, f = cand, fc
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return beta


# ---------------------------------------------------------------------------
# cross-validation


def default_grid() -> tuple:
    return tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class CvSpec:
    grid: tuple = field(default_factory=default_grid)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ConfigError("CV grid must be nonempty")
        if any(g < 0 or not math.isfinite(g) for g in grid):
            raise ConfigError("CV grid values must be nonnegative and finite")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ConfigError("CV grid must be nondecreasing")
        if int(self.folds) != self.folds or self.folds < 2:
            raise ConfigError("folds must be an integer >= 2")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "folds", int(self.folds))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class CvPoint:
    lam: float
    mean_mse: float
    std_mse: float


def fold_indices(n: int, folds: int, seed: int) -> list:
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


_FITTERS = {Method.AUR: fit_aur, Method.WUR: fit_wur}


def select_lambda_cv(problem: RegressionProblem, method: Method | str, spec: CvSpec | None = None,
                     workers: int = 1):
    """k-fold CV over ``spec.grid``.

    Returns ``(lam, curve)``; ties on mean validation MSE go to the smaller
    lambda.  Folds are fixed by ``spec.seed`` before any fitting, so running
    grid points on several threads gives the sequential answer.
    """
    spec = spec or CvSpec()
    method = Method(method)
    if method not in _FITTERS:
        raise ConfigError("CV supports the 'aur' and 'wur' methods")
    if problem.n < spec.folds:
        raise ConfigError(f"{spec.folds}-fold CV needs at least {spec.folds} rows, got {problem.n}")
    splits = []
    all_rows = np.arange(problem.n)
    for test_rows in fold_indices(problem.n, spec.folds, spec.seed):
        train_rows = np.setdiff1d(all_rows, test_rows)
        if train_rows.size == 0:
            raise ConfigError("a CV fold has no training rows")
        splits.append((problem.subset(train_rows), problem.subset(test_rows)))
    fitter = _FITTERS[method]

    def evaluate(lam):
        scores = []
        for train, test in splits:
            try:
                beta = fitter(train, lam).beta
            except RankDeficientError:
                return CvPoint(lam, math.inf, math.nan)
            scores.append(mse(test, beta))
        scores = np.asarray(scores)
        return CvPoint(lam, float(scores.mean()), float(scores.std(ddof=1)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curve = list(pool.map(evaluate, spec.grid))
    else:
        curve = [evaluate(lam) for lam in spec.grid]
    best = None
    for point in curve:
        if best is None or point.mean_mse < best.mean_mse:
            best = point
    if not math.isfinite(best.mean_mse):
        raise RankDeficientError("every CV grid point failed to fit")
    return best.lam, curve
