"""Correlations, ridge and OLS/HC3 regression, LOWESS and univariate logistic odds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import rankdata


class ConstantInputError(ValueError):
    """Correlation requested on a vector with zero variance."""


class SingularDesignError(np.linalg.LinAlgError):
    pass


class LeverageError(ValueError):
    """Some observation has hat-matrix leverage 1, so HC3 is undefined."""


class ConvergenceError(RuntimeError):
    pass


class SeparationWarning(UserWarning):
    pass


@dataclass
class RegressionResult:
    coefficients: np.ndarray  # intercept first
    standard_errors: np.ndarray
    r_squared: float
    adjusted_r_squared: float
    n: int
    p: int
    alpha: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def slopes(self) -> np.ndarray:
        return self.coefficients[1:]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.p)
        return self.intercept + X @ self.slopes

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "standard_errors": [None if math.isnan(s) else float(s) for s in self.standard_errors],
            "r_squared": float(self.r_squared),
            "adjusted_r_squared": float(self.adjusted_r_squared),
            "n": self.n,
            "p": self.p,
            "alpha": self.alpha,
        }


def _pair(x, y, min_len):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_len:
        raise ValueError(f"need at least {min_len} points, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    x, y = _pair(x, y, 2)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ConstantInputError("pearson correlation of a constant vector")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks (ties share the mean rank)."""
    x, y = _pair(x, y, 3)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def r_squared(y, fitted) -> float:
    y = np.asarray(y, dtype=float)
    resid = y - np.asarray(fitted, dtype=float)
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    if sst == 0:
        return 1.0 if sse == 0 else 0.0
    return 1.0 - sse / sst


def adjusted_r_squared(r2: float, n: int, p: int) -> float:
    if n - p - 1 <= 0:
        return float("nan")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def _design(X, n=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if n is None or X.size == n else X.reshape(n, -1)
    return X


def ridge_fit(X, y, alpha: float = 1.0, standardize: bool = True,
              fit_intercept: bool = True) -> RegressionResult:
    """Ridge regression with an unpenalised intercept.

    With ``standardize`` the penalty applies to z-scored covariates; the
    returned coefficients are always on the original covariate scale.
    Constant columns are left unscaled.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    y = np.asarray(y, dtype=float).ravel()
    X = _design(X, y.size)
    n, p = X.shape
    if fit_intercept:
        mu, ybar = X.mean(axis=0), y.mean()
    else:
        mu, ybar = np.zeros(p), 0.0
    scale = np.ones(p)
    if standardize:
        sd = X.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / scale
    A = Z.T @ Z + alpha * np.eye(p)
    if alpha == 0 and p and np.linalg.matrix_rank(A) < p:
        raise SingularDesignError("X'X is singular and alpha = 0")
    b = np.linalg.solve(A, Z.T @ (y - ybar)) if p else np.zeros(0)
    beta = b / scale
    intercept = ybar - mu @ beta if fit_intercept else 0.0
    coef = np.concatenate([[intercept], beta])
    r2 = r_squared(y, intercept + X @ beta)
    return RegressionResult(coef, np.full(p + 1, np.nan), r2, adjusted_r_squared(r2, n, p), n, p,
                            alpha=float(alpha), extra={"standardize": standardize,
                                                       "fit_intercept": fit_intercept})


def hat_diagonal(D: np.ndarray, xtx_inv: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", D, xtx_inv, D)


def ols_hc3(X, y, allow_rank_deficient: bool = False) -> RegressionResult:
    """OLS with an intercept and HC3 heteroscedasticity-robust standard errors.

    Residuals at round-off level (below 64 ulps of the largest |y| or |fitted term sum|) are
    treated as exact zeros, so perfectly fitted data gives zero SEs.

    A rank-deficient design raises :class:`SingularDesignError` unless
    ``allow_rank_deficient`` is set, in which case the minimum-norm solution
    is used (pseudo-inverse of the column-normalised design) and the adjusted
    R² counts only the independent covariates.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    X = np.zeros((n, 0)) if X is None else _design(X, n)
    p = X.shape[1]
    if n < p + 1 and not allow_rank_deficient:
        raise SingularDesignError(f"need at least {p + 1} rows for {p} covariates, got {n}")
    D = np.column_stack([np.ones(n), X])
    norms = np.linalg.norm(D, axis=0)
    norms[norms == 0] = 1.0
    Dn = D / norms
    rank = np.linalg.matrix_rank(Dn, tol=1e-10 * np.linalg.norm(Dn, 2))
    if rank < p + 1:
        if not allow_rank_deficient:
            raise SingularDesignError(f"design matrix has rank {rank} < {p + 1}")
        xtx_inv_n = np.linalg.pinv(Dn.T @ Dn, rcond=1e-10, hermitian=True)
        beta_n = xtx_inv_n @ (Dn.T @ y)
    else:
        # QR keeps the conditioning of D itself rather than squaring it
        q, r = np.linalg.qr(Dn)
        r_inv = solve_triangular(r, np.eye(p + 1))
        xtx_inv_n = r_inv @ r_inv.T
        beta_n = r_inv @ (q.T @ y)
    xtx_inv = xtx_inv_n / np.outer(norms, norms)
    beta = beta_n / norms
    resid = y - D @ beta
    scale = max(1.0, float(np.abs(y).max()), float((np.abs(D) @ np.abs(beta)).max()))
    tol = 64 * np.finfo(float).eps * scale
    resid[np.abs(resid) <= tol] = 0.0
    h = hat_diagonal(D, xtx_inv)
    if np.any(h >= 1 - 1e-10):
        i = int(np.argmax(h))
        raise LeverageError(f"observation {i} has leverage {h[i]:.12g}")
    omega = (resid / (1 - h)) ** 2
    cov = xtx_inv @ (D.T * omega) @ D @ xtx_inv
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    if p == 0 or rank == 1:
        r2 = 0.0
    elif sst == 0:
        r2 = 1.0 if sse == 0 else 0.0
    else:
        r2 = 1.0 - sse / sst
    return RegressionResult(beta, se, r2, adjusted_r_squared(r2, n, rank - 1), n, p,
                            extra={"leverage": h, "residuals": resid, "rank": int(rank)})


def tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1 - u ** 3) ** 3


def lowess(x, y, frac: float = 2 / 3) -> np.ndarray:
    """Single-pass local-linear LOWESS with tricube weights.

    Each point is fitted from its ``ceil(frac * n)`` nearest neighbours in x.
    Windows whose weighted x-variance vanishes fall back to the weighted mean.
    Returns fitted values in the input order.
    """
    x, y = _pair(x, y, 3)
    if not 0 < frac <= 1:
        raise ValueError("frac must be in (0, 1]")
    n = x.size
    k = max(2, math.ceil(frac * n))
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    fitted_sorted = np.empty(n)
    for i in range(n):
        dist = np.abs(xs - xs[i])
        nearest = np.argsort(dist, kind="stable")[:k]
        h = dist[nearest].max()
        w = np.zeros(n)
        w[nearest] = tricube(dist[nearest] / h) if h > 0 else 1.0
        sw = w.sum()
        xbar = w @ xs / sw
        ybar = w @ ys / sw
        sxx = w @ (xs - xbar) ** 2
        if sxx <= 1e-12 * max(1.0, xbar * xbar) * sw:
            fitted_sorted[i] = ybar
        else:
            slope = (w @ ((xs - xbar) * (ys - ybar))) / sxx
            fitted_sorted[i] = ybar + slope * (xs[i] - xbar)
    out = np.empty(n)
    out[order] = fitted_sorted
    return out


LOG_OR_CLAMP = 10.0


def logistic_odds(x, label, unit: float = 0.01, max_iter: int = 100, tol: float = 1e-8) -> float:
    """Odds ratio per ``unit`` increase of x from a univariate logistic fit.

    Fitted by Newton/IRLS on the mean log-likelihood (x standardised
    internally). Perfectly separated data has no finite MLE: a
    :class:`SeparationWarning` is issued and ``exp(+-LOG_OR_CLAMP)`` returned.
    """
    x = np.asarray(x, dtype=float).ravel()
    yv = np.asarray(label, dtype=float).ravel()
    if x.shape != yv.shape:
        raise ValueError("length mismatch")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if not set(np.unique(yv)) <= {0.0, 1.0}:
        raise ValueError("labels must be 0/1")
    pos, neg = x[yv == 1], x[yv == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes must be present")
    if pos.min() >= neg.max() or pos.max() <= neg.min():
        direction = 1.0 if pos.min() >= neg.max() else -1.0
        warnings.warn("classes are perfectly separated by x; odds ratio clamped",
                      SeparationWarning, stacklevel=2)
        return float(math.exp(direction * LOG_OR_CLAMP))

    mu, sd = x.mean(), x.std()
    z = (x - mu) / sd
    D = np.column_stack([np.ones_like(z), z])
    beta = np.zeros(2)
    for _ in range(max_iter):
        prob = 1 / (1 + np.exp(-(D @ beta)))
        grad = D.T @ (yv - prob) / x.size
        if np.linalg.norm(grad) < tol:
            break
        hess = (D.T * (prob * (1 - prob))) @ D / x.size
        beta = beta + np.linalg.solve(hess, grad)
    else:
        raise ConvergenceError(f"logistic fit did not converge in {max_iter} iterations")
    slope = beta[1] / sd
    return float(math.exp(slope * unit))


def correlation_matrix(columns: dict[str, np.ndarray], targets: dict[str, np.ndarray],
                       method: str = "spearman") -> np.ndarray:
    """Feature-by-target correlation grid; NaN where a column is constant."""
    fn = spearman if method == "spearman" else pearson
    out = np.full((len(columns), len(targets)), np.nan)
    for i, xs in enumerate(columns.values()):
        for j, ys in enumerate(targets.values()):
            try:
                out[i, j] = fn(xs, ys)
            except ConstantInputError:
                pass
    return out
