"""Binomial-logit regression fitted by maximum likelihood.

Newton-Raphson (equivalently IRLS) with step halving, Wald standard
errors from the inverse observed information, two-sided normal p-values
and McFadden's pseudo-R². An optional ridge penalty exists for the sparse
indicator models in :mod:`aaetag.habitual`; the bias regressions always
run unpenalized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
SEPARATION_BOUND = 30.0
# SE of a coefficient times the RMS of its column, i.e. on the logit scale
FLAT_SE_BOUND = 1e3


class GLMError(Exception):
    pass


class ConvergenceError(GLMError):
    def __init__(self, message: str, coef: np.ndarray, iterations: int):
        super().__init__(message)
        self.coef = coef
        self.iterations = iterations


class SeparationError(GLMError):
    """The MLE does not exist: the data are (quasi-)separable."""

    def __init__(self, message: str, coef: np.ndarray | None = None):
        super().__init__(message)
        self.coef = coef


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("design matrix must be 2-D")
        if values.shape[1] != len(self.names):
            raise ValueError(f"{values.shape[1]} columns but {len(self.names)} names")
        if not np.all(np.isfinite(values)):
            raise ValueError("design matrix has non-finite entries")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], intercept: bool = True):
        cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError("columns have different lengths")
        n = lengths.pop() if lengths else 0
        if intercept:
            cols = {"const": np.ones(n), **cols}
        names = tuple(cols)
        values = np.column_stack([cols[k] for k in names]) if names else np.empty((n, 0))
        return cls(values, names)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def sigmoid(z):
    """Overflow-safe logistic function; accepts scalars or arrays."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def predict_proba(coef, x_row) -> float:
    return float(sigmoid(float(np.dot(np.asarray(x_row, float), np.asarray(coef, float)))))


def _penalty_mask(X: np.ndarray, penalize_intercept: bool) -> np.ndarray:
    mask = np.ones(X.shape[1])
    if not penalize_intercept:
        mask[np.all(X == 1.0, axis=0)] = 0.0
    return mask


def loglik(beta, X, y, l2: float = 0.0, mask=None) -> float:
    """Log-likelihood, minus ``l2/2 * ||mask * beta||^2`` when penalized."""
    eta = X @ beta
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    if l2:
        m = np.ones_like(beta) if mask is None else mask
        ll -= 0.5 * l2 * float(np.sum(m * beta * beta))
    return ll


def score(beta, X, y, l2: float = 0.0, mask=None) -> np.ndarray:
    g = X.T @ (y - sigmoid(X @ beta))
    if l2:
        m = np.ones_like(beta) if mask is None else mask
        g = g - l2 * m * beta
    return g


def information(beta, X, l2: float = 0.0, mask=None) -> np.ndarray:
    """Observed information, i.e. the negative Hessian of :func:`loglik`."""
    p = sigmoid(X @ beta)
    w = p * (1.0 - p)
    info = (X.T * w) @ X
    if l2:
        m = np.ones_like(beta) if mask is None else mask
        info = info + l2 * np.diag(m)
    return info


def null_loglik(y) -> float:
    """Log-likelihood of the intercept-only model, in closed form."""
    y = np.asarray(y, float)
    n, k = len(y), float(y.sum())
    if k == 0 or k == n:
        return 0.0
    return k * math.log(k / n) + (n - k) * math.log(1 - k / n)


def mcfadden_pseudo_r2(ll: float, ll0: float) -> float:
    if ll0 == 0:
        raise ValueError("null log-likelihood is 0; pseudo-R2 undefined")
    if ll > 1e-12 or ll0 > 0:
        raise ValueError(f"log-likelihoods must be <= 0 (ll={ll}, ll0={ll0})")
    if ll == ll0:
        return 0.0
    return 1.0 - ll / ll0


def two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass(frozen=True)
class FitResult:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    loglik: float
    loglik_null: float
    pseudo_r2: float
    converged: bool
    iterations: int
    nobs: int
    l2: float = 0.0
    score_norm: float = field(default=float("nan"))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def coef_of(self, name: str) -> float:
        return float(self.coef[self.index(name)])

    def pvalue_of(self, name: str) -> float:
        return float(self.p[self.index(name)])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "coef": self.coef.tolist(),
            "se": self.se.tolist(),
            "z": self.z.tolist(),
            "p": self.p.tolist(),
            "loglik": self.loglik,
            "loglik_null": self.loglik_null,
            "pseudo_r2": self.pseudo_r2,
            "converged": self.converged,
            "iterations": self.iterations,
            "nobs": self.nobs,
            "l2": self.l2,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self) -> str:
        w = max(len(n) for n in self.names) + 2
        lines = [f"{'':<{w}}{'coef':>10}{'std err':>10}{'z':>9}{'P>|z|':>9}"]
        for i, n in enumerate(self.names):
            lines.append(
                f"{n:<{w}}{self.coef[i]:>10.4f}{self.se[i]:>10.4f}{self.z[i]:>9.3f}{self.p[i]:>9.3f}"
            )
        lines.append(f"Log-likelihood {self.loglik:.4f}   LL-Null {self.loglik_null:.4f}")
        lines.append(f"Pseudo R2 (McFadden) {self.pseudo_r2:.4f}   n={self.nobs}")
        return "\n".join(lines)


def fit_logistic(
    X,
    y,
    names: Sequence[str] | None = None,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    l2: float = 0.0,
    penalize_intercept: bool = False,
    separation_bound: float = SEPARATION_BOUND,
) -> FitResult:
    """Fit P(y=1|x) = logistic(x·β) by Newton-Raphson.

    Iterates until the max-norm of the score drops below ``tol``. A
    relative log-likelihood change below ``tol`` also stops the loop, but
    only once the score has stopped shrinking (floating-point floor).

    Raises:
        SeparationError: an unpenalized coefficient exceeds
            ``separation_bound`` in magnitude, the fitted probabilities
            reproduce ``y`` exactly, or (quasi-complete separation) the
            converged fit has a standard error above ``FLAT_SE_BOUND`` on
            the logit scale.
        ConvergenceError: ``max_iter`` reached; carries the last iterate.
    """
    if isinstance(X, DesignMatrix):
        names = X.names if names is None else names
        X = X.values
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(p))
    if len(names) != p:
        raise ValueError(f"{p} columns but {len(names)} names")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix has non-finite entries")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("responses must be 0/1")
    if y.min() == y.max():
        raise ValueError("both response classes must be present")
    if l2 == 0:
        if n < p:
            raise ValueError(f"need n >= p for an unpenalized fit (n={n}, p={p})")
        if np.linalg.matrix_rank(X) < p:
            raise ValueError("design matrix is rank deficient")

    mask = _penalty_mask(X, penalize_intercept)
    beta = np.zeros(p)
    ll = loglik(beta, X, y, l2, mask)
    g = score(beta, X, y, l2, mask)
    gnorm = float(np.max(np.abs(g)))
    converged = gnorm < tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        info = information(beta, X, l2, mask)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            if l2 == 0:
                raise SeparationError("information matrix became singular", beta) from None
            raise ConvergenceError("singular information matrix", beta, it) from None
        t = 1.0
        while True:
            cand = beta + t * step
            ll_cand = loglik(cand, X, y, l2, mask)
            if ll_cand >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta = cand
        if l2 == 0:
            if np.max(np.abs(beta)) > separation_bound:
                raise SeparationError(
                    f"|coef| exceeded {separation_bound} at iteration {it}; data look separable",
                    beta,
                )
            if np.max(np.abs(y - sigmoid(X @ beta))) < 1e-10:
                raise SeparationError("fitted probabilities reproduce y exactly", beta)
        g_new = score(beta, X, y, l2, mask)
        gnorm_new = float(np.max(np.abs(g_new)))
        rel = abs(ll_cand - ll) / max(abs(ll), 1e-300)
        converged = gnorm_new < tol or (rel < tol and gnorm_new >= 0.5 * gnorm)
        ll, g, gnorm = ll_cand, g_new, gnorm_new
    if not converged:
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations (max|score|={gnorm:.3g})", beta, it
        )

    info = information(beta, X, l2, mask)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if l2 == 0:
        flat = se * np.sqrt(np.mean(X**2, axis=0))
        if np.max(flat) > FLAT_SE_BOUND:
            j = int(np.argmax(flat))
            raise SeparationError(
                f"standard error of {names[j]!r} is {se[j]:.3g}; data look quasi-separable", beta
            )
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.nan)
    pvals = np.array([two_sided_p(v) if np.isfinite(v) else float("nan") for v in z])
    ll_raw = loglik(beta, X, y)
    ll0 = null_loglik(y)
    return FitResult(
        names=names,
        coef=beta,
        se=se,
        z=z,
        p=pvals,
        loglik=ll_raw,
        loglik_null=ll0,
        pseudo_r2=mcfadden_pseudo_r2(min(ll_raw, 0.0), ll0),
        converged=True,
        iterations=it,
        nobs=n,
        l2=l2,
        score_norm=gnorm,
    )
