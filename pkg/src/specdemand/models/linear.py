"""Ordinary least squares and coordinate-descent lasso."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..schema import ConvergenceError

log = logging.getLogger(__name__)


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    feature_names: list = field(default_factory=list)
    regularization: str = "none"  # "none" or "l1"
    lam: float = 0.0
    fit_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.feature_names and len(self.feature_names) != len(self.coefficients):
            raise ValueError("one coefficient per feature required")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return self.intercept + X @ self.coefficients

    def to_dict(self):
        names = self.feature_names or [f"x{j}" for j in range(len(self.coefficients))]
        return {
            "type": "linear",
            "regularization": self.regularization,
            "lambda": self.lam,
            "intercept": self.intercept,
            "coefficients": {n: float(c) for n, c in zip(names, self.coefficients)},
            "fit_meta": {k: v for k, v in self.fit_meta.items() if k != "objective_history"},
        }

    @classmethod
    def from_dict(cls, d):
        names = list(d["coefficients"])
        return cls(float(d["intercept"]), np.array([d["coefficients"][n] for n in names]),
                   names, d.get("regularization", "none"), float(d.get("lambda", 0.0)),
                   dict(d.get("fit_meta", {})))


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("empty design matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one entry per row of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("missing or non-finite values")
    return X, y


def fit_ols(X, y, feature_names=None):
    """Least squares with intercept via SVD of the centred design.

    Rank-deficient designs get the minimum-norm coefficient vector.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"{n} rows cannot identify {p} coefficients and an intercept")
    xm = X.mean(axis=0)
    ym = y.mean()
    beta, _, rank, _ = np.linalg.lstsq(X - xm, y - ym, rcond=None)
    if rank < p:
        log.warning("rank-deficient design (rank %d < %d); minimum-norm solution", rank, p)
    intercept = float(ym - xm @ beta)
    resid = y - intercept - X @ beta
    return LinearModel(intercept, beta, list(feature_names or []), "none", 0.0,
                       {"rank": int(rank), "residual_rms": float(np.sqrt(np.mean(resid ** 2)))})


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, intercept, beta, lam, penalty_factor=None):
    r = y - intercept - X @ beta
    pf = 1.0 if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    return float(r @ r) / (2.0 * len(y)) + lam * float((pf * np.abs(beta)).sum())


def lambda_max(X, y):
    """Smallest lambda giving the all-zero solution for centred columns."""
    X, y = _check_xy(X, y)
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / len(y))


def fit_lasso(X, y, lam, tol=1e-8, max_iter=10000, feature_names=None,
              coef_init=None, intercept_init=None, frozen=None, fit_intercept=True,
              penalty_factor=None):
    """Cyclic coordinate descent on (1/2n)||y - b - X beta||^2 + lam ||beta||_1.

    Converged once a full sweep moves no coefficient by ``tol`` or more. The
    intercept is unpenalised and re-centred after every sweep. Coordinates in
    the boolean ``frozen`` mask keep their initial value; ``penalty_factor``
    scales lambda per coordinate (0 leaves a coordinate unpenalised). Raises
    :class:`ConvergenceError` after ``max_iter`` sweeps.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = X.shape
    beta = np.zeros(p) if coef_init is None else np.array(coef_init, dtype=float)
    frozen = np.zeros(p, dtype=bool) if frozen is None else np.asarray(frozen, dtype=bool)
    free = np.flatnonzero(~frozen)
    pf = np.ones(p) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    if pf.shape != (p,) or (pf < 0).any():
        raise ValueError("penalty_factor must be one non-negative weight per column")
    col_sq = (X * X).sum(axis=0) / n

    r = y - X @ beta
    if intercept_init is not None:
        b0 = float(intercept_init)
    else:
        b0 = float(r.mean()) if fit_intercept else 0.0
    r = r - b0
    def objective():
        return float(r @ r) / (2.0 * n) + lam * float((pf * np.abs(beta)).sum())

    history = [objective()]
    names = list(feature_names or [])
    if not beta.any():
        # zero may already satisfy the optimality conditions; without a supplied
        # intercept the residual is y - mean(y), the same arithmetic as lambda_max
        rz, bz = r, b0
        if fit_intercept and intercept_init is not None:
            shift = float(r.mean())
            rz, bz = r - shift, b0 + shift
        grad = np.abs(X.T @ rz) / n
        if (grad[free] <= lam * pf[free]).all():
            r, b0 = rz, bz
            history.append(objective())
            meta = {"iterations": 0, "objective": history[-1], "objective_history": history}
            return LinearModel(b0, beta, names, "l1", float(lam), meta)

    for it in range(1, max_iter + 1):
        max_delta = 0.0
        for j in free:
            if col_sq[j] == 0.0:
                continue
            xj = X[:, j]
            old = beta[j]
            rho = float(xj @ r) / n + col_sq[j] * old
            new = float(soft_threshold(rho, lam * pf[j])) / col_sq[j]
            if new != old:
                r -= xj * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if fit_intercept:
            shift = float(r.mean())
            b0 += shift
            r -= shift
        history.append(objective())
        if max_delta < tol:
            meta = {"iterations": it, "objective": history[-1], "objective_history": history}
            return LinearModel(b0, beta, names, "l1", float(lam), meta)

    model = LinearModel(b0, beta, names, "l1", float(lam),
                        {"iterations": max_iter, "objective": history[-1],
                         "objective_history": history})
    raise ConvergenceError(f"lasso did not converge in {max_iter} sweeps", model)
