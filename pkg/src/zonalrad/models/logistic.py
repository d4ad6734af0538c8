"""L1-penalized logistic regression on z-scored features."""

from __future__ import annotations

import numpy as np

from ..core import NumericalError
from .base import ZoneClassifier

# lower bound on p(1-p) in the quadratic model, as in glmnet
_MIN_CURVATURE = 1e-5


def _objective(Z1, y, theta, lam):
    eta = Z1 @ theta
    loss = np.mean(np.logaddexp(0.0, eta) - y * eta)
    return loss + lam * np.abs(theta[1:]).sum()


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def kkt_violation(grad, w, lam) -> float:
    """Largest violation of the L1 optimality conditions (intercept unpenalized)."""
    g0, gw = grad[0], grad[1:]
    viol = np.where(w != 0, np.abs(gw + lam * np.sign(w)), np.maximum(np.abs(gw) - lam, 0.0))
    return float(max(abs(g0), viol.max(initial=0.0)))


def _solve_quadratic(H, g, theta0, lam, max_cycles=1000, tol=1e-12):
    """Coordinate descent on ``0.5 u'Hu + g'u + lam*|theta0[1:]+u[1:]|_1``."""
    theta = theta0.copy()
    Hu = np.zeros_like(theta)
    diag = np.diag(H)
    d = theta.size
    for _ in range(max_cycles):
        biggest = 0.0
        for j in range(d):
            if diag[j] <= 0:
                continue
            c = g[j] + Hu[j]
            old = theta[j]
            z = diag[j] * old - c
            if j == 0:
                new = z / diag[j]
            else:
                new = np.sign(z) * max(abs(z) - lam, 0.0) / diag[j]
            delta = new - old
            if delta != 0.0:
                theta[j] = new
                Hu += H[:, j] * delta
                biggest = max(biggest, diag[j] * delta * delta)
        if biggest < tol:
            break
    return theta


class L1LogisticRegression(ZoneClassifier):
    """Lasso-penalized logistic regression.

    Minimizes ``mean log-loss + lam * ||w||_1`` over z-scored features with an
    unpenalized intercept, by proximal Newton steps (coordinate descent on a
    quadratic model, then a backtracking line search).  Converged when the
    subgradient optimality conditions hold to ``tol``.
    """

    kind = "logreg_l1"

    def __init__(self, lam=0.01, tol=1e-6, max_iter=10000):
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def _fit(self, X, y):
        n, d = X.shape
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.mean_, self.scale_ = mean, scale
        Z1 = np.column_stack([np.ones(n), (X - mean) / scale])
        lam = float(self.lam)
        yf = y.astype(np.float64)
        base = np.clip(yf.mean(), 1e-12, 1 - 1e-12)
        theta = np.zeros(d + 1)
        theta[0] = np.log(base / (1 - base))
        f = _objective(Z1, yf, theta, lam)
        self.n_iter_ = 0
        for it in range(int(self.max_iter)):
            p = _sigmoid(Z1 @ theta)
            grad = Z1.T @ (p - yf) / n
            viol = kkt_violation(grad, theta[1:], lam)
            if viol <= self.tol:
                break
            wts = np.maximum(p * (1 - p), _MIN_CURVATURE) / n
            H = (Z1 * wts[:, None]).T @ Z1
            # inexact inner solve: accuracy tightens as the outer iterate converges
            inner_tol = min(1e-6, 1e-2 * viol * viol)
            target = _solve_quadratic(H, grad, theta, lam, tol=max(inner_tol, 1e-20))
            direction = target - theta
            decrease = grad @ direction + lam * (np.abs(target[1:]).sum() - np.abs(theta[1:]).sum())
            step = 1.0
            while True:
                cand = theta + step * direction
                f_new = _objective(Z1, yf, cand, lam)
                if not np.isfinite(f_new):
                    raise NumericalError("logistic loss overflowed")
                if f_new <= f + 1e-4 * step * decrease or step < 1e-10:
                    break
                step *= 0.5
            if step < 1e-10 and f_new > f:
                break
            theta, f = cand, f_new
            self.n_iter_ = it + 1
        self.intercept_std_ = float(theta[0])
        self.coef_std_ = theta[1:].copy()
        self.coef_ = self.coef_std_ / scale
        self.intercept_ = float(theta[0] - self.coef_std_ @ (mean / scale))
        self.objective_ = float(f)

    def decision_function(self, X):
        X = self._check_predict(X)
        return self._margin(X)

    def _margin(self, X):
        return self.intercept_std_ + ((X - self.mean_) / self.scale_) @ self.coef_std_

    def _positive_proba(self, X):
        return _sigmoid(self._margin(X))

    def feature_importances(self) -> np.ndarray:
        """Absolute coefficients on the z-scored features."""
        return np.abs(self.coef_std_)

    def _state_arrays(self):
        return {"mean": self.mean_, "scale": self.scale_, "coef_std": self.coef_std_,
                "intercept_std": np.array([self.intercept_std_])}

    def _load_state(self, a):
        self.mean_, self.scale_ = a["mean"], a["scale"]
        self.coef_std_ = a["coef_std"]
        self.intercept_std_ = float(a["intercept_std"][0])
        self.coef_ = self.coef_std_ / self.scale_
        self.intercept_ = float(self.intercept_std_ - self.coef_std_ @ (self.mean_ / self.scale_))


def train_logreg_l1(data, lam, tol=1e-6, max_iter=10000) -> L1LogisticRegression:
    model = L1LogisticRegression(lam=lam, tol=tol, max_iter=max_iter)
    model.fit(data.X, data.y)
    model.zone_ = data.zone
    return model
