"""Soft-margin RBF support vector classifier solved in the dual by SMO."""

from __future__ import annotations

import numpy as np

from ..core import NumericalError, ValidationError
from .base import ZoneClassifier

_TAU = 1e-12


def rbf_kernel(A, B, gamma):
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(alpha, y_pm, K) -> float:
    """``sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij`` (maximized)."""
    ay = alpha * y_pm
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def smo(K, y_pm, C, tol=1e-4, max_iter=1_000_000):
    """Solve ``min 0.5 a'Qa - e'a`` s.t. ``0 <= a <= C``, ``y'a = 0`` with ``Q = yy'K``.

    Working pairs use maximal-violation / second-order selection.  Returns
    ``(alpha, rho, gap, iterations)`` where the decision function is
    ``sum_i alpha_i y_i K(x_i, x) - rho`` and ``gap`` is the final KKT gap.
    """
    n = y_pm.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    pos = y_pm > 0
    for it in range(max_iter):
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y_pm * grad
        if not up.any() or not low.any():
            return alpha, 0.0, 0.0, it
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m_up = score[i]
        m_low = np.min(np.where(low, score, np.inf))
        gap = m_up - m_low
        if gap < tol:
            break
        Ki = K[i]
        b = m_up - score
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * Ki
        a = np.where(a > 0, a, _TAU)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))
        yi, yj = y_pm[i], y_pm[j]
        Kij = Ki[j]
        quad = max(diag[i] + diag[j] - 2.0 * Kij, _TAU)
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # Q_it = y_i y_t K_it
        grad += y_pm * (yi * Ki * (ai - ai_old) + yj * K[j] * (aj - aj_old))
    else:
        raise NumericalError(f"SMO did not converge in {max_iter} iterations (gap {gap:.3g})")
    yg = y_pm * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub = np.where((pos & (alpha >= C)) | (~pos & (alpha <= 0)), yg, np.inf).min()
        lb = np.where((pos & (alpha <= 0)) | (~pos & (alpha >= C)), yg, -np.inf).max()
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return alpha, rho, float(gap), it


def platt_fit(decision, y, max_iter=100):
    """Sigmoid ``1 / (1 + exp(A f + B))`` fit by Platt's regularized Newton method."""
    f = np.asarray(decision, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))

    def fval(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)),
                                     (t - 1) * z + np.log1p(np.exp(z)))))

    fv = fval(A, B)
    sigma = 1e-12
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        q = 1 - p
        d2 = p * q
        h11 = sigma + np.sum(f * f * d2)
        h22 = sigma + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = fval(nA, nB)
            if nf < fv + 1e-4 * step * gd:
                A, B, fv = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


class RBFSupportVectorClassifier(ZoneClassifier):
    """Soft-margin SVM with Gaussian kernel on z-scored features.

    ``gamma="scale"`` uses ``1 / (n_features * Var(Z))`` where ``Z`` is the
    standardized training matrix.  Probabilities come from a Platt sigmoid
    fit on the training decision values.
    """

    kind = "svm_rbf"

    def __init__(self, C=0.05, gamma="scale", tol=1e-4, max_iter=1_000_000):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _fit(self, X, y):
        if self.C <= 0:
            raise ValidationError("C must be positive")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        Z = (X - mean) / scale
        if self.gamma == "scale":
            var = Z.var()
            gamma = 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
        else:
            gamma = float(self.gamma)
        y_pm = np.where(y == 1, 1.0, -1.0)
        K = rbf_kernel(Z, Z, gamma)
        alpha, rho, gap, iters = smo(K, y_pm, float(self.C), self.tol, self.max_iter)
        self.mean_, self.scale_, self.gamma_ = mean, scale, gamma
        self.dual_objective_ = dual_objective(alpha, y_pm, K)
        self.kkt_gap_, self.n_iter_ = gap, iters
        self.alpha_ = alpha
        sv = alpha > 0
        self.support_vectors_ = Z[sv]
        self.dual_coef_ = (alpha * y_pm)[sv]
        self.intercept_ = -rho
        train_dec = K[:, sv] @ self.dual_coef_ + self.intercept_
        self.prob_a_, self.prob_b_ = platt_fit(train_dec, y)

    def _decision(self, X):
        Z = (X - self.mean_) / self.scale_
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        return rbf_kernel(Z, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_

    def decision_function(self, X):
        return self._decision(self._check_predict(X))

    def _positive_proba(self, X):
        z = self.prob_a_ * self._decision(X) + self.prob_b_
        return 0.5 * (1.0 - np.tanh(0.5 * z))

    def _state_arrays(self):
        return {"mean": self.mean_, "scale": self.scale_, "sv": self.support_vectors_,
                "dual_coef": self.dual_coef_,
                "scalars": np.array([self.gamma_, self.intercept_, self.prob_a_, self.prob_b_])}

    def _load_state(self, a):
        self.mean_, self.scale_ = a["mean"], a["scale"]
        self.support_vectors_, self.dual_coef_ = a["sv"], a["dual_coef"]
        self.gamma_, self.intercept_, self.prob_a_, self.prob_b_ = (float(v) for v in a["scalars"])


def train_svm_rbf(data, C=0.05, gamma="scale", tol=1e-4) -> RBFSupportVectorClassifier:
    model = RBFSupportVectorClassifier(C=C, gamma=gamma, tol=tol)
    model.fit(data.X, data.y)
    model.zone_ = data.zone
    return model
