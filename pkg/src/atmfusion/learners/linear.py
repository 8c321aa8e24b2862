"""Linear margin and logistic classifiers.

The SVM minimizes 0.5*||w||^2 + C * sum of squared hinges by fixed-step
gradient descent; the step is 1/L with L an upper bound on the gradient's
Lipschitz constant, so the objective decreases every pass. Logistic
regression minimizes mean cross-entropy + (1/(2C))*||w||^2 by damped
Newton. Objectives and gradients are module functions so they can be
checked against finite differences. Bias terms are never regularized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

SVM_TOL = 1e-6
SVM_MAX_PASSES = 1000
LOGREG_TOL = 1e-8
LOGREG_MAX_ITERS = 10_000


def _check_two_classes(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching y")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("training data must contain both classes")
    return X, y


@dataclass
class SvmModel:
    w: np.ndarray
    b: float
    C: float
    n_features: int
    objective_path: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def decision_value(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return X @ self.w + self.b

    def predict_label(self, X) -> np.ndarray:
        return (self.decision_value(X) >= 0.0).astype(np.int8)

    def predict_proba(self, X) -> np.ndarray:
        # squashed margin; keeps the 0.5 threshold aligned with the sign rule
        return expit(self.decision_value(X))


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float
    C: float
    n_features: int

    def decision_value(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return X @ self.w + self.b

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_value(X))

    def predict_label(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def svm_objective(w, b, X, y, C: float = 1.0) -> float:
    """0.5*||w||^2 + C * sum_i max(0, 1 - z_i*(w.x_i + b))^2 with z = 2y-1."""
    z = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    viol = np.maximum(0.0, 1.0 - z * (X @ w + b))
    return 0.5 * float(w @ w) + C * float(viol @ viol)


def svm_gradient(w, b, X, y, C: float = 1.0):
    z = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    viol = np.maximum(0.0, 1.0 - z * (X @ w + b))
    zv = z * viol
    grad_w = w - 2.0 * C * (X.T @ zv)
    grad_b = -2.0 * C * float(np.sum(zv))
    return grad_w, grad_b


def logreg_objective(w, b, X, y, C: float = 1.0) -> float:
    raw = X @ w + b
    ce = np.mean(np.logaddexp(0.0, raw) - np.asarray(y, dtype=np.float64) * raw)
    return float(ce) + float(w @ w) / (2.0 * C)


def logreg_gradient(w, b, X, y, C: float = 1.0):
    n = X.shape[0]
    resid = expit(X @ w + b) - np.asarray(y, dtype=np.float64)
    grad_w = (X.T @ resid) / n + w / C
    grad_b = float(np.mean(resid))
    return grad_w, grad_b


def _top_singular_sq(A) -> float:
    """Largest eigenvalue of A.T @ A by power iteration (deterministic start)."""
    d = A.shape[1]
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(200):
        u = A.T @ (A @ v)
        nrm = float(np.linalg.norm(u))
        if nrm == 0.0:
            return 0.0
        v = u / nrm
        new_lam = float(v @ (A.T @ (A @ v)))
        if abs(new_lam - lam) <= 1e-12 * max(abs(new_lam), 1.0):
            return new_lam
        lam = new_lam
    return lam


def train_svm(X, y, C: float = 1.0) -> SvmModel:
    X, y = _check_two_classes(X, y)
    n, d = X.shape
    aug = np.hstack([X, np.ones((n, 1))])
    # curvature bound: identity block from the regularizer plus the hinge term
    lam_max = _top_singular_sq(aug)
    step = 1.0 / (1.05 * (1.0 + 2.0 * C * lam_max))

    w = np.zeros(d)
    b = 0.0
    path = np.empty(SVM_MAX_PASSES + 1, dtype=np.float64)
    prev = svm_objective(w, b, X, y, C)
    path[0] = prev
    n_passes = 0
    for i in range(SVM_MAX_PASSES):
        gw, gb = svm_gradient(w, b, X, y, C)
        w = w - step * gw
        b = b - step * gb
        cur = svm_objective(w, b, X, y, C)
        n_passes = i + 1
        path[n_passes] = cur
        if prev - cur <= SVM_TOL * max(prev, 1e-12):
            break
        prev = cur

    return SvmModel(
        w=w, b=float(b), C=C, n_features=d, objective_path=path[: n_passes + 1].copy()
    )


def train_logreg(X, y, C: float = 1.0) -> LogisticModel:
    X, y = _check_two_classes(X, y)
    n, d = X.shape
    aug = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    reg = np.zeros(d + 1)
    reg[:d] = 1.0 / C

    prev = logreg_objective(theta[:d], theta[d], X, y, C)
    for _ in range(LOGREG_MAX_ITERS):
        raw = aug @ theta
        p = expit(raw)
        resid = p - y
        grad = aug.T @ resid / n
        grad[:d] += theta[:d] / C
        if np.linalg.norm(grad) < 1e-12:
            break
        s = p * (1.0 - p)
        H = (aug.T * s) @ aug / n + np.diag(reg)
        delta = np.linalg.solve(H, grad)
        # halve until the step actually improves the objective
        t = 1.0
        for _ in range(60):
            cand = theta - t * delta
            cur = logreg_objective(cand[:d], cand[d], X, y, C)
            if cur <= prev:
                break
            t *= 0.5
        theta = theta - t * delta
        cur = logreg_objective(theta[:d], theta[d], X, y, C)
        if prev - cur <= LOGREG_TOL * max(prev, 1e-12):
            prev = cur
            break
        prev = cur

    return LogisticModel(w=theta[:d].copy(), b=float(theta[d]), C=C, n_features=d)
