"""Dimensionality reduction and 1-D discriminants for binned spectral trials.

The pieces follow the scikit-learn estimator contract (parameters in
``__init__``, state learned by ``fit`` stored with trailing underscores) so
they compose with standard model-selection tooling.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg as sla
from sklearn.base import BaseEstimator

from .errors import DegenerateInputError, InvalidInputError

_EPS_RIDGE = 1e-6


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise InvalidInputError("X must be 2-D (n_trials, n_features)")
    if len(y) != X.shape[0]:
        raise InvalidInputError("X and y disagree on the number of trials")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise DegenerateInputError(
            "need trials from both classes (labels 0 and 1); got "
            f"{classes.tolist()}"
        )
    return X, y.astype(int)


def _class_scatter(Xc: np.ndarray) -> np.ndarray:
    """Unit-normalized scatter (sample covariance) of a centered block."""
    n = Xc.shape[0]
    denom = max(n - 1, 1)
    return (Xc.T @ Xc) / denom


def _solve_spd(S: np.ndarray, b: np.ndarray, context: str) -> np.ndarray:
    """Solve S x = b for symmetric positive (semi)definite S.

    Singular systems fall back to a ridge of 1e-6 * trace/m on the diagonal
    (with a warning); a zero matrix falls back to the pseudoinverse.
    """
    try:
        return sla.cho_solve(sla.cho_factor(S), b)
    except np.linalg.LinAlgError:
        pass
    m = S.shape[0]
    ridge = _EPS_RIDGE * np.trace(S) / m
    if ridge > 0:
        warnings.warn(
            f"{context}: singular within-class covariance, applying ridge {ridge:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
        try:
            return np.linalg.solve(S + ridge * np.eye(m), b)
        except np.linalg.LinAlgError:
            pass
    warnings.warn(
        f"{context}: covariance has no usable inverse, using pseudoinverse",
        RuntimeWarning,
        stacklevel=3,
    )
    return np.linalg.pinv(S) @ b


class ClasswisePca(BaseEstimator):
    """Per-class principal subspaces of mean-centered trial covariance.

    Each class k gets an orthonormal basis ``bases_[k]`` spanning the top
    principal directions of that class's centered scatter, keeping the
    smallest dimension whose explained variance reaches ``variance_fraction``.
    Projection into a subspace is the linear map x -> bases_[k].T @ x (no
    mean subtraction), so projection commutes with scaling.
    """

    def __init__(self, variance_fraction: float = 0.9):
        self.variance_fraction = variance_fraction

    def fit(self, X, y):
        if not 0.0 < self.variance_fraction <= 1.0:
            raise InvalidInputError("variance_fraction must be in (0, 1]")
        X, y = _validate_xy(X, y)
        self.n_features_in_ = X.shape[1]
        self.bases_ = {}
        self.means_ = {}
        self.explained_ = {}
        self.degenerate_ = {}
        for cls in (0, 1):
            block = X[y == cls]
            mean = block.mean(axis=0)
            centered = block - mean
            # Thin SVD gives the eigenvectors of the scatter without forming
            # the D x D matrix, which matters when D >> n_trials.
            _, s, vt = np.linalg.svd(centered, full_matrices=False)
            eigvals = s**2 / max(block.shape[0] - 1, 1)
            total = float(eigvals.sum())
            self.degenerate_[cls] = total <= 0.0
            if self.degenerate_[cls]:
                warnings.warn(
                    f"class {cls} trials have zero variance; keeping a "
                    "1-D placeholder subspace",
                    RuntimeWarning,
                    stacklevel=2,
                )
                m = 1
            else:
                ratio = np.cumsum(eigvals) / total
                m = int(np.searchsorted(ratio, self.variance_fraction - 1e-12) + 1)
                m = min(m, vt.shape[0])
            basis = vt[:m].T.copy()
            # Fix the sign of each component for reproducibility.
            flip = np.sign(basis[np.abs(basis).argmax(axis=0), np.arange(m)])
            flip[flip == 0] = 1.0
            basis *= flip
            self.bases_[cls] = basis
            self.means_[cls] = mean
            self.explained_[cls] = eigvals[:m]
        return self

    def project(self, X, cls: int) -> np.ndarray:
        """Linear projection of rows of X into the class-``cls`` subspace."""
        X = np.asarray(X, dtype=np.float64)
        return X @ self.bases_[cls]

    def transform(self, X) -> list[np.ndarray]:
        """Project X into every class subspace; one array per class."""
        return [self.project(X, cls) for cls in sorted(self.bases_)]


class FisherDiscriminant(BaseEstimator):
    """Classic two-class linear discriminant direction, unit normalized.

    The direction maximizes the ratio of between-class to within-class
    variance: d ~ S_w^{-1} (mu_1 - mu_0), ||d|| = 1.
    """

    def fit(self, Z, y):
        Z, y = _validate_xy(Z, y)
        mu0, mu1 = Z[y == 0].mean(axis=0), Z[y == 1].mean(axis=0)
        n0, n1 = int((y == 0).sum()), int((y == 1).sum())
        sw = (
            _class_scatter(Z[y == 0] - mu0) * (n0 - 1)
            + _class_scatter(Z[y == 1] - mu1) * (n1 - 1)
        ) / max(n0 + n1 - 2, 1)
        direction = _solve_spd(sw, mu1 - mu0, "FisherDiscriminant")
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise DegenerateInputError(
                "class means coincide; no discriminant direction exists"
            )
        self.direction_ = direction / norm
        return self

    def transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z @ self.direction_


class InfoDiscriminant(BaseEstimator):
    """Mutual-information-driven 1-D discriminant.

    Maximizes, over unit vectors t, the Gaussian approximation of the mutual
    information between the projected feature t'x and the class label:

        J(t) = log(t' S_T t) - sum_c pi_c log(t' S_c t)

    where S_T is the total scatter and S_c the class scatters. J is the
    entropy of the pooled projection minus the average class-conditional
    entropy, so larger J means a more informative axis. Unlike the Fisher
    direction, J rewards class differences in variance as well as in mean.
    Optimization is projected gradient ascent on the unit sphere with
    backtracking, started from the Fisher direction.
    """

    def __init__(self, max_iter: int = 500, tol: float = 1e-10):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, Z, y):
        Z, y = _validate_xy(Z, y)
        n = Z.shape[0]
        mean = Z.mean(axis=0)
        st = _class_scatter(Z - mean)
        scatters, priors = [], []
        for cls in (0, 1):
            block = Z[y == cls]
            scatters.append(_class_scatter(block - block.mean(axis=0)))
            priors.append(block.shape[0] / n)
        m = Z.shape[1]
        ridge = _EPS_RIDGE * max(np.trace(st), 1e-30) / m
        st = st + ridge * np.eye(m)
        scatters = [s + ridge * np.eye(m) for s in scatters]

        def objective_and_grad(t):
            qt = float(t @ st @ t)
            j = np.log(qt)
            g = 2.0 * (st @ t) / qt
            for pi, s in zip(priors, scatters):
                qc = float(t @ s @ t)
                j -= pi * np.log(qc)
                g -= pi * 2.0 * (s @ t) / qc
            return j, g

        t = FisherDiscriminant().fit(Z, y).direction_
        j, g = objective_and_grad(t)
        self.n_iter_ = 0
        for _ in range(self.max_iter):
            self.n_iter_ += 1
            g_tan = g - (g @ t) * t
            gnorm = float(np.linalg.norm(g_tan))
            if gnorm < self.tol:
                break
            step = 1.0
            improved = False
            j_prev = j
            while step > 1e-12:
                cand = t + step * g_tan
                cand /= np.linalg.norm(cand)
                j_new, g_new = objective_and_grad(cand)
                if j_new > j + 1e-14:
                    t, j, g = cand, j_new, g_new
                    improved = True
                    break
                step /= 2.0
            if not improved or abs(j - j_prev) < self.tol:
                break
        self.direction_ = t
        self.objective_ = j
        return self

    def transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z @ self.direction_
