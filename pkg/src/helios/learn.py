"""Gaussian-process regression and inverse design for the instrument.

The regressor is a GP with a dot-product + white-noise kernel over
degree-2 polynomial features of standardized inputs, with per-output
normalization and kernel hyperparameters shared across outputs.  With this
kernel the posterior mean is exactly ridge regression in feature space,
which the test suite exploits as an independent oracle.

Hyperparameters maximize the summed log marginal likelihood over outputs,
optimized by Nelder-Mead over log-parameters from three fixed starts, so
fits are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import yaml

from helios.neldermead import nelder_mead
from helios.sim import RgbSetting

GP_SCHEMA = "helios-gp/1"

# fixed restart points in (log sigma0_sq, log noise)
_HYPER_STARTS = ((-2.0, -4.0), (0.0, -1.0), (2.0, 1.0))


class FitError(RuntimeError):
    """Kernel factorization failed at every restart."""


@dataclass(frozen=True)
class FeaturePipeline:
    """Standardize inputs, then expand to [1, z_i, z_i*z_j (i<=j)]."""

    input_mean: np.ndarray
    input_std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "FeaturePipeline":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = (X - self.input_mean) / self.input_std
        n, d = Z.shape
        cols = [np.ones(n)]
        cols.extend(Z[:, i] for i in range(d))
        for i in range(d):
            for j in range(i, d):
                cols.append(Z[:, i] * Z[:, j])
        return np.column_stack(cols)


def n_features(n_inputs: int) -> int:
    return 1 + n_inputs + n_inputs * (n_inputs + 1) // 2


def _kernel(phi_a: np.ndarray, phi_b: np.ndarray, sigma0_sq: float) -> np.ndarray:
    return phi_a @ phi_b.T + sigma0_sq


def log_marginal_likelihood(phi: np.ndarray, y_norm: np.ndarray,
                            sigma0_sq: float, noise: float,
                            with_noise_gradient: bool = False):
    """Summed LML over output columns, optionally with d(LML)/d(log noise).

    Returns -inf when the kernel matrix is not positive definite.
    """
    n = phi.shape[0]
    K = _kernel(phi, phi, sigma0_sq) + noise * np.eye(n)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return (-np.inf, 0.0) if with_noise_gradient else -np.inf

    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y_norm))
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    k = y_norm.shape[1]
    lml = float(
        -0.5 * np.sum(y_norm * alpha)
        - 0.5 * k * log_det
        - 0.5 * k * n * math.log(2.0 * math.pi))
    if not with_noise_gradient:
        return lml

    # dK/d(noise) = I, so dLML/dnoise = 0.5 * (sum_j a_j^T a_j - k tr(K^-1));
    # chain rule adds a factor of noise for the log parameterization.
    K_inv = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(n)))
    grad = 0.5 * (float(np.sum(alpha * alpha)) - k * float(np.trace(K_inv)))
    return lml, grad * noise


@dataclass(frozen=True)
class GpModel:
    pipeline: FeaturePipeline
    sigma0_sq: float
    noise: float
    phi_train: np.ndarray      # n x m training features
    y_mean: np.ndarray         # per-output normalization
    y_std: np.ndarray
    chol: np.ndarray           # lower factor of K = phi phi^T + s0 + noise I
    alpha: np.ndarray          # n x k weights, K^-1 y_norm

    @property
    def n_outputs(self) -> int:
        return self.alpha.shape[1]


def train_test_split(X, Y, test_fraction: float, seed: int):
    """Deterministic shuffled split; at least one row on each side."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows to split")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    if Y.shape[0] != n:
        raise ValueError("X and Y row counts differ")
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = order[:n_test], order[n_test:]
    return X[train_idx], X[test_idx], Y[train_idx], Y[test_idx]


def _factorize(phi: np.ndarray, sigma0_sq: float, noise: float) -> np.ndarray:
    K = _kernel(phi, phi, sigma0_sq) + noise * np.eye(phi.shape[0])
    return np.linalg.cholesky(K)


def gp_fit(X, Y, hyperparams: tuple | None = None) -> GpModel:
    """Fit the GP; pass ``hyperparams=(sigma0_sq, noise)`` to skip the
    marginal-likelihood optimization (useful for oracle comparisons)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, d = X.shape
    if Y.shape[0] != n:
        raise ValueError("X and Y row counts differ")
    if n < n_features(d):
        raise ValueError(
            f"need at least {n_features(d)} rows for {d} inputs at degree 2, got {n}")

    pipeline = FeaturePipeline.fit(X)
    phi = pipeline.transform(X)

    y_mean = Y.mean(axis=0)
    y_std = Y.std(axis=0)
    y_std = np.where(y_std == 0.0, 1.0, y_std)
    y_norm = (Y - y_mean) / y_std

    if hyperparams is not None:
        sigma0_sq, noise = float(hyperparams[0]), float(hyperparams[1])
    else:
        def objective(log_params):
            with np.errstate(over="ignore"):
                s0, nz = np.exp(np.clip(log_params, -700, 700))
            if not (np.isfinite(s0) and np.isfinite(nz)):
                return np.inf
            return -log_marginal_likelihood(phi, y_norm, s0, nz)

        best = None
        for start in _HYPER_STARTS:
            result = nelder_mead(objective, np.array(start), max_iter=400)
            if best is None or result.fval < best.fval:
                best = result
        if not np.isfinite(best.fval):
            raise FitError(
                "kernel factorization failed at every restart; the training "
                "inputs are too poorly conditioned for a degree-2 fit")
        sigma0_sq, noise = (float(v) for v in np.exp(best.x))

    try:
        chol = _factorize(phi, sigma0_sq, noise)
    except np.linalg.LinAlgError as e:
        raise FitError(f"kernel factorization failed: {e}") from e
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y_norm))
    return GpModel(pipeline, sigma0_sq, noise, phi, y_mean, y_std, chol, alpha)


def gp_predict(model: GpModel, x) -> tuple:
    """Posterior mean and std per output at one input point.

    The predictive variance includes the white-noise term, so it is
    comparable with repeat-measurement scatter.
    """
    phi_x = model.pipeline.transform(np.atleast_2d(x))
    k_star = _kernel(model.phi_train, phi_x, model.sigma0_sq)   # n x 1
    mean_norm = k_star.T @ model.alpha                          # 1 x k

    v = np.linalg.solve(model.chol, k_star)
    k_xx = float((phi_x @ phi_x.T).item()) + model.sigma0_sq + model.noise
    var_norm = max(k_xx - float((v.T @ v).item()), 0.0)

    mean = model.y_mean + model.y_std * mean_norm[0]
    std = np.sqrt(var_norm) * model.y_std
    return mean, std


def r2_score(Y_true, Y_pred) -> float:
    """Coefficient of determination, uniformly averaged across outputs."""
    Y_true = np.asarray(Y_true, dtype=float)
    Y_pred = np.asarray(Y_pred, dtype=float)
    if Y_true.ndim == 1:
        Y_true, Y_pred = Y_true[:, None], Y_pred[:, None]
    if Y_true.shape != Y_pred.shape or Y_true.shape[0] < 2:
        raise ValueError("r2_score needs aligned shapes with >= 2 rows")
    ss_tot = np.sum((Y_true - Y_true.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot == 0.0):
        raise ValueError("r2_score undefined for a zero-variance output")
    ss_res = np.sum((Y_true - Y_pred) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))


@dataclass
class InverseResult:
    setting: RgbSetting
    raw_x: np.ndarray
    objective: float
    iterations: int
    converged: bool


def inverse_design(model: GpModel, target, x0=(0.3, 0.3, 0.3)) -> InverseResult:
    """Find inputs whose predicted outputs match ``target`` (least squares),
    then clamp into [0, 1]^3.  Non-convergence is reported in the result,
    not raised."""
    target = np.asarray(target, dtype=float)

    def objective(x):
        mean, _ = gp_predict(model, x)
        return float(np.sum((mean - target) ** 2))

    result = nelder_mead(objective, np.asarray(x0, dtype=float))
    setting = RgbSetting(*result.x)
    return InverseResult(setting, result.x, result.fval, result.iterations,
                         result.converged)


def save_gp(model: GpModel, path) -> None:
    doc = {
        "schema": GP_SCHEMA,
        "saved_at": datetime.now(timezone.utc).isoformat(),
        "input_mean": model.pipeline.input_mean.tolist(),
        "input_std": model.pipeline.input_std.tolist(),
        "sigma0_sq": float(model.sigma0_sq),
        "noise": float(model.noise),
        "phi_train": model.phi_train.tolist(),
        "y_mean": model.y_mean.tolist(),
        "y_std": model.y_std.tolist(),
        "alpha": model.alpha.tolist(),
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def load_gp(path) -> GpModel:
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict) or doc.get("schema") != GP_SCHEMA:
        raise ValueError(f"{path} is not a {GP_SCHEMA} document")
    pipeline = FeaturePipeline(np.asarray(doc["input_mean"], dtype=float),
                               np.asarray(doc["input_std"], dtype=float))
    phi = np.asarray(doc["phi_train"], dtype=float)
    sigma0_sq = float(doc["sigma0_sq"])
    noise = float(doc["noise"])
    chol = _factorize(phi, sigma0_sq, noise)
    return GpModel(pipeline, sigma0_sq, noise, phi,
                   np.asarray(doc["y_mean"], dtype=float),
                   np.asarray(doc["y_std"], dtype=float),
                   chol,
                   np.asarray(doc["alpha"], dtype=float))
