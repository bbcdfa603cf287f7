"""Gaussian process regression with an SE kernel and optional linear mean.

Hyperparameters are fitted by minimizing the negative log marginal
likelihood with a derivative-free simplex search over log-transformed
kernel parameters (mean parameters ride along untransformed). All linear
algebra goes through a jittered Cholesky factorization; the Gram matrix is
never inverted explicitly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc

__all__ = [
    "GpError",
    "KernelParams",
    "LinearMean",
    "Dataset",
    "TrainedGp",
    "FitConfig",
    "se_kernel",
    "nlml",
    "fit_hyperparams",
    "posterior_predict",
    "posterior_predict_batch",
    "build_trained_gp",
    "gp_to_dict",
    "gp_from_dict",
    "save_gp",
    "load_gp",
]

LOG_2PI = math.log(2.0 * math.pi)

# Jitter schedule, relative to mean diagonal of the noisy Gram matrix.
JITTER_START = 1e-10
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0

# Restart offsets are drawn once from a fixed-seed Latin hypercube so that
# fits are reproducible across processes.
_RESTART_SEED = 1729


class GpError(RuntimeError):
    """Numerical failure inside a GP computation (factorization, fit)."""


@dataclass(frozen=True)
class KernelParams:
    """SE kernel hyperparameters: signal variance, per-dimension length
    scales and observation noise variance."""

    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive and finite")
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("length_scales must be a non-empty vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("length_scales must be positive and finite")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0 and finite")

    @property
    def input_dim(self) -> int:
        return self.length_scales.size


@dataclass(frozen=True)
class LinearMean:
    """Mean function a^T x + b, or identically zero when mode == "zero"."""

    slope: np.ndarray | None = None
    intercept: float = 0.0
    mode: str = "linear"

    def __post_init__(self):
        if self.mode not in ("linear", "zero"):
            raise ValueError(f"unknown mean mode {self.mode!r}")
        if self.mode == "linear":
            if self.slope is None:
                raise ValueError("linear mean requires a slope vector")
            slope = np.atleast_1d(np.asarray(self.slope, dtype=float))
            object.__setattr__(self, "slope", slope)
            if not np.all(np.isfinite(slope)) or not np.isfinite(self.intercept):
                raise ValueError("mean parameters must be finite")

    @classmethod
    def zero(cls) -> "LinearMean":
        return cls(slope=None, intercept=0.0, mode="zero")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode == "zero":
            return np.zeros(x.shape[0] if x.ndim == 2 else ())
        return x @ self.slope + self.intercept


@dataclass(frozen=True)
class Dataset:
    """Training inputs (N, D) and targets (N,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.atleast_1d(np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("inputs must be a non-empty (N, D) matrix")
        if y.shape != (x.shape[0],):
            raise ValueError("targets length must match number of input rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class TrainedGp:
    """Fitted GP: hyperparameters, mean, data and cached factorization.

    ``chol_factor`` is the lower Cholesky factor of K + sigma_w^2 I plus the
    jitter actually used; ``alpha`` solves (K + sigma_w^2 I) alpha = Y - m(X).
    """

    params: KernelParams
    mean: LinearMean
    dataset: Dataset
    chol_factor: np.ndarray
    alpha: np.ndarray
    jitter: float
    fit_info: dict = field(default_factory=dict, compare=False)

    def predict(self, x_star) -> tuple[float, float]:
        return posterior_predict(self, x_star)


@dataclass(frozen=True)
class FitConfig:
    """Budget for the simplex hyperparameter search.

    ``noise_ceiling`` caps the fitted noise variance (same units as the
    targets); use it when observations are known to be near-deterministic so
    the likelihood cannot explain structure away as noise.
    """

    restarts: int = 5
    maxiter: int | None = None
    fatol: float = 1e-7
    xatol: float = 1e-5
    noise_ceiling: float | None = None
    noise_floor_rel: float = 0.0
    mean_slope_penalty: float = 0.0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.noise_ceiling is not None and self.noise_ceiling <= 0:
            raise ValueError("noise_ceiling must be positive")
        if self.noise_floor_rel < 0 or self.mean_slope_penalty < 0:
            raise ValueError("noise_floor_rel and mean_slope_penalty must be >= 0")


def se_kernel(x, x_prime, params: KernelParams, include_noise: bool = False) -> float:
    """Squared-exponential covariance between two points.

    Adds the noise variance when ``include_noise`` and the points are
    elementwise equal.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != xp.shape or x.size != params.input_dim:
        raise ValueError(
            f"dimension mismatch: x {x.shape}, x' {xp.shape}, "
            f"params expect D={params.input_dim}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise ValueError("non-finite kernel input")
    diff = (x - xp) / params.length_scales
    value = params.signal_variance * math.exp(-0.5 * float(diff @ diff))
    if include_noise and np.array_equal(x, xp):
        value += params.noise_variance
    return value


def _cross_cov(x_star: np.ndarray, X: np.ndarray, params: KernelParams) -> np.ndarray:
    """k(x_star, X) row vector(s) without noise. x_star: (D,) or (G, D)."""
    xs = np.atleast_2d(x_star)
    diff = (xs[:, None, :] - X[None, :, :]) / params.length_scales
    sq = np.einsum("gnd,gnd->gn", diff, diff)
    return params.signal_variance * np.exp(-0.5 * sq)


def _gram(X: np.ndarray, params: KernelParams) -> np.ndarray:
    """Full noisy Gram matrix K + sigma_w^2 I."""
    diff = (X[:, None, :] - X[None, :, :]) / params.length_scales
    sq = np.einsum("ijd,ijd->ij", diff, diff)
    K = params.signal_variance * np.exp(-0.5 * sq)
    K[np.diag_indices_from(K)] += params.noise_variance
    return K


def _factorize(K_noisy: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky with escalating jitter. Returns (raw lower factor as produced
    by cho_factor, jitter used); callers needing a clean triangle tril it.

    The input matrix is consumed (diagonal adjusted in place); callers pass a
    freshly built Gram matrix.
    """
    n = K_noisy.shape[0]
    diag = K_noisy.ravel()[:: n + 1]  # view into the diagonal
    base = float(diag.sum()) / n
    jitter = JITTER_START * base
    limit = JITTER_MAX * base
    added = 0.0
    while True:
        diag += jitter - added
        added = jitter
        try:
            L, _ = cho_factor(K_noisy, lower=True, check_finite=False)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter *= JITTER_GROWTH
        if jitter > limit:
            raise GpError(
                f"Cholesky failed up to maximum jitter {limit:.3e}"
            ) from None


def _nlml_from_chol(L: np.ndarray, resid: np.ndarray) -> tuple[float, np.ndarray]:
    alpha = cho_solve((L, True), resid, check_finite=False)
    n = resid.size
    value = (
        0.5 * float(resid @ alpha)
        + float(np.sum(np.log(np.diag(L))))
        + 0.5 * n * LOG_2PI
    )
    return value, alpha


def nlml(dataset: Dataset, params: KernelParams, mean: LinearMean) -> float:
    """Negative log marginal likelihood -log p(Y | X, theta)."""
    if params.input_dim != dataset.dim:
        raise ValueError("params dimension does not match dataset")
    K = _gram(dataset.inputs, params)
    L, _ = _factorize(K)
    resid = dataset.targets - mean(dataset.inputs)
    value, _ = _nlml_from_chol(L, resid)
    return value


def build_trained_gp(
    dataset: Dataset,
    params: KernelParams,
    mean: LinearMean,
    fit_info: dict | None = None,
) -> TrainedGp:
    """Factorize and cache everything needed for posterior queries."""
    K = _gram(dataset.inputs, params)
    L, jitter = _factorize(K)
    resid = dataset.targets - mean(dataset.inputs)
    alpha = cho_solve((L, True), resid)
    return TrainedGp(
        params=params,
        mean=mean,
        dataset=dataset,
        chol_factor=np.tril(L),
        alpha=alpha,
        jitter=jitter,
        fit_info=fit_info or {},
    )


def _pack(log_kernel: np.ndarray, mean_vec: np.ndarray) -> np.ndarray:
    return np.concatenate([log_kernel, mean_vec])


def _unpack(theta: np.ndarray, dim: int, linear_mean: bool):
    log_kernel = theta[: dim + 2]
    params = KernelParams(
        signal_variance=math.exp(log_kernel[0]),
        length_scales=np.exp(log_kernel[1 : dim + 1]),
        noise_variance=math.exp(log_kernel[dim + 1]),
    )
    if linear_mean:
        mean = LinearMean(slope=theta[dim + 2 : 2 * dim + 2], intercept=theta[-1])
    else:
        mean = LinearMean.zero()
    return params, mean


@lru_cache(maxsize=64)
def _restart_grid(n_restarts: int, n_log: int, n_mean: int) -> np.ndarray:
    """Fixed Latin-hypercube offsets; first row is all zeros (init itself)."""
    total = n_log + n_mean
    offsets = np.zeros((n_restarts, total))
    if n_restarts > 1:
        sampler = qmc.LatinHypercube(d=total, seed=_RESTART_SEED)
        unit = sampler.random(n_restarts - 1)
        # log-kernel dims get +-2 in log space, mean dims +-1 in scaled units
        span = np.concatenate([np.full(n_log, 2.0), np.full(n_mean, 1.0)])
        offsets[1:] = (2.0 * unit - 1.0) * span
    offsets.setflags(write=False)
    return offsets


def fit_hyperparams(
    dataset: Dataset,
    init: KernelParams,
    mean_mode: str = "linear",
    opt_config: FitConfig | None = None,
) -> TrainedGp:
    """Fit hyperparameters (and mean parameters when linear) by simplex
    descent on the NLML, restarting from a fixed offset grid around ``init``.

    Deterministic given the same init and config.
    """
    if mean_mode not in ("linear", "zero"):
        raise ValueError(f"unknown mean_mode {mean_mode!r}")
    if init.input_dim != dataset.dim:
        raise ValueError("init dimension does not match dataset")
    cfg = opt_config or FitConfig()
    dim = dataset.dim
    linear = mean_mode == "linear"

    X = dataset.inputs
    y = dataset.targets
    y_var = float(np.var(y))
    y_scale = math.sqrt(y_var) if y_var > 0 else 1.0

    # Per-dimension squared differences, cached across NLML evaluations.
    sq_by_dim = (X[:, None, :] - X[None, :, :]) ** 2
    diag_idx = np.diag_indices(dataset.n)

    ceiling = cfg.noise_ceiling
    floor = cfg.noise_floor_rel * max(y_var, 1e-12)
    x_sd = np.std(X, axis=0)
    x_sd[x_sd == 0] = 1.0
    slope_weight = cfg.mean_slope_penalty * (x_sd / y_scale) ** 2

    def objective(theta: np.ndarray) -> float:
        for v in theta[: dim + 2]:
            if not (-45.0 < v < 45.0):  # also rejects NaN
                return np.inf
        sig = math.exp(theta[0])
        inv_ls2 = np.exp(-2.0 * theta[1 : dim + 1])
        noise = math.exp(theta[dim + 1])
        if (ceiling is not None and noise > ceiling) or noise < floor:
            return np.inf
        K = sig * np.exp(-0.5 * (sq_by_dim @ inv_ls2))
        K[diag_idx] += noise
        try:
            L, _ = _factorize(K)
        except GpError:
            return np.inf
        if linear:
            a = theta[dim + 2 : 2 * dim + 2]
            resid = y - (X @ a + theta[-1])
        else:
            resid = y
        value, _ = _nlml_from_chol(L, resid)
        if linear and cfg.mean_slope_penalty > 0:
            # weak Gaussian prior on standardized slope coefficients; zero at
            # the zero-slope init, so accepted fits never exceed the init NLML
            value += float(slope_weight @ (a * a))
        return value if np.isfinite(value) else np.inf

    noise_floor = max(1e-8 * max(y_var, 1.0), 2.0 * floor)
    noise0 = max(init.noise_variance, noise_floor)
    if ceiling is not None:
        noise0 = min(noise0, 0.5 * ceiling)
    log_kernel0 = np.concatenate(
        [
            [math.log(init.signal_variance)],
            np.log(init.length_scales),
            [math.log(noise0)],
        ]
    )
    if linear:
        x_scale = np.std(X, axis=0)
        x_scale[x_scale == 0] = 1.0
        mean_scale = np.concatenate([y_scale / x_scale, [y_scale]])
        mean0 = np.concatenate([np.zeros(dim), [float(np.mean(y))]])
    else:
        mean_scale = np.zeros(0)
        mean0 = np.zeros(0)

    theta0 = _pack(log_kernel0, mean0)
    init_nlml = objective(theta0)
    offsets = _restart_grid(cfg.restarts, dim + 2, mean0.size)

    maxiter = cfg.maxiter if cfg.maxiter is not None else 200 * theta0.size
    best_theta = None
    best_val = np.inf
    for off in offsets:
        start = theta0.copy()
        start[: dim + 2] += off[: dim + 2]
        if mean0.size:
            start[dim + 2 :] += off[dim + 2 :] * mean_scale
        if not np.isfinite(objective(start)):
            continue
        res = minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={
                "maxiter": maxiter,
                "fatol": cfg.fatol,
                "xatol": cfg.xatol,
                "adaptive": theta0.size > 6,
            },
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val = float(res.fun)
            best_theta = res.x

    if best_theta is None:
        raise GpError("all hyperparameter restarts failed to produce a finite NLML")
    # An accepted restart never worsens the init because the simplex keeps
    # its best vertex, but guard against pathological tolerance effects.
    if np.isfinite(init_nlml) and best_val > init_nlml:
        best_theta = theta0
        best_val = float(init_nlml)

    params, mean = _unpack(best_theta, dim, linear)
    pure_nlml = nlml(dataset, params, mean) if cfg.mean_slope_penalty > 0 else best_val
    info = {
        "nlml": float(pure_nlml),
        "objective": best_val,
        "init_nlml": float(init_nlml),
        "restarts": cfg.restarts,
    }
    return build_trained_gp(dataset, params, mean, fit_info=info)


def posterior_predict(gp: TrainedGp, x_star) -> tuple[float, float]:
    """Posterior mean and variance at a single query point."""
    means, variances = posterior_predict_batch(gp, np.atleast_2d(x_star))
    return float(means[0]), float(variances[0])


def posterior_predict_batch(gp: TrainedGp, x_star: np.ndarray):
    """Posterior means and variances at query rows (G, D)."""
    xs = np.atleast_2d(np.asarray(x_star, dtype=float))
    if xs.shape[1] != gp.dataset.dim:
        raise ValueError(
            f"query dimension {xs.shape[1]} does not match training dimension "
            f"{gp.dataset.dim}"
        )
    if not np.all(np.isfinite(xs)):
        raise ValueError("non-finite query point")
    ks = _cross_cov(xs, gp.dataset.inputs, gp.params)  # (G, N)
    means = gp.mean(xs) + ks @ gp.alpha
    v = solve_triangular(gp.chol_factor, ks.T, lower=True, check_finite=False)  # (N, G)
    prior = gp.params.signal_variance
    variances = prior - np.einsum("ng,ng->g", v, v)
    tol = max(gp.jitter, 1e-9 * prior)
    if np.any(variances < -tol):
        raise GpError(
            f"posterior variance {variances.min():.3e} below round-off tolerance; "
            "factorization is inconsistent"
        )
    return means, np.maximum(variances, 0.0)


def gp_to_dict(gp: TrainedGp) -> dict:
    """Self-describing form; the factorization is recomputed on load."""
    d = {
        "schema": "gp/v1",
        "signal_variance": gp.params.signal_variance,
        "length_scales": gp.params.length_scales.tolist(),
        "noise_variance": gp.params.noise_variance,
        "mean_mode": gp.mean.mode,
        "inputs": gp.dataset.inputs.tolist(),
        "targets": gp.dataset.targets.tolist(),
    }
    if gp.mean.mode == "linear":
        d["mean_slope"] = gp.mean.slope.tolist()
        d["mean_intercept"] = gp.mean.intercept
    return d


def gp_from_dict(d: dict) -> TrainedGp:
    params = KernelParams(
        signal_variance=d["signal_variance"],
        length_scales=np.asarray(d["length_scales"], dtype=float),
        noise_variance=d["noise_variance"],
    )
    if d["mean_mode"] == "linear":
        mean = LinearMean(
            slope=np.asarray(d["mean_slope"], dtype=float),
            intercept=float(d["mean_intercept"]),
        )
    else:
        mean = LinearMean.zero()
    dataset = Dataset(
        inputs=np.asarray(d["inputs"], dtype=float),
        targets=np.asarray(d["targets"], dtype=float),
    )
    return build_trained_gp(dataset, params, mean)


def save_gp(gp: TrainedGp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(gp_to_dict(gp), fh, indent=2, sort_keys=True)


def load_gp(path) -> TrainedGp:
    with open(path, encoding="utf-8") as fh:
        return gp_from_dict(json.load(fh))
