"""Gaussian process regression with a polynomial trend (universal kriging).

The model is y(x) = F(x)·beta + Z(x): a generalized-least-squares trend over
a small basis (constant, or constant plus the coordinate projections) plus a
zero-mean stationary process Z whose covariance between two points is

    sigma_sq * exp(-sum_i (x_i - x'_i)**2 / theta_i).

Every linear solve is routed through one Cholesky factorization of the
jitter-regularized training covariance; nothing here inverts a matrix
explicitly (the dense-inverse formulation lives only in the test oracle).
Hyperparameters are selected by maximizing the log marginal likelihood over
a logarithmic theta grid with the process variance profiled out in closed
form.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, FitError, ParseError

__all__ = [
    "BasisExpansion",
    "Diagnostics",
    "GprModel",
    "Kernel",
    "Prediction",
    "SearchConfig",
    "TrainingSet",
    "build_covariance",
    "extend_covariance",
    "fit",
    "fit_hyperparameters",
    "gaussian_pdf",
    "kernel_correlation",
    "load_model",
    "log_marginal_likelihood",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
]

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-10
MAX_JITTER = 1e-4
SIGMA_SQ_FLOOR = 1e-30  # keeps log(sigma_sq) finite on zero-residual data

MODEL_SCHEMA = "gpr-model/1"

CONST = "const"
LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Hyperparameters of the correlation model.

    sigma_sq scales the process covariance, theta holds one squared
    correlation length per input dimension (larger theta, slower decay),
    and jitter is the diagonal regularizer added as a fraction of sigma_sq.
    """

    sigma_sq: float
    theta: np.ndarray
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        if theta.ndim != 1 or theta.size == 0:
            raise ValueError("theta must be a non-empty 1-d vector")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0.0):
            raise ValueError("every theta entry must be positive and finite")
        sigma_sq = float(self.sigma_sq)
        if not math.isfinite(sigma_sq) or sigma_sq <= 0.0:
            raise ValueError("sigma_sq must be positive and finite")
        jitter = float(self.jitter)
        if not math.isfinite(jitter) or jitter < 0.0:
            raise ValueError("jitter must be non-negative and finite")
        theta.setflags(write=False)
        object.__setattr__(self, "sigma_sq", sigma_sq)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "jitter", jitter)

    @property
    def ndim(self) -> int:
        return self.theta.size


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Observed inputs (N x d) and their targets (length N), no gaps allowed."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float).copy()
        targets = np.asarray(self.targets, dtype=float).copy()
        if inputs.ndim != 2:
            raise ValueError("inputs must be a 2-d array of shape (N, d)")
        if targets.ndim != 1:
            raise ValueError("targets must be a 1-d vector")
        n, d = inputs.shape
        if n < 1 or d < 1:
            raise ValueError("need at least one observation and one input dimension")
        if targets.shape[0] != n:
            raise ValueError(f"{n} input rows but {targets.shape[0]} targets")
        if not np.all(np.isfinite(inputs)) or not np.all(np.isfinite(targets)):
            raise ValueError("inputs and targets must be finite (no missing entries)")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def ndim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class BasisExpansion:
    """Ordered trend basis; the first function is always the constant 1.

    degree "const" keeps just the constant; "linear" appends the d
    coordinate projections.
    """

    degree: str = CONST

    def __post_init__(self) -> None:
        if self.degree not in (CONST, LINEAR):
            raise ValueError(f"unknown basis degree {self.degree!r}")

    def size(self, ndim: int) -> int:
        return 1 if self.degree == CONST else 1 + ndim

    def functions(self, ndim: int) -> list:
        """The basis as callables on d-vectors, constant first."""
        fns = [lambda x: 1.0]
        if self.degree == LINEAR:
            fns.extend((lambda x, i=i: float(x[i])) for i in range(ndim))
        return fns

    def design_matrix(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        ones = np.ones((inputs.shape[0], 1))
        if self.degree == CONST:
            return ones
        return np.hstack([ones, inputs])

    def design_row(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.degree == CONST:
            return np.ones(1)
        return np.concatenate([np.ones(1), x])


class Diagnostics:
    """Counters for numeric edge events on a fitted model; advisory only."""

    __slots__ = ("_lock", "variance_clamps")

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.variance_clamps = 0

    def record_variance_clamp(self) -> None:
        with self._lock:
            self.variance_clamps += 1


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and (clamped non-negative) variance at one point."""

    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GprModel:
    """Fitted state; immutable after fit and safe to share across threads.

    kernel.jitter reflects any diagonal escalation applied during fitting,
    so chol always factorizes covariance + kernel.jitter * sigma_sq * I.
    """

    training: TrainingSet
    kernel: Kernel
    basis: BasisExpansion
    beta: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    trend_whitened: np.ndarray  # chol^-1 F, reused by the variance solves
    trend_r: np.ndarray  # upper QR factor of trend_whitened
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def gaussian_pdf(y: float, mu: float, sigma: float) -> float:
    """Density of a normal distribution with mean mu and deviation sigma."""
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 0.0:
        raise ValueError("sigma must be positive and finite")
    z = (float(y) - float(mu)) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def kernel_correlation(x_j: np.ndarray, x_k: np.ndarray, kernel: Kernel) -> float:
    """Correlation exp(-sum_i (x_j[i]-x_k[i])**2 / theta_i), in (0, 1]."""
    x_j = np.asarray(x_j, dtype=float).reshape(-1)
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    if x_j.shape != x_k.shape or x_j.size != kernel.ndim:
        raise ValueError(
            f"dimension mismatch: points of size {x_j.size}/{x_k.size}, "
            f"kernel has {kernel.ndim} correlation lengths"
        )
    sq = np.sum((x_j - x_k) ** 2 / kernel.theta)
    return float(np.exp(-sq))


def _correlation_matrix(inputs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    diff = inputs[:, None, :] - inputs[None, :, :]
    sq = np.sum(diff**2 / theta, axis=-1)
    return np.exp(-sq)


def _cross_correlation(inputs: np.ndarray, x_new: np.ndarray, theta: np.ndarray) -> np.ndarray:
    sq = np.sum((inputs - x_new) ** 2 / theta, axis=1)
    return np.exp(-sq)


def build_covariance(inputs: np.ndarray, kernel: Kernel, regularized: bool = False) -> np.ndarray:
    """Covariance matrix sigma_sq * correlation over the input rows.

    With regularized=True, jitter * sigma_sq is added to the diagonal.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2:
        raise ValueError("inputs must be a 2-d array of shape (N, d)")
    if inputs.shape[1] != kernel.ndim:
        raise ValueError(
            f"inputs have {inputs.shape[1]} columns but kernel has {kernel.ndim} correlation lengths"
        )
    cov = kernel.sigma_sq * _correlation_matrix(inputs, kernel.theta)
    if regularized:
        cov[np.diag_indices_from(cov)] += kernel.jitter * kernel.sigma_sq
    return cov


def extend_covariance(
    cov_n: np.ndarray, inputs: np.ndarray, x_new: np.ndarray, kernel: Kernel
) -> tuple[np.ndarray, float]:
    """Cross-covariance column k and corner kappa for one new point.

    Stacking [[cov_n, k], [k.T, kappa]] reproduces build_covariance over the
    N+1 points element for element.
    """
    inputs = np.asarray(inputs, dtype=float)
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if cov_n.shape != (inputs.shape[0], inputs.shape[0]):
        raise ValueError("cov_n shape does not match the training inputs")
    if x_new.size != kernel.ndim or inputs.shape[1] != kernel.ndim:
        raise ValueError(
            f"dimension mismatch: new point of size {x_new.size}, "
            f"kernel has {kernel.ndim} correlation lengths"
        )
    k = kernel.sigma_sq * _cross_correlation(inputs, x_new, kernel.theta)
    return k, kernel.sigma_sq


def _cholesky_with_escalation(corr_reg_base: np.ndarray, base_jitter: float) -> tuple[np.ndarray, float]:
    """Factorize corr + jitter*I, escalating jitter x10 up to MAX_JITTER."""
    n = corr_reg_base.shape[0]
    jitter = base_jitter
    while True:
        try:
            chol = np.linalg.cholesky(corr_reg_base + jitter * np.eye(n))
            return chol, jitter
        except np.linalg.LinAlgError:
            nxt = DEFAULT_JITTER if jitter == 0.0 else jitter * 10.0
            if nxt > MAX_JITTER * (1.0 + 1e-12):
                raise FitError(
                    f"covariance is not positive definite even at jitter {jitter:g}"
                ) from None
            logger.debug("cholesky failed at jitter %g, escalating to %g", jitter, nxt)
            jitter = nxt


def _gls(chol: np.ndarray, design: np.ndarray, targets: np.ndarray):
    """Generalized least squares through the whitened system.

    Returns (whitened design, its upper QR factor, coefficients, whitened
    residual). Raises FitError when the whitened design is rank deficient.
    """
    ft = solve_triangular(chol, design, lower=True)
    yt = solve_triangular(chol, targets, lower=True)
    q, r_qr = np.linalg.qr(ft)
    diag = np.abs(np.diag(r_qr))
    tol = max(ft.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.size == 0 or diag.min() <= tol:
        raise FitError("trend system is singular (collinear or duplicate basis functions)")
    beta = solve_triangular(r_qr, q.T @ yt, lower=False)
    rho = yt - ft @ beta
    return ft, r_qr, beta, rho


def fit(training: TrainingSet, basis: BasisExpansion, kernel: Kernel) -> GprModel:
    """Fit trend coefficients and process state for the given kernel.

    Solves (F' C^-1 F) beta = F' C^-1 t against the jitter-regularized
    covariance, then precomputes alpha = C^-1 (t - F beta) for prediction.
    The returned model records the jitter actually used, including any
    escalation needed to make the factorization succeed.
    """
    if training.ndim != kernel.ndim:
        raise ValueError(
            f"training inputs have {training.ndim} columns but kernel has {kernel.ndim} correlation lengths"
        )
    p = basis.size(training.ndim)
    if p > training.n:
        raise FitError(
            f"trend system is underdetermined: {p} basis functions for {training.n} observations"
        )
    corr = _correlation_matrix(training.inputs, kernel.theta)
    chol_corr, jitter = _cholesky_with_escalation(corr, kernel.jitter)
    chol = math.sqrt(kernel.sigma_sq) * chol_corr
    design = basis.design_matrix(training.inputs)
    ft, r_qr, beta, rho = _gls(chol, design, training.targets)
    alpha = solve_triangular(chol.T, rho, lower=False)
    return GprModel(
        training=training,
        kernel=replace(kernel, jitter=jitter),
        basis=basis,
        beta=beta,
        chol=chol,
        alpha=alpha,
        trend_whitened=ft,
        trend_r=r_qr,
    )


def predict(model: GprModel, x_new: np.ndarray) -> Prediction:
    """Posterior mean and variance at one point.

    mean = F(x)·beta + k' alpha; variance = kappa - k' C^-1 k plus the
    trend-uncertainty term u' (F' C^-1 F)^-1 u with u = F(x) - F' C^-1 k,
    all through the stored Cholesky factor. Variances that round below
    zero are clamped to 0 and counted in model.diagnostics.
    """
    x = np.asarray(x_new, dtype=float).reshape(-1)
    if x.size != model.kernel.ndim:
        raise ValueError(
            f"point of size {x.size} does not match model dimension {model.kernel.ndim}"
        )
    k = model.kernel.sigma_sq * _cross_correlation(model.training.inputs, x, model.kernel.theta)
    kappa = model.kernel.sigma_sq
    f_row = model.basis.design_row(x)
    mean = float(f_row @ model.beta + k @ model.alpha)
    v = solve_triangular(model.chol, k, lower=True)
    u = f_row - model.trend_whitened.T @ v
    w = solve_triangular(model.trend_r.T, u, lower=True)
    variance = float(kappa - v @ v + w @ w)
    if variance < 0.0:
        model.diagnostics.record_variance_clamp()
        variance = 0.0
    return Prediction(mean=mean, variance=variance)


def log_marginal_likelihood(training: TrainingSet, basis: BasisExpansion, kernel: Kernel) -> float:
    """Log marginal likelihood of the targets with trend at its GLS value.

    Uses the same diagonal-escalation policy as fit, so the reported value
    corresponds to the covariance that would actually be factorized.
    """
    corr = _correlation_matrix(training.inputs, kernel.theta)
    chol_corr, _ = _cholesky_with_escalation(corr, kernel.jitter)
    chol = math.sqrt(kernel.sigma_sq) * chol_corr
    design = basis.design_matrix(training.inputs)
    _, _, _, rho = _gls(chol, design, training.targets)
    n = training.n
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (n * math.log(2.0 * math.pi) + logdet + float(rho @ rho))


@dataclass(frozen=True)
class SearchConfig:
    """Logarithmic theta grid for hyperparameter selection.

    The grid is shared across input dimensions: each cell evaluates an
    isotropic theta vector. steps == 1 degenerates to the single cell
    theta_min.
    """

    theta_min: float = 0.1
    theta_max: float = 10.0
    steps: int = 13
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ConfigError("theta grid is empty (steps must be >= 1)")
        if not (0.0 < self.theta_min <= self.theta_max):
            raise ConfigError(
                f"theta grid bounds must satisfy 0 < lower <= upper, "
                f"got {self.theta_min!r}:{self.theta_max!r}"
            )
        if self.jitter < 0.0:
            raise ConfigError("jitter must be non-negative")

    def grid(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.theta_min])
        return np.geomspace(self.theta_min, self.theta_max, self.steps)


def fit_hyperparameters(
    training: TrainingSet, basis: BasisExpansion, search: SearchConfig
) -> Kernel:
    """Pick sigma_sq and theta by grid-searched maximum marginal likelihood.

    For each grid theta the process variance is profiled out in closed form
    (residual quadratic form divided by N, floored to keep the likelihood
    finite on zero-residual data). The scan runs in ascending theta order
    and only a strictly larger likelihood replaces the incumbent, so ties
    resolve toward the smallest theta and then the smallest sigma_sq.
    """
    grid = search.grid()
    d = training.ndim
    design = basis.design_matrix(training.inputs)
    if basis.size(d) > training.n:
        raise FitError(
            f"trend system is underdetermined: {basis.size(d)} basis functions "
            f"for {training.n} observations"
        )
    n = training.n
    best: tuple[float, float, float] | None = None  # (loglik, theta, sigma_sq)
    for theta_scalar in grid:
        theta = np.full(d, float(theta_scalar))
        corr = _correlation_matrix(training.inputs, theta)
        try:
            chol_corr, _ = _cholesky_with_escalation(corr, search.jitter)
            _, _, _, rho = _gls(chol_corr, design, training.targets)
        except FitError:
            logger.debug("skipping theta=%g: not factorizable", theta_scalar)
            continue
        quad = float(rho @ rho)
        sigma_sq = max(quad / n, SIGMA_SQ_FLOOR)
        logdet_corr = 2.0 * float(np.sum(np.log(np.diag(chol_corr))))
        loglik = -0.5 * (
            n * math.log(2.0 * math.pi)
            + n * math.log(sigma_sq)
            + logdet_corr
            + quad / sigma_sq
        )
        if best is None or loglik > best[0]:
            best = (loglik, float(theta_scalar), sigma_sq)
    if best is None:
        raise FitError("no admissible theta grid cell: every candidate failed to factorize")
    _, theta_best, sigma_sq_best = best
    return Kernel(sigma_sq=sigma_sq_best, theta=np.full(d, theta_best), jitter=search.jitter)


def model_to_dict(model: GprModel) -> dict:
    """Versioned JSON-ready form: kernel, basis degree, beta, training data."""
    return {
        "schema": MODEL_SCHEMA,
        "kernel": {
            "sigma_sq": float(model.kernel.sigma_sq),
            "theta": model.kernel.theta.tolist(),
            "jitter": float(model.kernel.jitter),
        },
        "basis": model.basis.degree,
        "beta": model.beta.tolist(),
        "inputs": model.training.inputs.tolist(),
        "targets": model.training.targets.tolist(),
    }


def model_from_dict(payload: dict) -> GprModel:
    """Rebuild a fitted model from its serialized form.

    Refits deterministically from the stored training data and kernel (the
    stored jitter already includes any escalation, so the factorization is
    reproduced bit for bit on the same platform) and cross-checks the
    stored coefficients.
    """
    if not isinstance(payload, dict) or payload.get("schema") != MODEL_SCHEMA:
        raise ParseError(f"unsupported model document (expected schema {MODEL_SCHEMA!r})")
    try:
        kern = payload["kernel"]
        kernel = Kernel(
            sigma_sq=kern["sigma_sq"], theta=np.asarray(kern["theta"]), jitter=kern["jitter"]
        )
        basis = BasisExpansion(payload["basis"])
        training = TrainingSet(
            inputs=np.asarray(payload["inputs"]), targets=np.asarray(payload["targets"])
        )
        stored_beta = np.asarray(payload["beta"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    model = fit(training, basis, kernel)
    if stored_beta.shape != model.beta.shape or not np.allclose(
        stored_beta, model.beta, rtol=1e-6, atol=1e-8
    ):
        raise ParseError("stored trend coefficients do not match the refit model")
    return model


def save_model(model: GprModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path) -> GprModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(payload)
