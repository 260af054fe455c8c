"""
Empirical-Bayes estimation of the GIGG hyperparameters.

Two routes are provided:
  - mmle_iterate: the marginal maximum likelihood fixed-point updates
        a_g <- ψ₀⁻¹(E[log γ_g² | y]),  b_g <- ψ₀⁻¹(-mean_j E[log λ_gj² | y])
    fed by Monte Carlo expectations from a running Gibbs chain.
  - calibrate_b_from_target_correlation: choose b_g so that the prior
    within-group correlation of shrinkage factors matches a target.
"""

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import CalibrationError, NumericError, ParameterDomainError
from .model import Hyperparameters

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------
DEFAULT_MMLE_TOL = 1e-3
DEFAULT_MMLE_MAX_ITERS = 100
DEFAULT_MMLE_WINDOW = 500       # sweeps feeding each expectation
DEFAULT_MMLE_PERIOD = 100       # update grid, in burn-in sweeps

DIGAMMA_TOL = 1e-12
DIGAMMA_MAX_ITERS = 100
EULER_GAMMA = 0.5772156649015329

CALIBRATION_BRACKET = (1e-3, 64.0)
CALIBRATION_TOL = 0.02
CALIBRATION_REPLICATES = 100_000
CALIBRATION_MAX_BISECTIONS = 60


@dataclass(frozen=True)
class MmleSettings:
    """Controls for the interleaved MMLE updates.

    a_g stays at its starting value (1/n by default) unless estimate_a.
    """

    estimate_a: bool = False
    tol: float = DEFAULT_MMLE_TOL
    max_iters: int = DEFAULT_MMLE_MAX_ITERS
    mc_draws: int = DEFAULT_MMLE_WINDOW
    period: int = DEFAULT_MMLE_PERIOD

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterDomainError(f"MMLE tol must be positive, got {self.tol}")
        if self.max_iters < 1 or self.mc_draws < 1 or self.period < 1:
            raise ParameterDomainError("MMLE max_iters, mc_draws and period must be >= 1")


# ---------------------------------------------------------------------------
# Digamma inverse
# ---------------------------------------------------------------------------

def digamma_inverse(y: float) -> float:
    """Solve ψ₀(x) = y for x > 0 by Newton iteration.

    The residual tolerance is DIGAMMA_TOL * max(1, |y|): the absolute 1e-12
    for |y| <= 1 and relative beyond it, where |ψ₀(x) - y| cannot get below
    the float spacing of y (about 1e-13 at y = -1000).
    """
    y = float(y)
    if not np.isfinite(y):
        raise ParameterDomainError(f"digamma_inverse needs a finite argument, got {y}")
    x = np.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + EULER_GAMMA)
    tol = DIGAMMA_TOL * max(1.0, abs(y))
    for _ in range(DIGAMMA_MAX_ITERS):
        resid = special.digamma(x) - y
        if abs(resid) < tol:
            return float(x)
        step = resid / special.polygamma(1, x)
        x_new = x - step
        x = x_new if x_new > 0 else x / 2.0
    resid = special.digamma(x) - y
    if abs(resid) < tol:
        return float(x)
    raise NumericError(f"digamma_inverse({y}) did not converge", achieved=float(x))


# ---------------------------------------------------------------------------
# Expectation provider
# ---------------------------------------------------------------------------

class ScaleTrace:
    """Rolling window of log γ² and log λ² from the most recent sweeps.

    Serves as the expectation provider for mmle_iterate. The sampler clears
    it after every update so each window is drawn under one set of
    hyperparameters.
    """

    def __init__(self, group_sizes, window: int = DEFAULT_MMLE_WINDOW):
        sizes = np.asarray(group_sizes, dtype=int)
        self.group_index = np.repeat(np.arange(sizes.size), sizes)
        self.window = int(window)
        self._log_gamma2: deque = deque(maxlen=window)
        self._log_lambda2: deque = deque(maxlen=window)

    def __len__(self) -> int:
        return len(self._log_gamma2)

    @property
    def full(self) -> bool:
        return len(self) >= self.window

    def clear(self) -> None:
        self._log_gamma2.clear()
        self._log_lambda2.clear()

    def push(self, gamma2: np.ndarray, lambda2: np.ndarray) -> None:
        self._log_gamma2.append(np.log(gamma2))
        self._log_lambda2.append(np.log(lambda2))

    def expected_log_gamma2(self) -> np.ndarray:
        return np.mean(np.asarray(self._log_gamma2), axis=0)

    def expected_log_lambda2(self) -> np.ndarray:
        return np.mean(np.asarray(self._log_lambda2), axis=0)


def mmle_iterate(provider, hyper: Hyperparameters, settings: MmleSettings) -> tuple[Hyperparameters, bool]:
    """One MMLE update of (a, b) from the provider's expectations.

    Args:
        provider: object with expected_log_gamma2() (length G),
            expected_log_lambda2() (length p) and a group_index array.
        hyper: current hyperparameters.
        settings: MmleSettings.

    Returns:
        (updated hyperparameters, converged flag) where converged means the
        summed squared change of a and b is below settings.tol.
    """
    e_log_gamma2 = np.asarray(provider.expected_log_gamma2(), dtype=float)
    e_log_lambda2 = np.asarray(provider.expected_log_lambda2(), dtype=float)
    index = np.asarray(provider.group_index)
    counts = np.bincount(index, minlength=hyper.G)
    mean_log_lambda2 = np.bincount(index, weights=e_log_lambda2, minlength=hyper.G) / counts

    new_a = hyper.a.copy()
    new_b = hyper.b.copy()
    for g in range(hyper.G):
        try:
            if settings.estimate_a:
                new_a[g] = digamma_inverse(e_log_gamma2[g])
            new_b[g] = digamma_inverse(-mean_log_lambda2[g])
        except NumericError as exc:
            raise NumericError(f"MMLE update for group {g}: {exc}", achieved=exc.achieved) from exc

    change = float(np.sum((new_a - hyper.a) ** 2) + np.sum((new_b - hyper.b) ** 2))
    log.debug("MMLE update: b=%s change=%.3g", np.array2string(new_b, precision=4), change)
    return Hyperparameters(new_a, new_b), change < settings.tol


# ---------------------------------------------------------------------------
# Calibration of b from a target shrinkage correlation
# ---------------------------------------------------------------------------

def _pooled_pair_correlation(kappa: np.ndarray) -> float:
    """Pearson correlation over all within-group pairs (j < k), pooled."""
    pg = kappa.shape[1]
    j, k = np.triu_indices(pg, k=1)
    first = kappa[:, j].ravel()
    second = kappa[:, k].ravel()
    if np.std(first) == 0 or np.std(second) == 0:
        return 0.0
    return float(np.corrcoef(first, second)[0, 1])


def calibrate_b_from_target_correlation(
    p_g: int,
    a: float,
    tau2: float,
    sigma2: float,
    target_rho: float,
    rng: np.random.Generator,
    replicates: int = CALIBRATION_REPLICATES,
    bracket: tuple[float, float] = CALIBRATION_BRACKET,
    tol: float = CALIBRATION_TOL,
) -> float:
    """Find b so the prior within-group correlation of κ matches target_rho.

    The prior draws share one set of uniforms across candidate b values
    (λ⁻² obtained by the gamma quantile function), so the correlation is a
    smooth deterministic function of b and geometric bisection applies.

    Raises:
        CalibrationError: p_g < 2, or target outside the bracket's range.
    """
    if p_g < 2:
        raise CalibrationError("within-group correlation needs at least two coefficients")
    if not 0.0 <= target_rho < 1.0:
        raise CalibrationError(f"target correlation must lie in [0, 1), got {target_rho}")
    for name, value in (("a", a), ("tau2", tau2), ("sigma2", sigma2)):
        if not value > 0:
            raise ParameterDomainError(f"{name} must be positive, got {value}")

    gamma2 = rng.gamma(a, 1.0, size=(replicates, 1))
    uniforms = rng.uniform(size=(replicates, p_g))
    ratio = tau2 / sigma2

    def correlation(b: float) -> float:
        inv_lambda2 = special.gammaincinv(b, uniforms)
        with np.errstate(divide="ignore", over="ignore"):
            kappa = 1.0 / (1.0 + ratio * gamma2 / inv_lambda2)
        return _pooled_pair_correlation(kappa)

    lo, hi = bracket
    rho_lo, rho_hi = correlation(lo), correlation(hi)
    log.debug("calibration bracket: rho(%g)=%.4f rho(%g)=%.4f", lo, rho_lo, hi, rho_hi)
    if abs(rho_lo - target_rho) <= tol:
        return lo
    if abs(rho_hi - target_rho) <= tol:
        return hi
    if not rho_lo < target_rho < rho_hi:
        raise CalibrationError(
            f"target correlation {target_rho} outside achievable range [{rho_lo:.4f}, {rho_hi:.4f}]",
            achievable=(rho_lo, rho_hi),
        )

    for _ in range(CALIBRATION_MAX_BISECTIONS):
        mid = float(np.sqrt(lo * hi))
        rho_mid = correlation(mid)
        if abs(rho_mid - target_rho) <= tol:
            log.info("calibrated b=%.4g (correlation %.4f, target %.4f)", mid, rho_mid, target_rho)
            return mid
        if rho_mid < target_rho:
            lo = mid
        else:
            hi = mid
    raise NumericError("b calibration bisection did not converge", achieved=float(np.sqrt(lo * hi)))
