"""
Convergence diagnostics and posterior summaries.

  - psrf: split-chain potential scale reduction factor
  - ess: effective sample size with initial-monotone-sequence truncation
  - batch_means_se: Monte Carlo standard error from batch means
  - summarize / summarize_chains: means, equal-tailed intervals, mean
    shrinkage factors, ESS and (for several chains) PSRF per coefficient
  - concentration_bound: σ²/(σ² + θ_max(X_gᵀX_g) τ²)
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import fft

from .errors import DegenerateChainError, NumericError, ParameterDomainError
from .model import shrinkage_factors

log = logging.getLogger(__name__)

MIN_CHAIN_LENGTH = 10
TRANSFORMS = ("identity", "fold_change")
POWER_TOL = 1e-10
POWER_MAX_ITERS = 100_000


@dataclass(frozen=True)
class ChainSummary:
    """Per-coefficient summary of β draws; psrf is None for a single chain."""

    names: list[str]
    groups: list[str]
    mean: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    kappa_mean: np.ndarray
    ess: np.ndarray
    ess_per_second: np.ndarray
    psrf: np.ndarray | None = None
    level: float = 0.95
    transform: str = "identity"

    def to_frame(self) -> pd.DataFrame:
        """Summary table; ess_per_second is left out so files do not depend on timing."""
        df = pd.DataFrame({
            "name": self.names,
            "group": self.groups,
            "mean": self.mean,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "kappa_mean": self.kappa_mean,
            "ess": self.ess,
        })
        if self.psrf is not None:
            df["psrf"] = self.psrf
        return df


# ---------------------------------------------------------------------------
# PSRF and ESS
# ---------------------------------------------------------------------------

def psrf(chains) -> float:
    """Split-chain PSRF √(((L-1)/L·W + B/L)/W) over the 2M half chains.

    Raises:
        DegenerateChainError: every half chain has zero variance.
    """
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    if len(chains) < 2:
        raise ParameterDomainError("psrf needs at least two chains")
    length = chains[0].size
    if any(c.size != length for c in chains):
        raise ParameterDomainError("psrf chains must have equal length")
    if length < MIN_CHAIN_LENGTH:
        raise ParameterDomainError(f"psrf needs chains of length >= {MIN_CHAIN_LENGTH}")

    half = length // 2
    halves = np.array([part for c in chains for part in (c[:half], c[length - half:])])
    within = float(np.mean(np.var(halves, axis=1, ddof=1)))
    if within == 0.0:
        raise DegenerateChainError("all chains have zero within-chain variance")
    between = half * float(np.var(np.mean(halves, axis=1), ddof=1))
    var_hat = (half - 1) / half * within + between / half
    return float(np.sqrt(var_hat / within))


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at every lag, computed by FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    centred = x - x.mean()
    size = fft.next_fast_len(2 * n)
    spectrum = fft.rfft(centred, size)
    acov = fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n
    if acov[0] <= 0:
        raise DegenerateChainError("constant draw sequence")
    return acov / acov[0]


def ess(draws) -> float:
    """N / (1 + 2 Σ ρ_k) with Geyer's initial monotone sequence truncation."""
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < MIN_CHAIN_LENGTH:
        raise ParameterDomainError(f"ess needs at least {MIN_CHAIN_LENGTH} draws")
    if np.all(x == x[0]):
        raise DegenerateChainError("constant draw sequence")
    rho = autocorrelation(x)
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    non_positive = np.flatnonzero(pairs <= 0)
    stop = non_positive[0] if non_positive.size else pairs.size
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * float(np.sum(pairs))
    tau = max(tau, 1.0 / np.log10(max(n, 10)))
    return float(n / tau)


def batch_means_se(draws, batch_size: int | None = None) -> float:
    """Monte Carlo standard error of the mean from non-overlapping batch means.

    The batch length defaults to ⌊√N⌋; trailing draws that do not fill a
    batch are dropped.
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < MIN_CHAIN_LENGTH:
        raise ParameterDomainError(f"batch means need at least {MIN_CHAIN_LENGTH} draws")
    size = int(np.sqrt(n)) if batch_size is None else int(batch_size)
    if size < 1 or n // size < 2:
        raise ParameterDomainError(f"batch length {size} leaves fewer than two batches of {n} draws")
    k = n // size
    means = x[: k * size].reshape(k, size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(k))


def _safe(fn, *args) -> float:
    try:
        return fn(*args)
    except DegenerateChainError:
        return float("nan")


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def fold_change(beta) -> np.ndarray:
    """Percent change for a twofold change of the covariate: 100·(2^β - 1)."""
    return 100.0 * np.expm1(np.asarray(beta, dtype=float) * np.log(2.0))


def summarize_chains(chains, level: float = 0.95, transform: str = "identity") -> ChainSummary:
    """Pool the β draws of one or more chains into a ChainSummary.

    ESS is summed over chains; PSRF is added when there are >= 2 chains.
    Coefficients with constant draws get NaN ESS / PSRF.
    """
    chains = list(chains)
    if not chains:
        raise ParameterDomainError("no chains to summarize")
    if not 0.0 < level < 1.0:
        raise ParameterDomainError(f"credible level must lie in (0, 1), got {level}")
    if transform not in TRANSFORMS:
        raise ParameterDomainError(f"transform must be one of {TRANSFORMS}, got {transform!r}")

    first = chains[0]
    mapped = [fold_change(c.beta_draws) if transform == "fold_change" else c.beta_draws for c in chains]
    pooled = np.vstack(mapped)
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(pooled, [tail, 1.0 - tail], axis=0)

    kappa = np.vstack([
        shrinkage_factors(c.tau2, c.sigma2, c.gamma2, c.lambda2, c.group_index).kappa
        for c in chains
    ])

    p = pooled.shape[1]
    ess_values = np.array([
        sum(_safe(ess, m[:, j]) for m in mapped) for j in range(p)
    ])
    wall = sum(c.wall_time for c in chains)
    ess_rate = ess_values / wall if wall > 0 else np.full(p, np.nan)
    psrf_values = None
    if len(chains) >= 2:
        psrf_values = np.array([_safe(psrf, [m[:, j] for m in mapped]) for j in range(p)])

    return ChainSummary(
        names=list(first.x_names),
        groups=[first.group_labels[g] for g in first.group_index],
        mean=pooled.mean(axis=0),
        ci_lower=lower,
        ci_upper=upper,
        kappa_mean=kappa.mean(axis=0),
        ess=ess_values,
        ess_per_second=ess_rate,
        psrf=psrf_values,
        level=level,
        transform=transform,
    )


def summarize(draws, level: float = 0.95, transform: str = "identity") -> ChainSummary:
    """Summary of a single chain."""
    return summarize_chains([draws], level, transform)


# ---------------------------------------------------------------------------
# Concentration bound
# ---------------------------------------------------------------------------

def largest_eigenvalue(A: np.ndarray, tol: float = POWER_TOL, max_iters: int = POWER_MAX_ITERS) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from a fixed vector so the result is deterministic; stops when
    the Rayleigh quotient changes by at most tol relative.
    """
    k = A.shape[0]
    v = np.linspace(1.0, 2.0, k)
    v /= np.linalg.norm(v)
    rq = float(v @ A @ v)
    for _ in range(max_iters):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        rq_new = float(v @ A @ v)
        if abs(rq_new - rq) <= tol * abs(rq_new):
            return rq_new
        rq = rq_new
    raise NumericError("power iteration did not converge", achieved=rq)


def concentration_bound(X_g, tau2: float, sigma2: float) -> float:
    """ε_g(τ², σ²) = σ²/(σ² + θ_max(X_gᵀX_g) τ²)."""
    X_g = np.atleast_2d(np.asarray(X_g, dtype=float))
    if X_g.size == 0:
        raise ParameterDomainError("X_g must be non-empty")
    if not (tau2 > 0 and sigma2 > 0):
        raise ParameterDomainError("tau2 and sigma2 must be positive")
    theta = largest_eigenvalue(X_g.T @ X_g)
    return float(sigma2 / (sigma2 + theta * tau2))
