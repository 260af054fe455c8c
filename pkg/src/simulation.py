"""
Simulation harness for comparing GIGG regression with OLS.

Generative model: C = [1, q standard-normal columns], α = (0, 1, ..., 1),
X ~ N(0, Σ_X) with unit variances, exchangeable correlation rho_within
inside each group and rho_between across groups, and σ² chosen so that
βᵀΣ_Xβ / (βᵀΣ_Xβ + σ²) equals the target R².

Replicate r draws its data from SeedSequence(seed, spawn_key=(r,)).
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

from .errors import CalibrationError, GiggError, InputValidationError, PatternError, ScenarioError
from .model import GroupedDesign, Hyperparameters
from .multichain import map_ordered
from .sampler import SamplerConfig, run_chain

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------
DEFAULT_N = 500
DEFAULT_GROUP_SIZES = (10, 10, 10, 10, 10)
DEFAULT_RHO_WITHIN = 0.8
MEDIUM_RHO_WITHIN = 0.6
DEFAULT_RHO_BETWEEN = 0.2
DEFAULT_R_SQUARED = 0.7
DEFAULT_Q_ADJUST = 5

PATTERNS = ("concentrated", "distributed", "random")
CONCENTRATED_VALUES = (0.5, 1.0, 1.5, 2.0, 2.0)
RANDOM_CONCENTRATED = 5.125
RANDOM_DISTRIBUTED = 0.25
RANDOM_GROUP_PROBS = (0.2, 0.2)     # concentrated, distributed; remainder no signal

MSE_UNITS = ("cell", "replicate_sum")


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

def block_covariance(group_sizes, rho_within: float, rho_between: float) -> np.ndarray:
    """Unit-diagonal covariance with exchangeable within/between-group blocks."""
    sizes = np.asarray(group_sizes, dtype=int)
    index = np.repeat(np.arange(sizes.size), sizes)
    same = index[:, None] == index[None, :]
    sigma = np.where(same, rho_within, rho_between).astype(float)
    np.fill_diagonal(sigma, 1.0)
    return sigma


@dataclass(frozen=True)
class SimulationScenario:
    """One simulation setting; coeff_pattern is a pattern name or an explicit vector."""

    n: int = DEFAULT_N
    group_sizes: tuple[int, ...] = DEFAULT_GROUP_SIZES
    rho_within: float = DEFAULT_RHO_WITHIN
    rho_between: float = DEFAULT_RHO_BETWEEN
    coeff_pattern: str | tuple[float, ...] = "concentrated"
    r_squared: float = DEFAULT_R_SQUARED
    q_adjust: int = DEFAULT_Q_ADJUST
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if not isinstance(self.coeff_pattern, str):
            object.__setattr__(self, "coeff_pattern", tuple(float(v) for v in self.coeff_pattern))
        if self.n < 1:
            raise ScenarioError(f"n must be >= 1, got {self.n}")
        if not self.group_sizes or min(self.group_sizes) < 1:
            raise ScenarioError(f"group sizes must be positive, got {self.group_sizes}")
        if not -1.0 < self.rho_within < 1.0:
            raise ScenarioError(f"rho_within must lie in (-1, 1), got {self.rho_within}")
        if not -1.0 < self.rho_between < 1.0:
            raise ScenarioError(f"rho_between must lie in (-1, 1), got {self.rho_between}")
        if not 0.0 < self.r_squared < 1.0:
            raise ScenarioError(f"r_squared must lie in (0, 1), got {self.r_squared}")
        if self.q_adjust < 0:
            raise ScenarioError(f"q_adjust must be >= 0, got {self.q_adjust}")
        if isinstance(self.coeff_pattern, str) and self.coeff_pattern not in PATTERNS:
            raise ScenarioError(f"unknown coefficient pattern {self.coeff_pattern!r}; expected {PATTERNS} or a vector")
        try:
            np.linalg.cholesky(self.sigma_x)
        except np.linalg.LinAlgError as exc:
            raise ScenarioError(
                f"implied covariance is not positive definite (rho_within={self.rho_within}, "
                f"rho_between={self.rho_between})"
            ) from exc

    @property
    def p(self) -> int:
        return sum(self.group_sizes)

    @property
    def sigma_x(self) -> np.ndarray:
        return block_covariance(self.group_sizes, self.rho_within, self.rho_between)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        pattern = self.coeff_pattern if isinstance(self.coeff_pattern, str) else "explicit"
        return f"{pattern}-rho{self.rho_within:g}"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["group_sizes"] = list(self.group_sizes)
        if not isinstance(self.coeff_pattern, str):
            out["coeff_pattern"] = list(self.coeff_pattern)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationScenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"invalid scenario: {exc}") from exc


PRESETS = {
    "concentrated": SimulationScenario(coeff_pattern="concentrated"),
    "distributed": SimulationScenario(coeff_pattern="distributed"),
    "random": SimulationScenario(coeff_pattern="random"),
    "concentrated-medium": SimulationScenario(coeff_pattern="concentrated", rho_within=MEDIUM_RHO_WITHIN),
    "distributed-medium": SimulationScenario(coeff_pattern="distributed", rho_within=MEDIUM_RHO_WITHIN),
}


def load_scenario(path: str | Path) -> SimulationScenario:
    """Read a JSON scenario file (keys mirror SimulationScenario fields)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario {path} must be a JSON object")
    return SimulationScenario.from_dict(data)


# ---------------------------------------------------------------------------
# Coefficients and noise
# ---------------------------------------------------------------------------

def coefficient_vector(pattern, group_sizes, rng: np.random.Generator | None = None) -> np.ndarray:
    """Regression coefficients for a named pattern or an explicit vector.

    concentrated: one signal per group at its first slot, values
        CONCENTRATED_VALUES.
    distributed: group 1 carries (0.5 x 5, 1 x 5); all other groups null.
    random: group 1 concentrated (5.125) or distributed (0.25 x 10) with
        probability 1/2 each; every other group concentrated, distributed or
        null with probabilities 0.2 / 0.2 / 0.6.
    """
    sizes = [int(s) for s in group_sizes]
    p = sum(sizes)
    if not isinstance(pattern, str):
        beta = np.asarray(pattern, dtype=float)
        if beta.shape != (p,):
            raise PatternError(f"explicit coefficient vector has length {beta.size}, expected {p}")
        return beta

    if pattern in ("concentrated", "distributed") and sizes != [10] * 5:
        raise PatternError(f"{pattern} pattern needs five groups of 10, got {sizes}")
    if pattern == "random" and any(s != 10 for s in sizes):
        raise PatternError(f"random pattern needs groups of 10, got {sizes}")

    beta = np.zeros(p)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    if pattern == "concentrated":
        beta[offsets] = CONCENTRATED_VALUES
    elif pattern == "distributed":
        beta[:5] = 0.5
        beta[5:10] = 1.0
    elif pattern == "random":
        if rng is None:
            raise PatternError("random pattern needs a random generator")
        for g, start in enumerate(offsets):
            u = rng.uniform()
            if g == 0:
                kind = "concentrated" if u < 0.5 else "distributed"
            elif u < RANDOM_GROUP_PROBS[0]:
                kind = "concentrated"
            elif u < sum(RANDOM_GROUP_PROBS):
                kind = "distributed"
            else:
                continue
            if kind == "concentrated":
                beta[start] = RANDOM_CONCENTRATED
            else:
                beta[start:start + sizes[g]] = RANDOM_DISTRIBUTED
    else:
        raise PatternError(f"unknown coefficient pattern {pattern!r}")
    return beta


def calibrate_noise(beta, sigma_x, r2: float) -> float:
    """σ² = βᵀΣ_Xβ (1 - R²)/R²."""
    if not 0.0 < r2 < 1.0:
        raise CalibrationError(f"target R^2 must lie in (0, 1), got {r2}")
    beta = np.asarray(beta, dtype=float)
    signal = float(beta @ np.asarray(sigma_x) @ beta)
    if signal <= 0.0:
        raise CalibrationError("cannot calibrate noise for an all-zero coefficient vector")
    return signal * (1.0 - r2) / r2


def group_signal_contribution(beta, sigma_x, group_sizes) -> np.ndarray:
    """β_gᵀ Σ_gg β_g for every group g."""
    beta = np.asarray(beta, dtype=float)
    sigma_x = np.asarray(sigma_x, dtype=float)
    sizes = np.asarray(group_sizes, dtype=int)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return np.array([
        beta[lo:hi] @ sigma_x[lo:hi, lo:hi] @ beta[lo:hi]
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ])


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulatedDataset:
    design: GroupedDesign
    beta: np.ndarray
    alpha: np.ndarray
    sigma2: float


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replicate),)))


def generate_dataset(s: SimulationScenario, replicate: int = 0) -> SimulatedDataset:
    """Draw one replicate (coefficients, C, X, y) of the scenario."""
    rng = replicate_rng(s.seed, replicate)
    sigma_x = s.sigma_x
    beta = coefficient_vector(s.coeff_pattern, s.group_sizes, rng)
    sigma2 = calibrate_noise(beta, sigma_x, s.r_squared)

    chol = np.linalg.cholesky(sigma_x)
    X = rng.standard_normal((s.n, s.p)) @ chol.T
    C = np.hstack([np.ones((s.n, 1)), rng.standard_normal((s.n, s.q_adjust))])
    alpha = np.concatenate([[0.0], np.ones(s.q_adjust)])
    y = C @ alpha + X @ beta + np.sqrt(sigma2) * rng.standard_normal(s.n)

    design = GroupedDesign(
        y=y, C=C, X=X, group_sizes=np.array(s.group_sizes),
        c_names=["intercept"] + [f"c{k + 1}" for k in range(s.q_adjust)],
    )
    return SimulatedDataset(design=design, beta=beta, alpha=alpha, sigma2=sigma2)


# ---------------------------------------------------------------------------
# Methods
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """A method token: ols, horseshoe, gigg-mmle or gigg-fixed:a,b ("1/n" allowed)."""

    token: str
    kind: str
    a: str = ""
    b: str = ""


def _parse_hyper_value(raw: str, token: str) -> str:
    raw = raw.strip()
    if raw == "1/n":
        return raw
    try:
        value = float(raw)
    except ValueError as exc:
        raise InputValidationError(f"bad hyperparameter {raw!r} in method {token!r}") from exc
    if not value > 0:
        raise InputValidationError(f"hyperparameters must be positive in method {token!r}")
    return raw


def parse_method(token: str) -> MethodSpec:
    token = token.strip()
    if token in ("ols", "horseshoe", "gigg-mmle"):
        return MethodSpec(token, token)
    if token.startswith("gigg-fixed:"):
        parts = token.split(":", 1)[1].split(",")
        if len(parts) != 2:
            raise InputValidationError(f"method {token!r} must look like gigg-fixed:a,b")
        return MethodSpec(token, "gigg-fixed", _parse_hyper_value(parts[0], token),
                          _parse_hyper_value(parts[1], token))
    raise InputValidationError(
        f"unknown method {token!r}; expected ols, horseshoe, gigg-mmle or gigg-fixed:a,b"
    )


def _resolve(raw: str, n: int) -> float:
    return 1.0 / n if raw == "1/n" else float(raw)


def ols_estimate(design: GroupedDesign) -> np.ndarray:
    """Least-squares β from a joint fit on [C, X]."""
    features = np.hstack([design.C, design.X])
    model = LinearRegression(fit_intercept=False).fit(features, design.y)
    return model.coef_[design.q:]


def replicate_chain_seed(seed: int, replicate: int) -> int:
    """Sampler seed for a replicate, independent of its data stream."""
    state = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),)).generate_state(1, np.uint64)
    return int(state[0])


def estimate_beta(method: MethodSpec, data: SimulatedDataset, sampler: SamplerConfig,
                  seed: int = 0) -> np.ndarray:
    """Point estimate of β: OLS, or the posterior mean of a GIGG chain."""
    design = data.design
    if method.kind == "ols":
        return ols_estimate(design)

    n = design.n
    config = SamplerConfig(
        burn_in=sampler.burn_in, draws=sampler.draws, thin=sampler.thin, seed=seed,
        beta_strategy=sampler.beta_strategy, mmle=sampler.mmle,
        hyper_mode="mmle_b" if method.kind == "gigg-mmle" else "fixed",
    )
    if method.kind == "horseshoe":
        design = GroupedDesign(
            y=design.y, C=design.C, X=design.X, group_sizes=np.ones(design.p, dtype=int),
            x_names=design.x_names, c_names=design.c_names,
        )
        hyper = Hyperparameters.uniform(design.G, 0.5, 0.5)
    elif method.kind == "gigg-mmle":
        hyper = Hyperparameters.uniform(design.G, 1.0 / n, 0.5)
    else:
        hyper = Hyperparameters.uniform(design.G, _resolve(method.a, n), _resolve(method.b, n))
    draws = run_chain(design, hyper, config)
    return draws.beta_draws.mean(axis=0)


# ---------------------------------------------------------------------------
# Simulation runs
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    scenario: SimulationScenario
    truths: np.ndarray
    estimates: dict[str, np.ndarray]
    failures: list[dict] = field(default_factory=list)


def run_replicate(scenario: SimulationScenario, replicate: int, methods: list[MethodSpec],
                  sampler: SamplerConfig) -> tuple[np.ndarray, dict[str, np.ndarray], list[dict]]:
    """Estimates of every method on one replicate; failed methods give NaN rows."""
    data = generate_dataset(scenario, replicate)
    seed = replicate_chain_seed(scenario.seed, replicate)
    estimates, failures = {}, []
    for method in methods:
        try:
            estimates[method.token] = estimate_beta(method, data, sampler, seed)
        except GiggError as exc:
            log.warning("replicate %d, method %s failed: %s", replicate, method.token, exc)
            failures.append({"replicate": replicate, "method": method.token, "error": str(exc)})
            estimates[method.token] = np.full(scenario.p, np.nan)
    return data.beta, estimates, failures


def run_simulation(
    scenario: SimulationScenario,
    methods: list[MethodSpec],
    replicates: int,
    sampler: SamplerConfig,
    threads: int = 1,
    progress: bool = False,
) -> SimulationResult:
    """Run every method on `replicates` independent datasets."""
    if replicates < 1:
        raise InputValidationError(f"replicates must be >= 1, got {replicates}")
    log.info("Simulating %s: %d replicate(s), methods=%s", scenario.label, replicates,
             [m.token for m in methods])
    outputs = map_ordered(
        lambda r: run_replicate(scenario, r, methods, sampler),
        list(range(replicates)), threads, desc=scenario.label, progress=progress,
    )
    truths = np.vstack([out[0] for out in outputs])
    estimates = {m.token: np.vstack([out[1][m.token] for out in outputs]) for m in methods}
    failures = [f for out in outputs for f in out[2]]
    return SimulationResult(scenario, truths, estimates, failures)


# ---------------------------------------------------------------------------
# MSE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MseReport:
    """Stratified MSE; a stratum with no cells is None."""

    null_mse: float | None
    nonnull_mse: float | None
    null_count: int
    nonnull_count: int
    units: str


def mse_report(estimates, truths, units: str = "cell") -> MseReport:
    """Squared error stratified by null (truth 0) and non-null coefficients.

    units="cell" averages over all (replicate, coefficient) cells of a
    stratum; units="replicate_sum" sums over the stratum within each replicate and
    averages over replicates. Replicates with NaN estimates are skipped.
    """
    if units not in MSE_UNITS:
        raise InputValidationError(f"units must be one of {MSE_UNITS}, got {units!r}")
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.atleast_2d(np.asarray(truths, dtype=float))
    if est.shape != truth.shape:
        raise InputValidationError(f"estimate shape {est.shape} does not match truth shape {truth.shape}")
    keep = ~np.any(np.isnan(est), axis=1)
    est, truth = est[keep], truth[keep]
    sq = (est - truth) ** 2
    null = truth == 0

    def stratum(mask):
        count = int(mask.sum())
        if count == 0:
            return None, 0
        if units == "cell":
            return float(sq[mask].mean()), count
        return float(np.where(mask, sq, 0.0).sum(axis=1).mean()), count

    null_mse, null_count = stratum(null)
    nonnull_mse, nonnull_count = stratum(~null)
    return MseReport(null_mse, nonnull_mse, null_count, nonnull_count, units)


def mse_table(result: SimulationResult, units: str = "replicate_sum") -> pd.DataFrame:
    """One row per method x stratum."""
    rows = []
    for token, est in result.estimates.items():
        report = mse_report(est, result.truths, units)
        ok = int((~np.any(np.isnan(est), axis=1)).sum())
        for stratum, value, count in (
            ("null", report.null_mse, report.null_count),
            ("non-null", report.nonnull_mse, report.nonnull_count),
        ):
            rows.append({
                "scenario": result.scenario.label,
                "method": token,
                "stratum": stratum,
                "mse": np.nan if value is None else value,
                "cells": count,
                "replicates": ok,
                "units": units,
            })
    return pd.DataFrame(rows)
