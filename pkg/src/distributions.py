"""
Densities and random-variate generators for the distributions the GIGG
model is built from: generalized inverse Gaussian (GIG), beta prime,
gamma, inverse gamma and half-Cauchy.

Parameterizations:
    GIG(λ, ψ, χ)      x^{λ-1} exp(-(χ/x + ψx)/2), normalized by
                      (ψ/χ)^{λ/2} / (2 K_λ(√(ψχ)))
    beta prime (a, b) Γ(a+b)/(Γ(a)Γ(b)) x^{a-1} (1+x)^{-a-b}
    gamma (a, b)      shape a, rate b
    inverse gamma     shape a, scale b: b^a/Γ(a) x^{-a-1} exp(-b/x)
    half-Cauchy (s)   2 / (π s (1 + (x/s)^2)) on x > 0

All samplers take an explicit numpy Generator and touch no global state.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import NumericError, ParameterDomainError

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------
SCALE_FLOOR = 1e-300
SCALE_CAP = 1e300

# Below this value of ψχ (and for |λ| >= 1) the GIG law is replaced by its
# gamma / inverse-gamma limit; the neglected mass is O((ψχ/2)^|λ|).
GIG_LIMIT_PSICHI = 1e-10

BASIC_KINDS = ("gamma", "inverse_gamma", "half_cauchy")


# ---------------------------------------------------------------------------
# Generalized inverse Gaussian parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GigParams:
    """Parameters (λ, ψ, χ) of a proper GIG distribution."""

    lam: float
    psi: float
    chi: float

    def __post_init__(self):
        lam, psi, chi = self.lam, self.psi, self.chi
        if not all(math.isfinite(v) for v in (lam, psi, chi)):
            raise ParameterDomainError(f"GIG parameters must be finite, got {self}")
        if psi < 0 or chi < 0:
            raise ParameterDomainError(f"GIG rates must be non-negative, got {self}")
        if lam >= 0 and psi <= 0:
            raise ParameterDomainError(f"improper GIG: λ={lam} >= 0 requires ψ > 0")
        if lam <= 0 and chi <= 0:
            raise ParameterDomainError(f"improper GIG: λ={lam} <= 0 requires χ > 0")

    @classmethod
    def floored(cls, lam: float, psi: float, chi: float) -> "GigParams":
        """Build parameters after flooring ψ and χ at SCALE_FLOOR.

        Upstream quantities that underflowed to zero become proper rates.
        """
        return cls(float(lam), max(float(psi), SCALE_FLOOR), max(float(chi), SCALE_FLOOR))

    @property
    def omega(self) -> float:
        return math.sqrt(self.psi * self.chi)


# ---------------------------------------------------------------------------
# Modified Bessel function of the second kind, log scale
# ---------------------------------------------------------------------------

def log_bessel_k(nu: float, x: float) -> float:
    """log K_ν(x) for x > 0, finite even where K_ν itself overflows.

    Uses the exponentially scaled scipy.special.kve; when that overflows
    (large order, small argument) falls back to the small-argument
    asymptote K_ν(x) ~ Γ(ν) 2^{ν-1} x^{-ν}.
    """
    nu = abs(float(nu))
    x = float(x)
    if x <= 0:
        raise ParameterDomainError(f"Bessel K argument must be positive, got {x}")
    scaled = special.kve(nu, x)
    if np.isfinite(scaled) and scaled > 0:
        return float(np.log(scaled) - x)
    if nu == 0.0:
        return float(np.log(-np.log(x / 2.0) - np.euler_gamma))
    if np.isinf(scaled):
        return float(special.gammaln(nu) + (nu - 1.0) * np.log(2.0) - nu * np.log(x))
    raise NumericError(f"log K_{nu}({x}) could not be evaluated", achieved=scaled)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def gig_logpdf(x, p: GigParams):
    """Log density of GIG(λ, ψ, χ); vectorized over x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterDomainError("GIG density is defined for x > 0 only")
    lam, psi, chi = p.lam, p.psi, p.chi
    log_norm = (
        0.5 * lam * (np.log(psi) - np.log(chi))
        - np.log(2.0)
        - log_bessel_k(lam, p.omega)
    )
    out = log_norm + (lam - 1.0) * np.log(x) - 0.5 * (chi / x + psi * x)
    return out if out.ndim else float(out)


def gig_pdf(x, p: GigParams):
    """Density of GIG(λ, ψ, χ), evaluated through gig_logpdf."""
    out = np.exp(gig_logpdf(x, p))
    return out if np.ndim(out) else float(out)


def gig_mean(p: GigParams) -> float:
    """E[X] = √(χ/ψ) K_{λ+1}(ω) / K_λ(ω)."""
    if p.psi <= 0:
        raise ParameterDomainError("GIG mean requires ψ > 0")
    w = p.omega
    return float(np.exp(
        0.5 * (np.log(p.chi) - np.log(p.psi))
        + log_bessel_k(p.lam + 1.0, w)
        - log_bessel_k(p.lam, w)
    ))


def beta_prime_logpdf(x, a: float, b: float):
    """Log density of the beta prime distribution; vectorized over x."""
    x = np.asarray(x, dtype=float)
    if a <= 0 or b <= 0 or np.any(x <= 0):
        raise ParameterDomainError(f"beta prime needs x, a, b > 0 (a={a}, b={b})")
    out = (a - 1.0) * np.log(x) - (a + b) * np.log1p(x) - special.betaln(a, b)
    return out if out.ndim else float(out)


def beta_prime_pdf(x, a: float, b: float):
    out = np.exp(beta_prime_logpdf(x, a, b))
    return out if np.ndim(out) else float(out)


def basic_pdf(x, kind: str, p1: float, p2: float):
    """Density of gamma(shape, rate), inverse gamma(shape, scale) or half-Cauchy(scale)."""
    _check_basic(kind, p1, p2)
    if kind == "gamma":
        return stats.gamma.pdf(x, p1, scale=1.0 / p2)
    if kind == "inverse_gamma":
        return stats.invgamma.pdf(x, p1, scale=p2)
    return stats.halfcauchy.pdf(x, scale=p2)


# ---------------------------------------------------------------------------
# Basic samplers
# ---------------------------------------------------------------------------

def _check_basic(kind: str, p1, p2) -> None:
    if kind not in BASIC_KINDS:
        raise ParameterDomainError(f"unknown distribution kind {kind!r}; expected one of {BASIC_KINDS}")
    if np.any(np.asarray(p2) <= 0) or (kind != "half_cauchy" and np.any(np.asarray(p1) <= 0)):
        raise ParameterDomainError(f"{kind} parameters must be positive (p1={p1}, p2={p2})")


def basic_sample(rng: np.random.Generator, kind: str, p1, p2, size=None):
    """Draw from gamma (shape p1, rate p2), inverse gamma (shape p1, scale p2)
    or half-Cauchy (scale p2; p1 ignored).

    p1 and p2 broadcast, so a vector of rates yields a vector of draws.
    """
    _check_basic(kind, p1, p2)
    if kind == "gamma":
        out = rng.gamma(p1, 1.0 / np.asarray(p2, dtype=float), size=size)
    elif kind == "inverse_gamma":
        out = np.asarray(p2, dtype=float) / rng.gamma(p1, 1.0, size=size)
    else:
        shape = size if size is not None else (np.shape(p2) or None)
        out = np.asarray(p2, dtype=float) * np.abs(rng.standard_cauchy(size=shape))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# GIG sampler
# ---------------------------------------------------------------------------
# Works on the two-parameter form GIG(λ, ω) with density ∝
# x^{λ-1} exp(-ω(x + 1/x)/2), λ >= 0; X = √(χ/ψ)·Y and negative orders use
# the reciprocal symmetry 1/Y ~ GIG(-λ, ω).

def _gig_mode(lam: float, omega: float) -> float:
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


def _rou_shift(rng: np.random.Generator, lam: float, omega: float) -> float:
    """Ratio-of-uniforms with mode shift (λ > 2 or ω > 3)."""
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)

    # roots of the cubic bounding the shifted acceptance region
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = (2.0 * a ** 3) / 27.0 - (a * b) / 3.0 + c
    arg = -q / (2.0 * math.sqrt(-(p ** 3) / 27.0))
    fi = math.acos(min(1.0, max(-1.0, arg)))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0

    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)

    while True:
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v + xm
        if x <= 0.0:
            continue
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


def _rou_noshift(rng: np.random.Generator, lam: float, omega: float) -> float:
    """Ratio-of-uniforms without mode shift (moderate λ and ω)."""
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)

    while True:
        u = um * rng.random()
        v = rng.random()
        if u <= 0.0 or v <= 0.0:
            continue
        x = u / v
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


def _bounded_hat(rng: np.random.Generator, lam: float, omega: float) -> float:
    """Rejection from a three-piece hat (0 <= λ < 1, small ω)."""
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    area0 = k0 * x0

    if x0 >= 2.0 / omega:
        k1 = 0.0
        area1 = 0.0
        k2 = x0 ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            area1 = k1 * math.log(2.0 / (omega * omega))
        else:
            area1 = k1 / lam * ((2.0 / omega) ** lam - x0 ** lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-1.0) / omega

    total = area0 + area1 + area2
    tail_start = max(x0, 2.0 / omega)

    while True:
        v = total * rng.random()
        if v <= area0:
            x = x0 * v / area0
            hx = k0
        elif v - area0 <= area1:
            v -= area0
            if lam == 0.0:
                x = x0 * math.exp(v / k1)
                hx = k1 / x
            else:
                x = (x0 ** lam + lam / k1 * v) ** (1.0 / lam)
                hx = k1 * x ** (lam - 1.0)
        else:
            v -= area0 + area1
            inner = math.exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v
            if inner <= 0.0:
                continue
            x = -2.0 / omega * math.log(inner)
            hx = k2 * math.exp(-omega / 2.0 * x)
        if x <= 0.0:
            continue
        u = rng.random() * hx
        if u > 0.0 and math.log(u) <= (lam - 1.0) * math.log(x) - omega / 2.0 * (x + 1.0 / x):
            return x


def _gig_standard(rng: np.random.Generator, lam: float, omega: float) -> float:
    """One draw from GIG(λ, ω) with λ >= 0."""
    if lam > 2.0 or omega > 3.0:
        return _rou_shift(rng, lam, omega)
    if lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        return _rou_noshift(rng, lam, omega)
    return _bounded_hat(rng, lam, omega)


def gig_sample(rng: np.random.Generator, p: GigParams, size: int | None = None):
    """Draw from GIG(λ, ψ, χ).

    Returns a float, or an array when size is given. The sequence of draws
    depends only on the generator state.
    """
    n = 1 if size is None else int(size)
    lam, psi, chi = p.lam, p.psi, p.chi
    out = np.empty(n)

    psichi = psi * chi
    if psichi < GIG_LIMIT_PSICHI and (abs(lam) >= 1.0 or psichi == 0.0):
        if lam == 0.0:
            raise ParameterDomainError(f"GIG with λ=0 needs ψχ > 0, got {p}")
        if lam > 0:
            out[:] = rng.gamma(lam, 2.0 / psi, size=n)
        else:
            out[:] = (chi / 2.0) / rng.gamma(-lam, 1.0, size=n)
        return float(out[0]) if size is None else out

    alpha = math.sqrt(chi / psi)
    omega = p.omega
    order = abs(lam)
    for i in range(n):
        y = _gig_standard(rng, order, omega)
        out[i] = alpha / y if lam < 0 else alpha * y
    return float(out[0]) if size is None else out
