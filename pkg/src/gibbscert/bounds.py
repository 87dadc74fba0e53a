"""Computable certificate formulas.

Every certificate here has the shape kl(emp_risk || true_risk) <= tau with
probability at least 1 - delta over the sample and the sampled hypotheses;
tau is then turned into a true-risk upper bound by inverting the divergence.
The four tau families differ in how the posterior/prior complexity enters:

  cor4   uniform prior:       tau = [mu(h',S) - mu(h,S) + ln(8 sqrt(m)/d^2)] / m
  cor5   Gibbs prior:         tau = [(mu(h',S) - omega(h')) - (mu(h,S) - omega(h))
                                     + ln(8 sqrt(m)/d^2)] / m
  eq8    risk-free baseline:  tau = [a^2/(8m) + sqrt(a^2/(2m) ln(6 sqrt(m)/d))
                                     + ln(6 sqrt(m)/d)] / m
  eq9    private prior:       tau = [a (r'(h') - r'(h)) + a' (r'(h) - r'(h'))
                                     + 2 a' + ln(8 sqrt(m)/d^2)] / m

A Catoni-style alternative parameterized by c > 0 is provided together with
its infimum over c, which coincides with the kl inversion.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .klcalc import DEFAULT_INVERSION, KlInversionConfig, kl_inv_upper
from .validation import (
    check_confidence,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_probability,
)


@dataclass(frozen=True)
class CertificateInput:
    """Everything a bound formula may consume; unused fields stay at 0."""

    m: int
    delta: float
    emp_risk: float
    mu_post: float = 0.0
    mu_prior: float = 0.0
    omega_post: float = 0.0
    omega_prior: float = 0.0
    alpha: float = 0.0
    alpha_prime: float = 0.0
    risk_prime_post: float = 0.0
    risk_prime_prior: float = 0.0
    m_prime: int = 0

    def __post_init__(self) -> None:
        check_positive_int("m", self.m)
        check_confidence("delta", self.delta)
        check_probability("emp_risk", self.emp_risk)
        check_probability("risk_prime_post", self.risk_prime_post)
        check_probability("risk_prime_prior", self.risk_prime_prior)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Certificate:
    """tau is the raw right-hand side; a negative tau is clamped to zero
    before inversion and flagged, leaving risk_upper = emp_risk."""

    family: str
    tau: float
    risk_upper: float
    emp_risk: float
    clamped: bool
    input_digest: str


def log_term_8(m: int, delta: float) -> float:
    """ln(8 sqrt(m) / delta^2), evaluated in log space."""
    return math.log(8.0) + 0.5 * math.log(m) - 2.0 * math.log(delta)


def log_term_6(m: int, delta: float) -> float:
    """ln(6 sqrt(m) / delta), evaluated in log space."""
    return math.log(6.0) + 0.5 * math.log(m) - math.log(delta)


def _certify(family: str, tau: float, inp: CertificateInput,
             cfg: KlInversionConfig) -> Certificate:
    clamped = tau < 0.0
    risk_upper = kl_inv_upper(inp.emp_risk, max(tau, 0.0), cfg)
    return Certificate(
        family=family,
        tau=tau,
        risk_upper=risk_upper,
        emp_risk=inp.emp_risk,
        clamped=clamped,
        input_digest=inp.digest(),
    )


def bound_cor4(inp: CertificateInput,
               cfg: KlInversionConfig = DEFAULT_INVERSION) -> Certificate:
    """Uniform-prior certificate from the mu difference alone."""
    tau = (inp.mu_prior - inp.mu_post + log_term_8(inp.m, inp.delta)) / inp.m
    return _certify("cor4", tau, inp, cfg)


def bound_cor5(inp: CertificateInput,
               cfg: KlInversionConfig = DEFAULT_INVERSION) -> Certificate:
    """Informed-prior certificate; omega == 0 recovers bound_cor4 exactly."""
    tau = (
        (inp.mu_prior - inp.omega_prior)
        - (inp.mu_post - inp.omega_post)
        + log_term_8(inp.m, inp.delta)
    ) / inp.m
    return _certify("cor5", tau, inp, cfg)


def bound_eq8(inp: CertificateInput,
              cfg: KlInversionConfig = DEFAULT_INVERSION) -> Certificate:
    """Hypothesis-free baseline: tau depends only on (alpha, m, delta)."""
    check_nonnegative("alpha", inp.alpha)
    l6 = log_term_6(inp.m, inp.delta)
    a2 = inp.alpha * inp.alpha
    tau = (a2 / (8.0 * inp.m) + math.sqrt(a2 / (2.0 * inp.m) * l6) + l6) / inp.m
    return _certify("eq8", tau, inp, cfg)


def bound_eq9(inp: CertificateInput,
              cfg: KlInversionConfig = DEFAULT_INVERSION) -> Certificate:
    """Privacy-style baseline using both differentiable risks and alpha'.

    Terms are summed in the same association as bound_cor4 so that the
    alpha' = 0 case reduces to it bit-for-bit with mu = alpha * risk'.
    """
    tau = (
        inp.alpha * inp.risk_prime_prior
        - inp.alpha * inp.risk_prime_post
        + inp.alpha_prime * inp.risk_prime_post
        - inp.alpha_prime * inp.risk_prime_prior
        + 2.0 * inp.alpha_prime
        + log_term_8(inp.m, inp.delta)
    ) / inp.m
    return _certify("eq9", tau, inp, cfg)


def bound_catoni(c: float, emp_risk: float, xi: float) -> float:
    """Catoni-form risk bound (1 - exp(-c q - xi)) / (1 - exp(-c))."""
    check_positive("c", c)
    check_probability("emp_risk", emp_risk)
    return float((1.0 - math.exp(-c * emp_risk - xi)) / (1.0 - math.exp(-c)))


def _golden_min(f, a: float, b: float, tol: float = 1e-8) -> float:
    """Golden-section minimum of a unimodal f on [a, b]; returns min value."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - inv_phi * (b - a)
    x2 = a + inv_phi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = f(x2)
    return min(f1, f2, f(0.5 * (a + b)))


def catoni_inf(emp_risk: float, xi: float, c_grid=None) -> float:
    """Catoni bound minimized over c, grid search plus golden-section polish.

    Numerically this infimum coincides with kl_inv_upper(emp_risk, xi); the
    default grid spans [1e-6, 50], wide enough that both boundary regimes
    (xi = 0 pushing c to 0, emp_risk = 0 pushing c to infinity) are within
    1e-4 of their limits.
    """
    check_probability("emp_risk", emp_risk)
    check_nonnegative("xi", xi)
    if c_grid is None:
        c_grid = np.geomspace(1e-6, 50.0, 200)
    c_grid = np.asarray(c_grid, dtype=float)
    if np.any(c_grid <= 0.0):
        raise ValueError("the c grid must be strictly positive")
    values = (1.0 - np.exp(-c_grid * emp_risk - xi)) / (1.0 - np.exp(-c_grid))
    best = int(np.argmin(values))
    lo = c_grid[max(best - 1, 0)]
    hi = c_grid[min(best + 1, len(c_grid) - 1)]
    refined = _golden_min(lambda c: bound_catoni(c, emp_risk, xi), lo, hi)
    return min(float(values[best]), refined)


def lee_delta_prime(true_gaps, mu_values, epsilon: float, delta: float) -> float:
    """Empirical failure mass delta'(epsilon) for a gap-vs-mu comparison.

    Needs the true generalization gaps, so it is computable only against a
    simulator whose data distribution is known.
    """
    true_gaps = np.asarray(true_gaps, dtype=float)
    mu_values = np.asarray(mu_values, dtype=float)
    if true_gaps.ndim != 1 or true_gaps.shape != mu_values.shape:
        raise ValueError(
            f"gap and mu lists must be equal-length vectors, got "
            f"{true_gaps.shape} and {mu_values.shape}"
        )
    if len(true_gaps) == 0:
        raise ValueError("need at least one (gap, mu) pair")
    check_confidence("delta", delta)
    n = len(true_gaps)
    violations = float(np.mean(np.abs(true_gaps) - mu_values > epsilon))
    return violations + math.sqrt(math.log(2.0 / delta) / (2.0 * n))
