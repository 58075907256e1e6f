"""Finite-blocklength link metrics for the deceptive wiretap link.

All formulas are scalar and pure. Erasure probabilities use the normal
approximation

    eps = Q( sqrt(n / V(g)) * (C(g) - d / n) * ln 2 )

with C the Shannon capacity and V the channel dispersion of a receiver
with linear SNR g. Four such probabilities (Bob/Eve x ciphertext/key)
feed the leakage-failure probability, the effective deception rate and
the throughput.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ._gauss import _finite, gauss_pdf, q_function
from .errors import DomainError

LN2 = math.log(2.0)

# Output clamp for erasure probabilities; keeps logs and ratios finite.
EPS_FLOOR = 1e-300
EPS_CEIL = 1.0 - 1e-16

RECEIVERS = ("bob", "eve")


@dataclass(frozen=True)
class LinkConfig:
    """Deterministic link gains and powers.

    Gains are linear power gains |h|^2; ``power`` and ``noise`` are in mW.
    """

    z_bob: float
    z_eve: float
    power: float
    noise: float = 1.0

    def __post_init__(self):
        for name in ("z_bob", "z_eve", "power", "noise"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")

    @classmethod
    def from_db(cls, z_bob_db, z_eve_db, power, noise=1.0):
        return cls(db_to_linear(z_bob_db), db_to_linear(z_eve_db), power, noise)

    def snr(self, receiver):
        if receiver == "bob":
            z = self.z_bob
        elif receiver == "eve":
            z = self.z_eve
        else:
            raise DomainError(f"unknown receiver {receiver!r}")
        return z * self.power / self.noise

    @property
    def gamma_bob(self):
        return self.snr("bob")

    @property
    def gamma_eve(self):
        return self.snr("eve")

    def swapped(self):
        """The same link with Bob's and Eve's channels exchanged."""
        return LinkConfig(self.z_eve, self.z_bob, self.power, self.noise)


@dataclass(frozen=True)
class CodeAllocation:
    """Payload sizes (bits) and blocklengths (channel uses).

    ``d_k == 0`` together with ``n_k == 0`` is the baseline mode without a
    key packet. Blocklengths may be real during the continuous relaxation.
    """

    d_m: int
    d_k: int
    n_m: float
    n_k: float

    def __post_init__(self):
        if self.d_m < 1:
            raise DomainError(f"d_m must be >= 1, got {self.d_m!r}")
        if self.d_k < 0:
            raise DomainError(f"d_k must be >= 0, got {self.d_k!r}")
        if not (math.isfinite(self.n_m) and self.n_m > 0):
            raise DomainError(f"n_m must be finite and > 0, got {self.n_m!r}")
        if not (math.isfinite(self.n_k) and self.n_k >= 0):
            raise DomainError(f"n_k must be finite and >= 0, got {self.n_k!r}")
        if (self.n_k == 0) != (self.d_k == 0):
            raise DomainError("n_k == 0 is allowed only together with d_k == 0")

    @property
    def baseline(self):
        return self.d_k == 0

    @property
    def total_length(self):
        return self.n_m + self.n_k

    def with_lengths(self, n_m=None, n_k=None):
        return CodeAllocation(
            self.d_m,
            self.d_k,
            self.n_m if n_m is None else n_m,
            self.n_k if n_k is None else n_k,
        )


@dataclass(frozen=True)
class Thresholds:
    """Reliability/secrecy thresholds and the throughput floor (bit/use)."""

    eps_bob_m_max: float = 0.5
    eps_eve_m_max: float = 0.5
    eps_bob_k_max: float = 0.5
    eps_eve_k_min: float = 0.5
    throughput_min: float = 0.0

    def __post_init__(self):
        for name in ("eps_bob_m_max", "eps_eve_m_max", "eps_bob_k_max", "eps_eve_k_min"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        if not (math.isfinite(self.throughput_min) and self.throughput_min >= 0):
            raise DomainError(f"throughput_min must be >= 0, got {self.throughput_min!r}")


@dataclass(frozen=True)
class ErasureProfile:
    eps_bob_m: float
    eps_bob_k: float
    eps_eve_m: float
    eps_eve_k: float
    eps_lf: float
    r_d: float
    throughput: float

    def as_dict(self):
        return {
            "eps_bob_m": self.eps_bob_m,
            "eps_bob_k": self.eps_bob_k,
            "eps_eve_m": self.eps_eve_m,
            "eps_eve_k": self.eps_eve_k,
            "eps_lf": self.eps_lf,
            "r_d": self.r_d,
            "throughput": self.throughput,
        }


@dataclass(frozen=True)
class Feasibility:
    """Constraint verdict; ``slack`` is positive when a constraint holds."""

    feasible: bool
    slack: dict = field(default_factory=dict)

    @property
    def violated(self):
        return [name for name, s in self.slack.items() if s < 0]


def db_to_linear(x_db):
    x_db = _finite(x_db, "x_db")
    return 10.0 ** (x_db / 10.0)


def _positive(gamma):
    gamma = float(gamma)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise DomainError(f"SNR must be finite and > 0, got {gamma!r}")
    return gamma


def shannon_capacity(gamma):
    return math.log2(1.0 + _positive(gamma))


def dispersion(gamma):
    gamma = _positive(gamma)
    return 1.0 - 1.0 / (1.0 + gamma) ** 2


def _check_nd(n, d):
    n = float(n)
    if not (n > 0 and math.isfinite(n)):
        raise DomainError(f"blocklength must be finite and > 0, got {n!r}")
    if not d >= 0:
        raise DomainError(f"payload must be >= 0, got {d!r}")
    return n, float(d)


def omega(n, d, gamma):
    """Argument of the Q-function in the normal approximation."""
    n, d = _check_nd(n, d)
    c = shannon_capacity(gamma)
    v = dispersion(gamma)
    return math.sqrt(n / v) * (c - d / n) * LN2


def omega_derivs(n, d, gamma):
    """``(omega, d omega/dn, d^2 omega/dn^2)`` at blocklength ``n``."""
    n, d = _check_nd(n, d)
    c = shannon_capacity(gamma)
    k = LN2 / math.sqrt(dispersion(gamma))
    w = k * (c * math.sqrt(n) - d / math.sqrt(n))
    dw = 0.5 * k * (c * n ** -0.5 + d * n ** -1.5)
    d2w = -0.25 * k * (c * n ** -1.5 + 3.0 * d * n ** -2.5)
    return w, dw, d2w


def _clamp_eps(p):
    return min(max(p, EPS_FLOOR), EPS_CEIL)


def erasure_prob(n, d, gamma):
    return _clamp_eps(q_function(omega(n, d, gamma)))


def erasure_prob_grad(n, d, gamma):
    """Analytic d eps / dn (chain rule through omega); never positive."""
    w, dw, _ = omega_derivs(n, d, gamma)
    return -gauss_pdf(w) * dw


def erasure_prob_hess(n, d, gamma):
    """Analytic d^2 eps / dn^2; non-negative wherever omega >= 0."""
    w, dw, d2w = omega_derivs(n, d, gamma)
    pdf = gauss_pdf(w)
    return w * pdf * dw * dw - pdf * d2w


def _check_prob(*values):
    for p in values:
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"probability must lie in [0, 1], got {p!r}")


def non_perception(eps_m, eps_k):
    _check_prob(eps_m, eps_k)
    return 1.0 - (1.0 - eps_m) * (1.0 - eps_k)


def leakage_failure(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k):
    """Probability that Bob misses the plaintext or Eve perceives it."""
    _check_prob(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k)
    eps_eve = 1.0 - (1.0 - eps_eve_m) * (1.0 - eps_eve_k)
    return 1.0 - (1.0 - eps_bob_m) * (1.0 - eps_bob_k) * eps_eve


def deception_rate(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k):
    """Probability that Eve, and not Bob, is deceived."""
    _check_prob(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k)
    return (1.0 - (1.0 - eps_bob_m) * eps_bob_k) * (1.0 - eps_eve_m) * eps_eve_k


def throughput(alloc, eps_lf):
    _check_prob(eps_lf)
    total = alloc.n_m + alloc.n_k
    if not total > 0:
        raise DomainError("total blocklength must be > 0")
    return (1.0 - eps_lf) * alloc.d_m / total


def evaluate(link, alloc):
    """Full erasure profile of ``alloc`` over ``link``.

    In baseline mode (``d_k == 0``) both key erasure probabilities are
    reported as 0, which removes the key from the non-perception terms and
    forces the deception rate to 0.
    """
    g_bob, g_eve = link.gamma_bob, link.gamma_eve
    eps_bob_m = erasure_prob(alloc.n_m, alloc.d_m, g_bob)
    eps_eve_m = erasure_prob(alloc.n_m, alloc.d_m, g_eve)
    if alloc.baseline:
        eps_bob_k = eps_eve_k = 0.0
    else:
        eps_bob_k = erasure_prob(alloc.n_k, alloc.d_k, g_bob)
        eps_eve_k = erasure_prob(alloc.n_k, alloc.d_k, g_eve)
    eps_lf = leakage_failure(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k)
    return ErasureProfile(
        eps_bob_m=eps_bob_m,
        eps_bob_k=eps_bob_k,
        eps_eve_m=eps_eve_m,
        eps_eve_k=eps_eve_k,
        eps_lf=eps_lf,
        r_d=deception_rate(eps_bob_m, eps_bob_k, eps_eve_m, eps_eve_k),
        throughput=throughput(alloc, eps_lf),
    )


def check_feasible(profile, alloc, thresholds):
    """Check the erasure and throughput constraints with signed slacks.

    Key constraints are skipped in baseline mode, where no key is sent.
    Boundary values count as feasible.
    """
    slack = {
        "eps_bob_m": thresholds.eps_bob_m_max - profile.eps_bob_m,
        "eps_eve_m": thresholds.eps_eve_m_max - profile.eps_eve_m,
    }
    if not alloc.baseline:
        slack["eps_bob_k"] = thresholds.eps_bob_k_max - profile.eps_bob_k
        slack["eps_eve_k"] = profile.eps_eve_k - thresholds.eps_eve_k_min
    slack["throughput"] = profile.throughput - thresholds.throughput_min
    return Feasibility(all(s >= 0 for s in slack.values()), slack)
