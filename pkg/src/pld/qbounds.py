"""Exponential bounds on the Q-function and the minorizing surrogate.

For an anchor x the tangent of log Q at x gives

    Q(v) <= b(x) exp(-a(x) v) + c(x),   equality at v = x,

with a(x) = max(phi(x)/Q(x), x), b(x) = exp(a x - x^2/2) / (sqrt(2 pi) a)
and c(x) = Q(x) - b exp(-a x). Applying the same bound to Q(-v) = 1 - Q(v)
at anchor -w gives a lower bound on Q that touches at w. That lower bound,
composed with omega(n), is the surrogate erasure probability ``epsilon_hat``
used by the MM layer; the surrogate deception rate replaces the two
erasure probabilities that the deception rate increases with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import metrics
from ._gauss import LOG_SQRT2PI, _finite, inverse_mills, q_function
from .errors import DomainError

__all__ = [
    "BoundCoeffs",
    "BoundAnchor",
    "q_function",
    "bound_coeffs",
    "lower_bound_coeffs",
    "q_upper_bound",
    "q_lower_bound",
    "epsilon_hat",
    "make_anchor",
    "surrogate_factors",
    "rd_surrogate",
]


@dataclass(frozen=True)
class BoundCoeffs:
    """Coefficients of the exponential Q bound built at ``anchor_omega``.

    ``log_b`` carries b in log form; b itself overflows for anchors beyond
    roughly 37 while log_b stays finite.
    """

    a: float
    b: float
    c: float
    anchor_omega: float
    log_b: float

    @property
    def scale(self):
        """b * exp(-a * anchor), i.e. the exponential term at the anchor."""
        return math.exp(self.log_b - self.a * self.anchor_omega)


def bound_coeffs(omega_hat):
    x = _finite(omega_hat, "omega_hat")
    a = max(inverse_mills(x), x)
    if not (a > 0 and math.isfinite(a)):
        raise DomainError(
            f"bound slope a({x!r}) = {a!r} is not a positive finite number; "
            "the anchor lies too deep in the lower tail"
        )
    log_b = a * x - 0.5 * x * x - LOG_SQRT2PI - math.log(a)
    try:
        b = math.exp(log_b)
    except OverflowError:
        raise DomainError(
            f"bound coefficient b({x!r}) overflows (log b = {log_b:.1f})"
        ) from None
    c = q_function(x) - math.exp(log_b - a * x)
    return BoundCoeffs(a=a, b=b, c=c, anchor_omega=x, log_b=log_b)


def lower_bound_coeffs(omega_hat):
    """Coefficients for the lower bound touching Q at ``omega_hat``.

    These are ``bound_coeffs(-omega_hat)``; callers pass the raw anchor.
    """
    return bound_coeffs(-_finite(omega_hat, "omega_hat"))


def _exp(x):
    return math.inf if x > 709.0 else math.exp(x)


def q_upper_bound(omega, coeffs):
    """b exp(-a omega) + c with coefficients built at the anchor itself."""
    omega = _finite(omega, "omega")
    return _exp(coeffs.log_b - coeffs.a * omega) + coeffs.c


def q_lower_bound(omega, coeffs):
    """1 - b exp(a omega) - c with coefficients built at minus the anchor.

    Evaluated as Q(w) - b exp(-a x) expm1(a (omega - w)), with x = -w the
    stored anchor, which is the same expression rearranged so that tiny
    Q(w) values are not lost to cancellation against 1. Can go negative
    far above the anchor.
    """
    omega = _finite(omega, "omega")
    x = coeffs.anchor_omega
    s = coeffs.a * (omega + x)
    if s > 709.0:
        return -math.inf
    return q_function(-x) - coeffs.scale * math.expm1(s)


def epsilon_hat(n, d, gamma, coeffs):
    """Surrogate erasure probability; a lower bound that touches at the anchor.

    ``coeffs`` come from :func:`lower_bound_coeffs` at the anchor's omega.
    Not clamped: values outside [0, 1] are returned as computed.
    """
    return q_lower_bound(metrics.omega(n, d, gamma), coeffs)


@dataclass(frozen=True)
class BoundAnchor:
    """MM anchor: blocklengths plus the bound coefficients built there."""

    n_m_hat: float
    n_k_hat: float
    d_m: int
    d_k: int
    bob_m: BoundCoeffs
    eve_k: BoundCoeffs
    profile: metrics.ErasureProfile


def make_anchor(link, d_m, d_k, n_m_hat, n_k_hat):
    if d_k < 1:
        raise DomainError("the surrogate needs a key packet (d_k >= 1)")
    alloc = metrics.CodeAllocation(d_m, d_k, n_m_hat, n_k_hat)
    w_bob_m = metrics.omega(n_m_hat, d_m, link.gamma_bob)
    w_eve_k = metrics.omega(n_k_hat, d_k, link.gamma_eve)
    return BoundAnchor(
        n_m_hat=n_m_hat,
        n_k_hat=n_k_hat,
        d_m=d_m,
        d_k=d_k,
        bob_m=lower_bound_coeffs(w_bob_m),
        eve_k=lower_bound_coeffs(w_eve_k),
        profile=metrics.evaluate(link, alloc),
    )


def _unit(p):
    return min(max(p, 0.0), 1.0)


def surrogate_factors(n_m, n_k, link, anchor):
    """The two factors of the surrogate deception rate.

    Returns ``(A, B)`` with A = 1 - (1 - eps_hat_bob_m) eps_bob_k and
    B = (1 - eps_eve_m) eps_hat_eve_k; the surrogates are clamped to
    [0, 1] here and only here.
    """
    eps_hat_bm = _unit(epsilon_hat(n_m, anchor.d_m, link.gamma_bob, anchor.bob_m))
    eps_hat_ek = _unit(epsilon_hat(n_k, anchor.d_k, link.gamma_eve, anchor.eve_k))
    eps_bk = metrics.erasure_prob(n_k, anchor.d_k, link.gamma_bob)
    eps_em = metrics.erasure_prob(n_m, anchor.d_m, link.gamma_eve)
    return 1.0 - (1.0 - eps_hat_bm) * eps_bk, (1.0 - eps_em) * eps_hat_ek


def rd_surrogate(alloc, link, anchor):
    if (alloc.d_m, alloc.d_k) != (anchor.d_m, anchor.d_k):
        raise DomainError("allocation payloads differ from the anchor's")
    a, b = surrogate_factors(alloc.n_m, alloc.n_k, link, anchor)
    return a * b
