"""Standard normal tail helpers (Q-function and inverse Mills ratio)."""
import math

from scipy import special

from .errors import DomainError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT2PI = 0.5 * math.log(2.0 * math.pi)


def _finite(x, name="x"):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def q_function(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x).

    Evaluated through the complementary error function, which keeps full
    relative precision in the upper tail (down to the subnormal range near
    x = 38).
    """
    x = _finite(x)
    return 0.5 * math.erfc(x / SQRT2)


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1); +inf at 0 and -inf at 1."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p!r}")
    return -float(special.ndtri(p))


def gauss_pdf(x):
    return math.exp(-0.5 * x * x) / SQRT2PI


def inverse_mills(x, method="auto"):
    """phi(x) / Q(x), the hazard rate of the standard normal.

    ``method`` selects the evaluation path:

    * ``"direct"``: the literal ratio, fine while Q(x) is representable.
    * ``"scaled"``: sqrt(2/pi) / erfcx(x / sqrt 2); no underflow for large x.
    * ``"log"``: exp(log phi(x) - log Q(x)) with a log-domain tail.
    * ``"auto"``: direct for x <= 6, scaled beyond.
    """
    x = _finite(x)
    if method == "auto":
        method = "direct" if x <= 6.0 else "scaled"
    if method == "direct":
        q = q_function(x)
        return gauss_pdf(x) / q if q > 0.0 else math.inf
    if method == "scaled":
        return math.sqrt(2.0 / math.pi) / float(special.erfcx(x / SQRT2))
    if method == "log":
        return math.exp(-0.5 * x * x - LOG_SQRT2PI - float(special.log_ndtr(-x)))
    raise ValueError(f"unknown method {method!r}")
