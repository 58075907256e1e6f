"""MM-BCD-FP blocklength allocation for the deception-rate problem.

Three nested loops maximize the deception rate over the continuous
relaxation (n_m, n_k):

* MM: re-anchor the surrogate deception rate at the incumbent.
* BCD: alternate between the key and message blocklengths.
* FP: for one free blocklength, alternate the closed-form quadratic
  transform variable y with a golden-section maximization over the
  feasible interval of that blocklength.

The continuous optimum is rounded by comparing its integer neighbours.
``grid_oracle`` enumerates the integer box exhaustively and serves as the
reference; ``baseline_pls`` is the conventional scheme without a key.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import metrics
from . import qbounds
from ._gauss import q_inverse
from .errors import DomainError, InfeasibleError, SolverError
from .metrics import CodeAllocation, ErasureProfile, LinkConfig, Thresholds

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

INIT_STRATEGIES = ("coarse_grid", "box_midpoint")
ROUNDING_MODES = ("climb", "neighbors")
CLIMB_STEPS = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class SolverConfig:
    tol_mm: float = 2e-16
    tol_bcd: float = 2e-16
    tol_fp: float = 2e-16
    max_mm: int = 100
    max_bcd: int = 100
    max_fp: int = 100
    n_min: float = 16
    n_max: float = 128
    init_strategy: str = "coarse_grid"
    gss_tol: float = 1e-6
    rounding: str = "climb"

    def __post_init__(self):
        for name in ("tol_mm", "tol_bcd", "tol_fp", "gss_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        for name in ("max_mm", "max_bcd", "max_fp"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if not 1 <= self.n_min <= self.n_max:
            raise DomainError("need 1 <= n_min <= n_max")
        if self.init_strategy not in INIT_STRATEGIES:
            raise DomainError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.rounding not in ROUNDING_MODES:
            raise DomainError(f"rounding must be one of {ROUNDING_MODES}")


@dataclass(frozen=True)
class TraceRecord:
    layer: str  # "MM", "BCD" or "FP"
    index: int
    n_m: float
    n_k: float
    y: float
    surrogate: float
    r_d: float
    mm: int = 0
    bcd: int = 0


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def add(self, record):
        self.records.append(record)

    def layer(self, name):
        return [r for r in self.records if r.layer == name]

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class SolveResult:
    n_m_opt: int
    n_k_opt: int
    profile: Optional[ErasureProfile]
    feasible: bool
    trace: IterationTrace
    oracle_gap: Optional[float] = None
    continuous: Optional[tuple] = None
    status: str = "optimal"


@dataclass
class OracleResult:
    argmax: Optional[tuple]
    r_d: float
    surface: list  # rows, see SURFACE_COLUMNS

    @property
    def empty(self):
        return self.argmax is None


SURFACE_COLUMNS = (
    "n_m", "n_k", "eps_bob_m", "eps_bob_k", "eps_eve_m", "eps_eve_k",
    "eps_lf", "r_d", "throughput", "feasible",
)


# -- feasible intervals -----------------------------------------------------

def threshold_length(d, gamma, eps_th):
    """Blocklength n at which erasure_prob(n, d, gamma) == eps_th.

    Solves C s^2 - k s - d = 0 for s = sqrt(n), k = Q^{-1}(eps_th) sqrt(V)/ln 2.
    Returns 0 when every n > 0 meets eps <= eps_th and inf when none does.
    """
    if eps_th >= 1.0:
        return 0.0
    if eps_th <= 0.0:
        return math.inf
    c = metrics.shannon_capacity(gamma)
    k = q_inverse(eps_th) * math.sqrt(metrics.dispersion(gamma)) / metrics.LN2
    s = (k + math.sqrt(k * k + 4.0 * c * d)) / (2.0 * c)
    return s * s


def _throughput_at(link, alloc, which, n):
    a = alloc.with_lengths(n_k=n) if which == "key" else alloc.with_lengths(n_m=n)
    return metrics.evaluate(link, a).throughput


def _throughput_segment(link, alloc, which, lo, hi, t_min, incumbent, grid=129):
    def g(n):
        return _throughput_at(link, alloc, which, n) - t_min

    # The incumbent is a scan point so a thin segment around it is never skipped.
    xs = np.union1d(np.linspace(lo, hi, grid), [min(max(incumbent, lo), hi)])
    grid = len(xs)
    ok = [g(x) >= 0 for x in xs]
    segments = []
    start = None
    for i, flag in enumerate(ok):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            segments.append((start, i - 1))
            start = None
    if start is not None:
        segments.append((start, grid - 1))
    if not segments:
        raise InfeasibleError(f"throughput floor {t_min} unreachable for the {which} length")

    def refine(i_in, i_out):
        # Bisection that always returns the feasible end of the bracket.
        inside, outside = xs[i_in], xs[i_out]
        while abs(inside - outside) > 1e-12 * max(1.0, abs(inside)):
            mid = 0.5 * (inside + outside)
            if g(mid) >= 0:
                inside = mid
            else:
                outside = mid
        return inside

    bounds = []
    for i0, i1 in segments:
        seg_lo = xs[i0] if i0 == 0 else refine(i0, i0 - 1)
        seg_hi = xs[i1] if i1 == grid - 1 else refine(i1, i1 + 1)
        bounds.append((float(seg_lo), float(seg_hi)))
    # Keep the segment that holds (or is nearest to) the incumbent.
    def distance(seg):
        return max(seg[0] - incumbent, incumbent - seg[1], 0.0)

    return min(bounds, key=distance)


def feasible_interval(which, link, alloc, thresholds, config=SolverConfig()):
    """Interval of the free blocklength meeting every constraint.

    ``which`` is ``"key"`` (n_k free, n_m fixed at ``alloc.n_m``) or
    ``"message"`` (n_m free). Erasure constraints are monotone in the free
    length and become closed-form end points; the throughput floor is
    located by a scan plus bisection. Raises :class:`InfeasibleError` on an
    empty interval.
    """
    g_bob, g_eve = link.gamma_bob, link.gamma_eve
    lo, hi = float(config.n_min), float(config.n_max)
    if which == "key":
        lo = max(lo, threshold_length(alloc.d_k, g_bob, thresholds.eps_bob_k_max))
        hi = min(hi, threshold_length(alloc.d_k, g_eve, thresholds.eps_eve_k_min))
        incumbent = alloc.n_k
    elif which == "message":
        lo = max(
            lo,
            threshold_length(alloc.d_m, g_bob, thresholds.eps_bob_m_max),
            threshold_length(alloc.d_m, g_eve, thresholds.eps_eve_m_max),
        )
        incumbent = alloc.n_m
    else:
        raise DomainError(f"which must be 'key' or 'message', got {which!r}")
    if lo > hi:
        raise InfeasibleError(f"erasure thresholds leave no {which} length in [{lo}, {hi}]")
    if thresholds.throughput_min > 0:
        lo, hi = _throughput_segment(
            link, alloc, which, lo, hi, thresholds.throughput_min, incumbent
        )
    return lo, hi


# -- fractional programming ---------------------------------------------------

def fp_y_closed_form(a, b):
    """Maximizer of 2 y sqrt(A) - y^2 / B over y, i.e. sqrt(A) * B."""
    if a < 0:
        raise DomainError(f"A must be >= 0, got {a!r}")
    if not b > 0:
        raise DomainError(f"B must be > 0, got {b!r}")
    return math.sqrt(a) * b


def fp_transform(y, a, b):
    """Quadratic transform 2 y sqrt(A) - y^2 / B; -inf when B <= 0."""
    if b <= 0:
        return -math.inf
    return 2.0 * y * math.sqrt(a) - y * y / b


def concave_max_1d(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-6):
    """Golden-section maximization of a unimodal ``f`` on ``[lo, hi]``.

    The bracket is shrunk to ``tol * (hi - lo)`` and its midpoint returned,
    unless an end point scores at least as well. ``-inf`` values are
    accepted; NaN or ``+inf`` raise :class:`SolverError`.
    """
    if lo > hi:
        raise DomainError(f"empty interval [{lo}, {hi}]")

    def fx(x):
        v = f(x)
        if math.isnan(v) or v == math.inf:
            raise SolverError(f"objective is {v} at x={x!r}")
        return v

    if lo == hi:
        return lo, fx(lo)
    a, b = lo, hi
    # Fixed step count; each step shrinks the bracket by 1/phi.
    steps = max(1, math.ceil(math.log(tol) / math.log(INV_PHI)))
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fx(c), fx(d)
    for _ in range(steps):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fx(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fx(d)
    mid = 0.5 * (a + b)
    best = (mid, fx(mid))
    for x in (lo, hi):
        v = fx(x)
        if v > best[1]:
            best = (x, v)
    return best


def _rel_gain(new, old):
    if old > 0:
        return (new - old) / old
    return math.inf if new > old else 0.0


def _fp_solve(which, anchor, link, n_fixed, n_start, thresholds, config, trace, mm, bcd):
    d_m, d_k = anchor.d_m, anchor.d_k
    if which == "key":
        alloc = CodeAllocation(d_m, d_k, n_fixed, n_start)

        def factors(x):
            a, b = qbounds.surrogate_factors(n_fixed, x, link, anchor)
            return a, b

        def objective(y, x):
            a, b = factors(x)
            return fp_transform(y, a, b)

        def y_update(a, b):
            return fp_y_closed_form(a, b)

        def point(x):
            return n_fixed, x
    else:
        alloc = CodeAllocation(d_m, d_k, n_start, n_fixed)

        def factors(x):
            return qbounds.surrogate_factors(x, n_fixed, link, anchor)

        # Roles of the two factors are exchanged for the message block.
        def objective(y, x):
            a, b = factors(x)
            return fp_transform(y, b, a)

        def y_update(a, b):
            return fp_y_closed_form(b, a)

        def point(x):
            return x, n_fixed

    lo, hi = feasible_interval(which, link, alloc, thresholds, config)
    x = min(max(n_start, lo), hi)
    a, b = factors(x)
    value = a * b
    for i in range(1, config.max_fp + 1):
        if (which == "key" and b <= 0) or (which == "message" and a <= 0):
            raise SolverError(f"surrogate factor vanished at the {which} incumbent {x!r}")
        y = y_update(a, b)
        x_new, f_new = concave_max_1d(lambda v: objective(y, v), lo, hi, config.gss_tol)
        if f_new < objective(y, x):
            x_new = x
        a, b = factors(x_new)
        new_value = a * b
        gain = _rel_gain(new_value, value)
        if new_value < value:
            x_new, new_value = x, value
            a, b = factors(x)
        x, value = x_new, new_value
        n_m, n_k = point(x)
        trace.add(TraceRecord("FP", i, n_m, n_k, y, value,
                              metrics.evaluate(link, CodeAllocation(d_m, d_k, n_m, n_k)).r_d,
                              mm=mm, bcd=bcd))
        if gain <= config.tol_fp:
            break
    return x, value


def fp_solve_key(anchor, link, n_m_fixed, n_k_start, thresholds, config=SolverConfig(),
                 trace=None, mm=0, bcd=0):
    """Optimize n_k with n_m fixed; returns ``(n_k, surrogate value)``."""
    trace = IterationTrace() if trace is None else trace
    return _fp_solve("key", anchor, link, n_m_fixed, n_k_start, thresholds, config, trace, mm, bcd)


def fp_solve_msg(anchor, link, n_k_fixed, n_m_start, thresholds, config=SolverConfig(),
                 trace=None, mm=0, bcd=0):
    """Optimize n_m with n_k fixed; returns ``(n_m, surrogate value)``."""
    trace = IterationTrace() if trace is None else trace
    return _fp_solve("message", anchor, link, n_k_fixed, n_m_start, thresholds, config, trace, mm, bcd)


# -- integer helpers ----------------------------------------------------------

def _rank_key(r_d, n_m, n_k):
    # Larger R_d first; ties go to the shorter total, then the shorter n_m.
    return (-r_d, n_m + n_k, n_m)


def _evaluate_integer(link, d_m, d_k, thresholds, n_m, n_k):
    alloc = CodeAllocation(d_m, d_k, n_m, n_k)
    profile = metrics.evaluate(link, alloc)
    return profile, metrics.check_feasible(profile, alloc, thresholds).feasible


def _box_values(lo, hi, count):
    return sorted({int(round(v)) for v in np.linspace(lo, hi, count)})


def initial_point(link, d_m, d_k, thresholds, config=SolverConfig()):
    """Feasible starting allocation, or None.

    ``coarse_grid`` scans an 8x8 grid of the box (refined up to integer
    spacing if nothing feasible shows up) and keeps the best point;
    ``box_midpoint`` only tries the centre of the box.
    """
    lo, hi = config.n_min, config.n_max
    mid = (int(round(0.5 * (lo + hi))),) * 2
    if config.init_strategy == "box_midpoint":
        _, ok = _evaluate_integer(link, d_m, d_k, thresholds, *mid)
        return mid if ok else None
    count = 8
    span = int(hi - lo) + 1
    while True:
        values = _box_values(lo, hi, count)
        best = None
        for n_m, n_k in itertools.product(values, values):
            profile, ok = _evaluate_integer(link, d_m, d_k, thresholds, n_m, n_k)
            if ok and (best is None or _rank_key(profile.r_d, n_m, n_k) < best[0]):
                best = (_rank_key(profile.r_d, n_m, n_k), (n_m, n_k))
        if best is not None:
            return best[1]
        _, ok = _evaluate_integer(link, d_m, d_k, thresholds, *mid)
        if ok:
            return mid
        if count >= span:
            return None
        count = min(2 * count, span)


def _round(link, d_m, d_k, thresholds, config, n_m, n_k):
    """Best feasible integer point near a continuous optimum.

    The floor/ceil neighbours (widened to +-2 if none is feasible) are
    compared first. With ``rounding="climb"`` the winner then seeds a hill
    climb over the 5x5 lattice neighbourhood restricted to feasible points.
    The climb matters when the optimum sits on the slanted throughput boundary,
    where the best lattice point can lie outside the floor/ceil square.
    """
    lo, hi = int(math.ceil(config.n_min)), int(math.floor(config.n_max))
    cache = {}

    def score(im, ik):
        if (im, ik) not in cache:
            profile, ok = _evaluate_integer(link, d_m, d_k, thresholds, im, ik)
            cache[(im, ik)] = (_rank_key(profile.r_d, im, ik), profile) if ok else None
        return cache[(im, ik)]

    def best_of(points):
        scored = [(score(*p), p) for p in points]
        scored = [(sc, p) for sc, p in scored if sc is not None]
        return min(scored, key=lambda item: item[0][0]) if scored else None

    def square(radius):
        ms = range(max(math.floor(n_m) - radius, lo), min(math.ceil(n_m) + radius, hi) + 1)
        ks = range(max(math.floor(n_k) - radius, lo), min(math.ceil(n_k) + radius, hi) + 1)
        return list(itertools.product(ms, ks))

    best = best_of(square(0)) or best_of(square(2))
    if best is None:
        return None
    while config.rounding == "climb":
        (im, ik) = best[1]
        around = [(im + di, ik + dk) for di in CLIMB_STEPS for dk in CLIMB_STEPS
                  if lo <= im + di <= hi and lo <= ik + dk <= hi]
        step = best_of(around)
        if step[1] == best[1]:
            break
        best = step
    (im, ik), profile = best[1], best[0][1]
    return im, ik, profile


# -- main algorithm -----------------------------------------------------------

def _bcd(anchor, link, thresholds, config, trace, mm):
    n_m, n_k = anchor.n_m_hat, anchor.n_k_hat
    alloc = CodeAllocation(anchor.d_m, anchor.d_k, n_m, n_k)
    value = qbounds.rd_surrogate(alloc, link, anchor)
    for t in range(1, config.max_bcd + 1):
        n_k, _ = fp_solve_key(anchor, link, n_m, n_k, thresholds, config, trace, mm, t)
        n_m, _ = fp_solve_msg(anchor, link, n_k, n_m, thresholds, config, trace, mm, t)
        alloc = alloc.with_lengths(n_m, n_k)
        new_value = qbounds.rd_surrogate(alloc, link, anchor)
        trace.add(TraceRecord("BCD", t, n_m, n_k, math.nan, new_value,
                              metrics.evaluate(link, alloc).r_d, mm=mm, bcd=t))
        gain = _rel_gain(new_value, value)
        value = new_value
        if gain <= config.tol_bcd:
            break
    return n_m, n_k


def _infeasible(trace, status, n_m=0, n_k=0, continuous=None):
    return SolveResult(n_m, n_k, None, False, trace, continuous=continuous, status=status)


def solve(link: LinkConfig, d_m: int, d_k: int, thresholds: Thresholds,
          config: SolverConfig = SolverConfig(), oracle: bool = False) -> SolveResult:
    """Maximize the deception rate over integer blocklengths.

    With ``oracle=True`` the grid oracle is also run and the relative gap
    ``1 - R_d / R_d_oracle`` stored on the result.
    """
    if d_k < 1:
        raise DomainError("solve needs d_k >= 1; use baseline_pls for d_k == 0")
    trace = IterationTrace()
    start = initial_point(link, d_m, d_k, thresholds, config)
    if start is None:
        log.info("no feasible initial point")
        return _infeasible(trace, "infeasible")
    n_m, n_k = float(start[0]), float(start[1])
    r_prev = metrics.evaluate(link, CodeAllocation(d_m, d_k, n_m, n_k)).r_d
    trace.add(TraceRecord("MM", 0, n_m, n_k, math.nan, r_prev, r_prev))
    for q in range(1, config.max_mm + 1):
        anchor = qbounds.make_anchor(link, d_m, d_k, n_m, n_k)
        n_m, n_k = _bcd(anchor, link, thresholds, config, trace, q)
        alloc = CodeAllocation(d_m, d_k, n_m, n_k)
        r_new = metrics.evaluate(link, alloc).r_d
        trace.add(TraceRecord("MM", q, n_m, n_k, math.nan,
                              qbounds.rd_surrogate(alloc, link, anchor), r_new, mm=q))
        gain = _rel_gain(r_new, r_prev)
        r_prev = r_new
        if gain <= config.tol_mm:
            break
    rounded = _round(link, d_m, d_k, thresholds, config, n_m, n_k)
    if rounded is None:
        return _infeasible(trace, "infeasible_at_integer", int(round(n_m)), int(round(n_k)),
                           continuous=(n_m, n_k))
    im, ik, profile = rounded
    result = SolveResult(im, ik, profile, True, trace, continuous=(n_m, n_k))
    if oracle:
        ref = grid_oracle(link, d_m, d_k, thresholds, (config.n_min, config.n_max))
        if not ref.empty and ref.r_d > 0:
            result.oracle_gap = 1.0 - profile.r_d / ref.r_d
    return result


def grid_oracle(link, d_m, d_k, thresholds, box=(16, 128)):
    """Exhaustive evaluation over the integer box ``[lo, hi]^2``."""
    lo, hi = int(math.ceil(box[0])), int(math.floor(box[1]))
    if lo > hi:
        raise DomainError(f"empty box {box!r}")
    n_values = range(lo, hi + 1)
    g_bob, g_eve = link.gamma_bob, link.gamma_eve
    eps = {
        (n, which): metrics.erasure_prob(n, d, g)
        for n in n_values
        for which, d, g in (("bm", d_m, g_bob), ("em", d_m, g_eve), ("bk", d_k, g_bob), ("ek", d_k, g_eve))
        if d > 0 or which in ("bm", "em")
    }
    surface = []
    best = None
    for n_m in n_values:
        for n_k in n_values:
            alloc = CodeAllocation(d_m, d_k, n_m, n_k)
            e_bk = eps[(n_k, "bk")] if d_k else 0.0
            e_ek = eps[(n_k, "ek")] if d_k else 0.0
            e_bm, e_em = eps[(n_m, "bm")], eps[(n_m, "em")]
            eps_lf = metrics.leakage_failure(e_bm, e_bk, e_em, e_ek)
            profile = ErasureProfile(e_bm, e_bk, e_em, e_ek, eps_lf,
                                     metrics.deception_rate(e_bm, e_bk, e_em, e_ek),
                                     metrics.throughput(alloc, eps_lf))
            ok = metrics.check_feasible(profile, alloc, thresholds).feasible
            surface.append((n_m, n_k, e_bm, e_bk, e_em, e_ek, eps_lf, profile.r_d,
                            profile.throughput, ok))
            if ok and (best is None or _rank_key(profile.r_d, n_m, n_k) < best[0]):
                best = (_rank_key(profile.r_d, n_m, n_k), (n_m, n_k), profile.r_d)
    if best is None:
        return OracleResult(None, 0.0, surface)
    return OracleResult(best[1], best[2], surface)


def baseline_pls(link, d_m, thresholds, config=SolverConfig()):
    """Conventional scheme: no key, n_m chosen to minimize leakage failure.

    Constraints are Bob's message threshold and the throughput floor;
    Eve's message threshold is not imposed since the scheme relies on Eve
    failing to decode.
    """
    th = replace(thresholds, eps_eve_m_max=1.0)
    trace = IterationTrace()
    best = None
    for n_m in range(int(math.ceil(config.n_min)), int(math.floor(config.n_max)) + 1):
        alloc = CodeAllocation(d_m, 0, n_m, 0)
        profile = metrics.evaluate(link, alloc)
        ok = metrics.check_feasible(profile, alloc, th).feasible
        trace.add(TraceRecord("SCAN", n_m, n_m, 0, math.nan, profile.eps_lf, profile.r_d))
        if ok and (best is None or (profile.eps_lf, n_m) < best[0]):
            best = ((profile.eps_lf, n_m), n_m, profile)
    if best is None:
        return _infeasible(trace, "infeasible")
    return SolveResult(best[1], 0, best[2], True, trace, continuous=(float(best[1]), 0.0))
