"""Desk-scale ciphering/litter model and a Monte-Carlo outcome simulator.

Bit words are plain Python ints of a stated width. The default cipher is
bitwise XOR with the key, the key channel code is an r-fold repetition
code, and litter words are drawn by rejection so that none falls inside
the decoding radius of any key codeword.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InfeasibleError

EXHAUSTIVE_MAX_BITS = 8
SAMPLED_TRIPLES = 1_000_000
MAX_ATTEMPTS = 1_000_000
SIM_CHUNK = 250_000


def _check_word(x, width, name):
    if not 0 <= x < (1 << width):
        raise DomainError(f"{name}={x!r} is not a {width}-bit word")


def encrypt(p, k, width):
    _check_word(p, width, "p")
    _check_word(k, width, "k")
    return p ^ k


def decrypt(m, k, width):
    _check_word(m, width, "m")
    _check_word(k, width, "k")
    return m ^ k


def hamming(x, y):
    return bin(x ^ y).count("1")


@dataclass(frozen=True)
class ToyCodebook:
    """Cipher family m = f(p, k) over full d-bit plaintext/ciphertext sets.

    ``cipher``/``decipher`` default to XOR. Passing ``xor=True`` lets
    validation use the algebraic shortcut instead of enumeration.
    """

    d_p: int
    d_m: int
    d_k: int
    cipher: Callable[[int, int], int] = field(default=lambda p, k: p ^ k, compare=False)
    decipher: Callable[[int, int], int] = field(default=lambda m, k: m ^ k, compare=False)
    xor: bool = True

    @classmethod
    def xor_book(cls, d):
        return cls(d, d, d)


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str = ""
    witness: Optional[tuple] = None
    method: str = ""


def validate_codebook(book, samples=SAMPLED_TRIPLES, seed=0):
    """Check M subset of P and distinct decryptions under distinct keys.

    Exhaustive up to 8 bits; above that the XOR shortcut applies (m ^ k' ==
    m ^ k forces k' == k) or, for a generic cipher, ``samples`` random
    (m, k, k') triples are checked.
    """
    if max(book.d_p, book.d_m, book.d_k) > 16:
        raise DomainError("codebook validation is limited to d <= 16")
    if book.d_m > book.d_p:
        return Verdict(False, "ciphertext words are longer than plaintext words",
                       (book.d_m, book.d_p), "structural")
    if book.xor:
        if not book.d_p == book.d_m == book.d_k:
            return Verdict(False, "XOR cipher needs d_p == d_m == d_k", None, "structural")
        return Verdict(True, "", None, "algebraic")
    n_m, n_k = 1 << book.d_m, 1 << book.d_k
    limit = 1 << book.d_p
    if max(book.d_m, book.d_k) <= EXHAUSTIVE_MAX_BITS:
        for p in range(limit):
            for k in range(n_k):
                m = book.cipher(p, k)
                if not 0 <= m < n_m:
                    return Verdict(False, "ciphertext outside M", (p, k, m), "exhaustive")
        for m in range(n_m):
            seen = {}
            for k in range(n_k):
                p = book.decipher(m, k)
                if p in seen:
                    return Verdict(False, "two keys decrypt to the same plaintext",
                                   (m, seen[p], k), "exhaustive")
                seen[p] = k
        return Verdict(True, "", None, "exhaustive")
    rng = np.random.default_rng(seed)
    ms = rng.integers(0, n_m, samples)
    ks = rng.integers(0, n_k, samples)
    # Offset in [1, n_k) guarantees k2 != k.
    k2s = (ks + rng.integers(1, n_k, samples)) % n_k
    for m, k, k2 in zip(ms.tolist(), ks.tolist(), k2s.tolist()):
        if book.decipher(m, k) == book.decipher(m, k2):
            return Verdict(False, "two keys decrypt to the same plaintext", (m, k, k2), "sampled")
    return Verdict(True, "", None, "sampled")


# -- key channel code and litter ------------------------------------------

@dataclass(frozen=True)
class RepetitionCode:
    """Each key bit repeated ``r`` times; corrects floor((r - 1) / 2) errors."""

    key_bits: int
    r: int

    def __post_init__(self):
        if self.key_bits < 1 or self.r < 1:
            raise DomainError("key_bits and r must be >= 1")

    @property
    def length(self):
        return self.key_bits * self.r

    @property
    def d_max(self):
        return (self.r - 1) // 2

    def encode(self, k):
        _check_word(k, self.key_bits, "k")
        word = 0
        for i in range(self.key_bits):
            if (k >> i) & 1:
                word |= ((1 << self.r) - 1) << (i * self.r)
        return word


@dataclass(frozen=True)
class LitterSet:
    codewords: tuple
    length: int
    d_max: int
    words: tuple


def generate_litter(keys, code, d_max, count, seed=0, max_attempts=MAX_ATTEMPTS):
    """Draw ``count`` distinct litter words farther than ``d_max`` from every key codeword."""
    n = code.length
    if n > 62:
        raise DomainError("codeword length is limited to 62 bits")
    if d_max >= n:
        raise InfeasibleError(f"no {n}-bit word is farther than {d_max} from a codeword")
    codewords = tuple(code.encode(k) for k in keys)
    rng = np.random.default_rng(seed)
    words = []
    taken = set()
    for _ in range(count):
        for _attempt in range(max_attempts):
            cand = int(rng.integers(0, 1 << n))
            if cand in taken:
                continue
            if all(hamming(cand, c) > d_max for c in codewords):
                words.append(cand)
                taken.add(cand)
                break
        else:
            raise InfeasibleError(f"litter generation exceeded {max_attempts} attempts")
    return LitterSet(codewords, n, d_max, tuple(words))


def check_litter(litter):
    """First (codeword, litter) pair violating the separation, or None."""
    for c in litter.codewords:
        for w in litter.words:
            if hamming(c, w) <= litter.d_max:
                return c, w
    return None


# -- Monte-Carlo outcomes -------------------------------------------------------

@dataclass(frozen=True)
class OutcomeCounts:
    trials: int
    perception: dict
    loss: dict
    deception: dict
    leakage_failure: int
    effective_deception: int

    def as_row(self):
        row = {"trials": self.trials}
        for who in ("bob", "eve"):
            row[f"{who}_perception"] = self.perception[who]
            row[f"{who}_loss"] = self.loss[who]
            row[f"{who}_deception"] = self.deception[who]
        row["leakage_failure"] = self.leakage_failure
        row["effective_deception"] = self.effective_deception
        return row


def _simulate_chunk(probs, size, seed_seq):
    rng = np.random.default_rng(seed_seq)
    u = rng.random((4, size))
    bob_m, bob_k = u[0] >= probs[0], u[1] >= probs[1]
    eve_m, eve_k = u[2] >= probs[2], u[3] >= probs[3]
    bob_perc, eve_perc = bob_m & bob_k, eve_m & eve_k
    bob_dec, eve_dec = bob_m & ~bob_k, eve_m & ~eve_k
    return np.array([
        bob_perc.sum(), (~bob_m).sum(), bob_dec.sum(),
        eve_perc.sum(), (~eve_m).sum(), eve_dec.sum(),
        (~bob_perc | eve_perc).sum(),
        (eve_dec & ~bob_dec).sum(),
    ], dtype=np.int64)


def simulate_outcomes(profile, trials, seed=0, workers=1, chunk=SIM_CHUNK):
    """Independent erasure draws per receiver and packet, classified per trial.

    Trials are split into fixed-size chunks with seeds spawned from ``seed``,
    so the counts do not depend on ``workers``.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    probs = (profile.eps_bob_m, profile.eps_bob_k, profile.eps_eve_m, profile.eps_eve_k)
    sizes = [chunk] * (trials // chunk)
    if trials % chunk:
        sizes.append(trials % chunk)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _simulate_chunk(probs, *a), zip(sizes, seeds)))
    else:
        parts = [_simulate_chunk(probs, n, s) for n, s in zip(sizes, seeds)]
    tot = np.sum(parts, axis=0).tolist()
    return OutcomeCounts(
        trials=trials,
        perception={"bob": tot[0], "eve": tot[3]},
        loss={"bob": tot[1], "eve": tot[4]},
        deception={"bob": tot[2], "eve": tot[5]},
        leakage_failure=tot[6],
        effective_deception=tot[7],
    )


@dataclass(frozen=True)
class EmpiricalMetrics:
    r_d: float
    eps_lf: float
    r_d_halfwidth: float
    eps_lf_halfwidth: float


def binomial_halfwidth(successes, trials, k=3.0):
    """k-sigma half-width with the Agresti-Coull adjusted proportion.

    The adjustment keeps the width non-zero at 0 or ``trials`` successes.
    """
    p = (successes + 2.0) / (trials + 4.0)
    return k * math.sqrt(p * (1.0 - p) / trials)


def empirical_metrics(counts):
    n = counts.trials
    if n < 1:
        raise DomainError("trials must be >= 1")
    return EmpiricalMetrics(
        r_d=counts.effective_deception / n,
        eps_lf=counts.leakage_failure / n,
        r_d_halfwidth=binomial_halfwidth(counts.effective_deception, n),
        eps_lf_halfwidth=binomial_halfwidth(counts.leakage_failure, n),
    )
