"""Exact resonance arithmetic for the quartic sphere spectrum.

On the five-sphere the relevant phases are lam_k^4 = [k(k+4)]^2 + beta
k(k+4) with beta = p/q rational. Interactions are governed by how many
index pairs (k, l) in a dyadic box share the same phase sum

    tau = lam_k^4 + lam_l^4,

and the count reduces to representations of an integer as a sum of two
squares: with A = k(k+4), B = l(l+4),

    4 q^2 tau + 2 p^2 = (2qA + p)^2 + (2qB + p)^2.

Everything in this module is exact integer / rational arithmetic; the only
floating point is the growth-exponent fit in the dyadic sweep summary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from sympy import factorint

US_SCAN_LIMIT = 10**6
FACTOR_LIMIT = 10**18


class ResonanceError(ValueError):
    pass


def _check_beta(p: int, q: int) -> None:
    if q < 1:
        raise ResonanceError("beta denominator must be >= 1")
    if math.gcd(p, q) != 1 and not (p == 0 and q == 1):
        raise ResonanceError("beta must be given in lowest terms")


def lambda4(k: int, p: int, q: int) -> Fraction:
    """Exact quartic phase [k(k+4)]^2 + (p/q) k(k+4) of the k-th cluster."""
    if k < 1:
        raise ResonanceError("cluster index k must be >= 1")
    _check_beta(p, q)
    a = k * (k + 4)
    return Fraction(a * a) + Fraction(p, q) * a


def phase_period(tau: Fraction) -> float:
    """2 pi n for tau = m/n in lowest terms: a common period of e^{it tau}."""
    return 2.0 * math.pi * tau.denominator


def enumerate_pairs(
    K: int, L: int, tau: Fraction, p: int, q: int
) -> list[tuple[int, int]]:
    """All (k, l) with K <= k < 2K, L <= l < 2L and lam_k^4 + lam_l^4 = tau,
    by exact brute-force scan of the dyadic box."""
    if K > L:
        raise ResonanceError("dyadic ranges must satisfy K <= L")
    _check_beta(p, q)
    tau = Fraction(tau)
    out = []
    for k in range(K, 2 * K):
        lk = lambda4(k, p, q)
        rest = tau - lk
        for l in range(L, 2 * L):
            if lambda4(l, p, q) == rest:
                out.append((k, l))
    return out


@dataclass(frozen=True)
class ResonanceTable:
    """Phase-sum buckets of one dyadic box, exact."""

    p: int
    q: int
    K: int
    L: int
    buckets: dict  # Fraction tau -> list[(k, l)]
    max_count: int


def build_table(K: int, L: int, p: int, q: int) -> ResonanceTable:
    if K > L:
        raise ResonanceError("dyadic ranges must satisfy K <= L")
    _check_beta(p, q)
    # integer key m = q(A^2 + B^2) + p(A + B), tau = m/q
    avals = [k * (k + 4) for k in range(K, 2 * K)]
    bvals = [l * (l + 4) for l in range(L, 2 * L)]
    buckets: dict[int, list[tuple[int, int]]] = {}
    for i, a in enumerate(avals):
        base = q * a * a + p * a
        for j, b in enumerate(bvals):
            m = base + q * b * b + p * b
            buckets.setdefault(m, []).append((K + i, L + j))
    out = {Fraction(m, q): v for m, v in buckets.items()}
    mx = max(len(v) for v in out.values())
    return ResonanceTable(p=p, q=q, K=K, L=L, buckets=out, max_count=mx)


# ---------------------------------------------------------------------------
# sums of two squares
# ---------------------------------------------------------------------------

def _r2_scan(n: int) -> int:
    """Ordered representations n = x^2 + y^2 over Z^2, by direct scan."""
    if n == 0:
        return 1
    count = 0
    x = 0
    while x * x <= n:
        y2 = n - x * x
        y = math.isqrt(y2)
        if y * y == y2:
            if x == 0 or y == 0:
                count += 2  # (0, +-y) or (+-x, 0)
            else:
                count += 4
        x += 1
    return count


def _r2_factor(n: int) -> int:
    """r2(n) from the prime factorization: 0 unless every prime 3 mod 4
    has even exponent, otherwise 4 * prod (e_p + 1) over primes 1 mod 4."""
    if n == 0:
        return 1
    prod = 4
    for prime, e in factorint(n).items():
        r = prime % 4
        if r == 3 and e % 2 == 1:
            return 0
        if r == 1:
            prod *= e + 1
    return prod


def two_squares_count(n: int) -> int:
    """r2(n), computed by scan and/or factorization and cross-checked."""
    if n < 0:
        raise ResonanceError("n must be >= 0")
    if n > FACTOR_LIMIT:
        raise ResonanceError(f"n = {n} exceeds the factorization guard")
    if n <= US_SCAN_LIMIT:
        s = _r2_scan(n)
        f = _r2_factor(n)
        if s != f:
            raise AssertionError(f"r2 routes disagree at n = {n}: scan {s}, factor {f}")
        return s
    return _r2_factor(n)


# ---------------------------------------------------------------------------
# the reduction route and the dyadic sweep
# ---------------------------------------------------------------------------

def _invert_cluster(a: int) -> int | None:
    """k with k(k+4) = a, if one exists (k = sqrt(a+4) - 2 exactly)."""
    r = math.isqrt(a + 4)
    if r * r != a + 4:
        return None
    k = r - 2
    return k if k >= 1 else None


def reduction_count(K: int, L: int, tau: Fraction, p: int, q: int) -> int:
    """Count of the same dyadic resonance set through the two-squares
    reduction: scan admissible x = 2qA + p with A = k(k+4), k in [K, 2K),
    and invert the partner from y = sqrt(4 q^2 tau + 2 p^2 - x^2)."""
    if K > L:
        raise ResonanceError("dyadic ranges must satisfy K <= L")
    _check_beta(p, q)
    tau = Fraction(tau)
    n_frac = 4 * q * q * tau + 2 * p * p
    if n_frac.denominator != 1:
        return 0
    n = n_frac.numerator
    if n < 0:
        return 0
    count = 0
    twoq = 2 * q
    for k in range(K, 2 * K):
        x = twoq * k * (k + 4) + p
        y2 = n - x * x
        if y2 < 0:
            continue
        y = math.isqrt(y2)
        if y * y != y2:
            continue
        if y < p or (y - p) % twoq != 0:
            continue
        b = (y - p) // twoq
        l = _invert_cluster(b)
        if l is not None and L <= l < 2 * L:
            count += 1
    return count


@dataclass(frozen=True)
class SweepResult:
    p: int
    q: int
    dyadic_K: tuple[int, ...]
    max_counts: tuple[int, ...]
    growth_exponent: float
    rows: tuple  # (K, tau_numerator, tau_denominator, count) at the max per K


def counting_sweep(K_max: int, p: int, q: int) -> SweepResult:
    """Max resonance multiplicity per dyadic block K = 1, 2, ..., K_max and
    the fitted growth exponent of max count against K."""
    if K_max < 1 or K_max & (K_max - 1) != 0:
        raise ResonanceError("K_max must be a power of two")
    _check_beta(p, q)
    ks = []
    counts = []
    rows = []
    K = 1
    while K <= K_max:
        table = build_table(K, K, p, q)
        ks.append(K)
        counts.append(table.max_count)
        best = max(table.buckets.items(), key=lambda kv: len(kv[1]))
        rows.append((K, best[0].numerator, best[0].denominator, len(best[1])))
        K *= 2
    if len(ks) > 1:
        xs = [math.log(float(k)) for k in ks]
        ys = [math.log(float(c)) for c in counts]
        n = len(xs)
        sx, sy = sum(xs), sum(ys)
        sxx = sum(x * x for x in xs)
        sxy = sum(x * y for x, y in zip(xs, ys))
        denom = n * sxx - sx * sx
        slope = 0.0 if denom == 0.0 else (n * sxy - sx * sy) / denom
    else:
        slope = 0.0
    return SweepResult(
        p=p, q=q, dyadic_K=tuple(ks), max_counts=tuple(counts),
        growth_exponent=slope, rows=tuple(rows),
    )
