"""Geometric control condition checker.

Unit-speed geodesics are straight lines on flat tori and great circles on
the round two-sphere. For a region to control the flow, every geodesic must
enter it before some uniform time T0; the checker measures first entry
times over a sampled family of geodesics and either reports the sampled
supremum or a witness geodesic that never enters within the time cap.

The semantics are deliberately one-sided: a witness is a genuine
counterexample up to the region-boundary resolution, while a reported T0
is certified only on the sampled family. On tori the adversarial
geodesics are the closed ones with rational slope, so direction sampling
is built from Farey fractions with a uniform angular grid on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .regions import Region, TWO_PI, contains, min_feature_size, validate_region


@dataclass(frozen=True)
class SphereCap:
    """Open geodesic cap on S^2: points within angle `radius` of `center`."""

    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        n = float(np.linalg.norm(c))
        if n == 0.0:
            raise ValueError("cap center must be a nonzero vector")
        object.__setattr__(self, "center", tuple(c / n))
        if not 0.0 < self.radius < math.pi:
            raise ValueError("cap radius must lie in (0, pi)")


@dataclass(frozen=True)
class GeodesicQuery:
    """One geodesic and one target region.

    manifold "torus": start/direction are d-vectors, the direction is
    normalized to unit Euclidean speed. manifold "sphere2": start is a
    point on S^2 and direction a tangent vector at it (orthonormalized).
    """

    manifold: str  # "torus" | "sphere2"
    start: tuple
    direction: tuple
    region: object  # Region (torus) or SphereCap (sphere2)
    t_max: float = 50.0
    eps_t: float = 1e-6
    scan_dt: float | None = None

    def __post_init__(self):
        if self.manifold not in ("torus", "sphere2"):
            raise ValueError(f"unknown manifold {self.manifold!r}")
        if self.eps_t <= 0.0:
            raise ValueError("eps_t must be positive")
        if self.t_max <= 0.0:
            raise ValueError("t_max must be positive")
        d = np.asarray(self.direction, dtype=float)
        if self.manifold == "torus":
            n = float(np.linalg.norm(d))
            if n == 0.0:
                raise ValueError("direction must be nonzero")
            object.__setattr__(self, "direction", tuple(d / n))
            validate_region(self.region, len(self.start))
        else:
            x = np.asarray(self.start, dtype=float)
            nx = float(np.linalg.norm(x))
            if nx == 0.0:
                raise ValueError("sphere start must be a nonzero vector")
            x = x / nx
            d = d - np.dot(d, x) * x  # project to the tangent plane
            nd = float(np.linalg.norm(d))
            if nd < 1e-12:
                raise ValueError("direction is parallel to the start point")
            object.__setattr__(self, "start", tuple(x))
            object.__setattr__(self, "direction", tuple(d / nd))
            if not isinstance(self.region, SphereCap):
                raise ValueError("sphere2 queries take a SphereCap region")


def _torus_point(q: GeodesicQuery, t: float) -> tuple:
    return tuple(
        (s + t * v) % TWO_PI for s, v in zip(q.start, q.direction)
    )


def _sphere_point(q: GeodesicQuery, t: float) -> np.ndarray:
    x = np.asarray(q.start)
    w = np.asarray(q.direction)
    return math.cos(t) * x + math.sin(t) * w


def _inside(q: GeodesicQuery, t: float) -> bool:
    if q.manifold == "torus":
        return contains(q.region, _torus_point(q, t))
    cap: SphereCap = q.region
    p = _sphere_point(q, t)
    cosang = float(np.clip(np.dot(p, np.asarray(cap.center)), -1.0, 1.0))
    return math.acos(cosang) < cap.radius


def _default_scan_dt(q: GeodesicQuery) -> float:
    if q.manifold == "torus":
        feature = min_feature_size(q.region)
    else:
        feature = 2.0 * q.region.radius
    # an incursion across the smallest feature lasts at least feature/speed;
    # a quarter of that cannot step over it
    return max(min(feature / 4.0, 0.05), q.eps_t)


def first_hit_time(q: GeodesicQuery) -> float | None:
    """Smallest t in [0, t_max] with the geodesic inside the open region,
    located by a coarse scan and bisection to eps_t; None if it misses."""
    if _inside(q, 0.0):
        return 0.0
    dt = q.scan_dt if q.scan_dt is not None else _default_scan_dt(q)
    n = int(math.ceil(q.t_max / dt))
    lo = 0.0
    hit = None
    for j in range(1, n + 1):
        t = min(j * dt, q.t_max)
        if _inside(q, t):
            hit = t
            break
        lo = t
    if hit is None:
        return None
    hi = hit
    while hi - lo > q.eps_t:
        mid = 0.5 * (lo + hi)
        if _inside(q, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# sampled control-time scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicRecord:
    start: tuple
    direction: tuple
    hit_time: float | None


@dataclass(frozen=True)
class GccScan:
    """Outcome of a sampled scan: either a control time T0 certified on the
    sampled family, or a witness geodesic missing the region within t_max."""

    t0: float | None
    witness: GeodesicQuery | None
    records: tuple = field(default_factory=tuple)

    @property
    def holds_on_sample(self) -> bool:
        return self.witness is None


def farey_directions(max_den: int) -> list[tuple[float, float]]:
    """Unit vectors with rational slope p/q, |p|,|q| <= max_den, plus axes.

    Closed torus geodesics have exactly these directions, which is the
    adversarial family for strip-avoidance.
    """
    dirs = {(1.0, 0.0), (0.0, 1.0)}
    for qden in range(1, max_den + 1):
        for pnum in range(0, max_den + 1):
            if math.gcd(pnum, qden) != 1:
                continue
            for sp in (1.0, -1.0):
                v = np.array([qden, sp * pnum], dtype=float)
                v /= np.linalg.norm(v)
                dirs.add((round(v[0], 15), round(v[1], 15)))
                dirs.add((round(v[1], 15), round(v[0], 15)))
    return sorted(dirs)


def torus_gcc_time(
    region: Region,
    d: int,
    t_max: float,
    starts_per_dim: int = 8,
    farey_max_den: int = 6,
    n_angles: int = 32,
    eps_t: float = 1e-4,
    scan_dt: float | None = None,
) -> GccScan:
    """Sampled control time on T^d (d = 1 or 2)."""
    validate_region(region, d)
    if d == 1:
        directions = [(1.0,), (-1.0,)]
        starts = [(x,) for x in np.linspace(0.0, TWO_PI, starts_per_dim, endpoint=False)]
    elif d == 2:
        directions = list(farey_directions(farey_max_den))
        directions += [
            (math.cos(a), math.sin(a))
            for a in np.linspace(0.0, math.pi, n_angles, endpoint=False)
        ]
        axis = np.linspace(0.0, TWO_PI, starts_per_dim, endpoint=False)
        starts = [(x, y) for x in axis for y in axis]
    else:
        raise ValueError("torus scans support d = 1 or 2")

    records = []
    worst = 0.0
    witness = None
    for s in starts:
        for v in directions:
            q = GeodesicQuery(
                manifold="torus", start=s, direction=v, region=region,
                t_max=t_max, eps_t=eps_t, scan_dt=scan_dt,
            )
            t = first_hit_time(q)
            records.append(GeodesicRecord(start=s, direction=q.direction, hit_time=t))
            if t is None:
                witness = q
            else:
                worst = max(worst, t)
        if witness is not None:
            break
    if witness is not None:
        return GccScan(t0=None, witness=witness, records=tuple(records))
    return GccScan(t0=worst, witness=witness, records=tuple(records))


def sphere_gcc_time(
    cap: SphereCap,
    t_max: float = 2.0 * math.pi,
    n_starts: int = 24,
    n_directions: int = 12,
    eps_t: float = 1e-4,
) -> GccScan:
    """Sampled control time on S^2 for a cap region.

    Great circles are 2pi-periodic, so any miss within one period is a
    true miss.
    """
    golden = math.pi * (3.0 - math.sqrt(5.0))
    records = []
    worst = 0.0
    witness = None
    for i in range(n_starts):
        z = 1.0 - 2.0 * (i + 0.5) / n_starts
        r = math.sqrt(max(0.0, 1.0 - z * z))
        th = golden * i
        x = np.array([r * math.cos(th), r * math.sin(th), z])
        # tangent frame at x
        a = np.array([1.0, 0.0, 0.0]) if abs(x[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(x, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(x, e1)
        for j in range(n_directions):
            ang = math.pi * j / n_directions
            v = math.cos(ang) * e1 + math.sin(ang) * e2
            q = GeodesicQuery(
                manifold="sphere2", start=tuple(x), direction=tuple(v),
                region=cap, t_max=t_max, eps_t=eps_t,
            )
            t = first_hit_time(q)
            records.append(
                GeodesicRecord(start=tuple(x), direction=q.direction, hit_time=t)
            )
            if t is None:
                witness = q
                return GccScan(t0=None, witness=witness, records=tuple(records))
            worst = max(worst, t)
    return GccScan(t0=worst, witness=None, records=tuple(records))
