"""Seeded point-process samplers for convex bodies and model windows.

All entry points are deterministic functions of their arguments: streams come
from a counter-based Philox generator keyed by a 64-bit experiment seed and a
role path, so identical inputs reproduce byte-identical samples and distinct
roles never share a stream.
"""

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from . import bodies


def _key_word(key) -> int:
    """Map one role-path component to a 32-bit spawn word."""
    tag = _key_tag(key)
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for (seed, role path). Philox is counter based, so derived
    streams are independent and stable across platforms."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_word(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def _key_tag(key) -> str:
    if isinstance(key, str):
        return "s:" + key
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer rng keys must be non-negative")
        return "i:" + str(int(key))
    raise TypeError(f"rng keys must be str or int, got {type(key).__name__}")


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for the task named by the key path.

    Lets orchestration code hand every replication its own root seed while the
    samplers keep deriving role streams below it. Same hashing scheme as
    derive_rng, so the two layers never collide by construction."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for k in keys:
        h.update(b"|" + _key_tag(k).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


# ---------------------------------------------------------------------------
# samples in bodies


@dataclass(frozen=True, eq=False)
class PointSample:
    """A finite point set drawn in a body (or a model window)."""

    points: np.ndarray
    mode: str
    body_id: str
    seed: int
    realized_count: int


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Poisson and binomial counts from one maximal coupling, reading
    prefixes of a single uniform stream so the two views share their first
    min(N, Bi) points."""

    shared_stream: np.ndarray
    poisson_count: int
    binomial_count: int
    poisson_view: np.ndarray
    binomial_view: np.ndarray
    seed: int
    region_fraction: float
    mismatch_probability: float


def _uniform_in_region(body, count, rng, max_proposals, shell_depth=None):
    """Uniform points in the body, optionally restricted to the boundary
    shell of the given depth. Rejection from the bounding box."""
    dim = body.dim
    out = np.empty((count, dim))
    lo = np.array([b[0] for b in body.bounding_box])
    hi = np.array([b[1] for b in body.bounding_box])
    filled = 0
    proposed = 0
    while filled < count:
        batch = max(256, int(1.5 * (count - filled)) + 64)
        batch = min(batch, max_proposals - proposed)
        if batch <= 0:
            raise RuntimeError(
                f"rejection sampler exceeded the proposal cap ({max_proposals}) "
                f"with {filled}/{count} points accepted"
            )
        props = rng.uniform(lo, hi, size=(batch, dim))
        keep = props[body.contains(props)]
        if shell_depth is not None and len(keep):
            keep = keep[bodies.boundary_distances(body, keep) <= shell_depth]
        take = min(len(keep), count - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
        proposed += batch
    return out


def sample_poisson(body, lam: float, seed: int, max_proposals: int = 10**9) -> PointSample:
    """Homogeneous Poisson sample of intensity lam on the body."""
    if lam <= 0:
        raise ValueError("intensity must be positive")
    rng = derive_rng(seed, "poisson", body.body_id, f"{lam:g}")
    count = int(rng.poisson(lam * body.volume))
    pts = _uniform_in_region(body, count, rng, max_proposals)
    return PointSample(
        points=pts,
        mode=f"poisson({lam:g})",
        body_id=body.body_id,
        seed=int(seed),
        realized_count=count,
    )


def sample_binomial(body, n: int, seed: int, max_proposals: int = 10**9) -> PointSample:
    """Exactly n independent uniform points on the body."""
    n = int(n)
    if n < body.dim + 1:
        raise ValueError("need at least dim + 1 points")
    rng = derive_rng(seed, "binomial", body.body_id, n)
    pts = _uniform_in_region(body, n, rng, max_proposals)
    return PointSample(
        points=pts,
        mode=f"binomial({n})",
        body_id=body.body_id,
        seed=int(seed),
        realized_count=n,
    )


# ---------------------------------------------------------------------------
# maximal count coupling


@lru_cache(maxsize=128)
def _coupling_table(n: int, p: float):
    """Overlap and residual cdfs for the maximal coupling of
    Binomial(n, p) and Poisson(n p)."""
    mean = n * p
    kmax = int(max(n, mean + 12.0 * math.sqrt(mean + 1.0) + 30.0))
    ks = np.arange(kmax + 1)
    b = stats.binom.pmf(ks, n, p)
    q = stats.poisson.pmf(ks, mean)
    overlap = np.minimum(b, q)
    w = float(overlap.sum())
    overlap_cdf = np.cumsum(overlap) / w
    rb, rq = b - overlap, q - overlap
    rb_cdf = np.cumsum(rb) / rb.sum() if rb.sum() > 0 else np.ones(kmax + 1)
    rq_cdf = np.cumsum(rq) / rq.sum() if rq.sum() > 0 else np.ones(kmax + 1)
    return w, overlap_cdf, rb_cdf, rq_cdf


def mismatch_probability(n: int, p: float) -> float:
    """P[N != Bi] under the maximal coupling; equals the total variation
    distance between Binomial(n, p) and Poisson(n p)."""
    if not 0 < p <= 1:
        raise ValueError("region fraction must lie in (0, 1]")
    return 1.0 - _coupling_table(int(n), float(p))[0]


def _draw_cdf(cdf, rng) -> int:
    k = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(k, len(cdf) - 1)


def _coupled_counts(n, p, rng):
    """One (poisson, binomial) count pair. The residual pmfs have disjoint
    supports, so the counts differ exactly on the residual branch and the
    match probability is the overlap mass."""
    w, overlap_cdf, rb_cdf, rq_cdf = _coupling_table(n, p)
    if rng.random() < w:
        k = _draw_cdf(overlap_cdf, rng)
        return k, k
    bi = _draw_cdf(rb_cdf, rng)
    npois = _draw_cdf(rq_cdf, rng)
    return npois, bi


def _region_fraction(body, shell_depth) -> float:
    if shell_depth is None:
        return 1.0
    s = float(shell_depth)
    if not 0 < s <= body.reach_lower_bound:
        raise ValueError("shell depth must lie in (0, reach]")
    if body.kind == "ball":
        return 1.0 - (1.0 - s / body.radius) ** body.dim
    if body.dim == 2:
        return bodies.shell_area_by_jacobian(body, s) / body.volume
    raise ValueError("shell regions need a ball or a planar body")


def sample_coupled(
    body, n: int, seed: int, shell_depth=None, max_proposals: int = 10**9
) -> CoupledPair:
    """Maximally coupled Poisson/binomial sample on the body or on its
    boundary shell.

    With region fraction p the counts follow Binomial(n, p) and
    Poisson(n p), coupled so that P[N != Bi] equals the total variation
    distance of the two laws. Both views are prefixes of one uniform
    stream on the region.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need n >= 1")
    p = _region_fraction(body, shell_depth)
    rng = derive_rng(seed, "coupled", body.body_id, n, f"{p:.17g}")
    npois, bi = _coupled_counts(n, p, rng)
    stream = _uniform_in_region(
        body, max(npois, bi), rng, max_proposals, shell_depth=shell_depth
    )
    return CoupledPair(
        shared_stream=stream,
        poisson_count=npois,
        binomial_count=bi,
        poisson_view=stream[:npois],
        binomial_view=stream[:bi],
        seed=int(seed),
        region_fraction=p,
        mismatch_probability=mismatch_probability(n, p),
    )


# ---------------------------------------------------------------------------
# model windows


def sample_paraboloid_window(side: float, height: float, seed: int, base_dim: int = 1) -> PointSample:
    """Rate-one Poisson sample on [-side/2, side/2]^base_dim x [0, height]."""
    if side <= 0 or height <= 0:
        raise ValueError("window dimensions must be positive")
    if base_dim < 1:
        raise ValueError("base dimension must be at least 1")
    rng = derive_rng(seed, "window", f"{side:g}", f"{height:g}", base_dim)
    count = int(rng.poisson(side**base_dim * height))
    pts = np.empty((count, base_dim + 1))
    pts[:, :base_dim] = rng.uniform(-side / 2.0, side / 2.0, size=(count, base_dim))
    pts[:, base_dim] = rng.uniform(0.0, height, size=count)
    return PointSample(
        points=pts,
        mode="poisson(rate=1)",
        body_id=f"window:{side:g}x{height:g},d={base_dim + 1}",
        seed=int(seed),
        realized_count=count,
    )


def sample_scaling_window(
    body, bp, lam: float, half_width: float, height: float, seed: int, pool: int = 1
) -> PointSample:
    """Poisson(lam) points restricted to the preimage of the rescaled window
    [-half_width, half_width]^(d-1) x [0, height] at the boundary point bp.

    The preimage of the window in a disk is an annular sector, sampled
    exactly in polar coordinates, so no bounding-box rejection is involved.
    pool > 1 superposes that many independent scenes (Poisson additivity),
    which is the cheap way to accumulate occupation statistics.
    """
    if body.kind != "ball" or body.dim != 2:
        raise NotImplementedError("exact window sampling is implemented for disks")
    if lam < 1:
        raise ValueError("intensity must be >= 1")
    radius = body.radius
    rate = (radius**2 * lam) ** (1.0 / 3.0)
    if height > rate**2:
        raise ValueError("window height exceeds the image of the body")
    if half_width >= math.pi * rate:
        raise ValueError("window width exceeds the injectivity region")
    r_lo = radius * (1.0 - height / rate**2)
    half_angle = half_width / rate
    area = half_angle * (radius**2 - r_lo**2)
    theta_z = math.atan2(bp.z[1], bp.z[0])
    rng = derive_rng(seed, "scaling-window", body.body_id, f"{lam:g}", f"{half_width:g}", f"{height:g}", pool)
    count = int(rng.poisson(pool * lam * area))
    theta = rng.uniform(theta_z - half_angle, theta_z + half_angle, size=count)
    r = np.sqrt(rng.uniform(r_lo**2, radius**2, size=count))
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return PointSample(
        points=pts,
        mode=f"poisson-window({lam:g}x{pool})",
        body_id=body.body_id,
        seed=int(seed),
        realized_count=count,
    )


def rescaled_intensity_density(lam: float, bp, vprime, hprime):
    """Intensity density of the zoomed-in Poisson process in window
    coordinates (v', h') at the boundary point bp.

    Value: (1 - h'/rate^2)^(d-1) * (sin(|v'|/rate) / (|v'|/rate))^(d-2)
    with rate = (r_z^d lam)^(1/(d+1)); the angular factor is 1 at v' = 0 by
    continuity. Raises ValueError outside the image window. Scalar inputs
    return a float, arrays return an array.
    """
    d = len(bp.z)
    scalar = np.asarray(hprime).ndim == 0 and np.asarray(vprime).ndim <= 1
    v = np.atleast_2d(np.asarray(vprime, dtype=float))
    if v.shape[1] != d - 1:
        raise ValueError(f"tangential coordinates must have {d - 1} components")
    h = np.atleast_1d(np.asarray(hprime, dtype=float))
    rate = (bp.curvature_radius**d * lam) ** (1.0 / (d + 1))
    vnorm = np.linalg.norm(v, axis=1)
    if np.any(h < 0) or np.any(h > rate**2):
        raise ValueError("height coordinate outside the image window")
    if np.any(vnorm >= math.pi * rate):
        raise ValueError("tangential coordinate outside the injectivity region")
    radial = (1.0 - h / rate**2) ** (d - 1)
    angular = np.sinc(vnorm / rate / math.pi) ** (d - 2)
    out = radial * angular
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# export


def sample_to_csv(sample: PointSample) -> str:
    """One point per row; trailing columns carry the sample provenance."""
    dim = sample.points.shape[1]
    header = ",".join([f"x{i}" for i in range(dim)] + ["body_id", "seed", "mode"])
    tail = f",{sample.body_id},{sample.seed},{sample.mode}"
    lines = [header]
    for row in sample.points:
        lines.append(",".join(repr(float(c)) for c in row) + tail)
    return "\n".join(lines) + "\n"
