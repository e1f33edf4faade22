"""Parabolic growth and hull models on a finite window.

A point w = (v, h) claims the upward paraboloid w + {(u, t): t >= |u|^2 / 2};
w is extreme when its paraboloid is not covered by the union of the others.
The shear (v, h) -> (v, h + |v|^2/2) turns paraboloids into half-spaces, so
extremality and the model's k-faces reduce to the lower convex hull of the
lifted points. That reduction is an algorithmic choice, not a given: it is
validated against extreme_points_oracle, which decides the defining covering
condition directly as an exact strict-feasibility linear program. Both routes
read the lifted heights through the same float representation, so they always
judge the same instance.

Correlation estimators pin deterministic points into rate-one Poisson scenes
and aggregate replications driven by disjoint derived streams.
"""

import itertools
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import hull, sampling
from .hull import DegenerateInputError, _cross_sign, _det

_TINY = np.finfo(float).tiny


def lift(points) -> np.ndarray:
    """Shear (v, h) -> (v, h + |v|^2 / 2)."""
    pts = np.array(np.atleast_2d(points), dtype=float)
    pts[:, -1] += 0.5 * np.einsum("ij,ij->i", pts[:, :-1], pts[:, :-1])
    return pts


def unlift(points) -> np.ndarray:
    pts = np.array(np.atleast_2d(points), dtype=float)
    pts[:, -1] -= 0.5 * np.einsum("ij,ij->i", pts[:, :-1], pts[:, :-1])
    return pts


# ---------------------------------------------------------------------------
# scenes


@dataclass(frozen=True, eq=False)
class ParaboloidScene:
    """Points in the window [-side/2, side/2]^base_dim x [0, height]; pinned
    rows are deterministic additions excluded from intensity bookkeeping."""

    base_dim: int
    side: float
    height: float
    margin: float
    points: np.ndarray
    pinned: np.ndarray
    seed: int


@dataclass(frozen=True, eq=False)
class SceneResult:
    extreme_flags: np.ndarray
    hull_k_faces: dict
    xi_inf_scores: dict


@dataclass(frozen=True, eq=False)
class CorrelationEstimate:
    target: str
    value: float
    std_error: float
    replications: int
    grid: dict


def scene_from_points(points, side, height, margin=0.0, pinned=None, seed=0) -> ParaboloidScene:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base_dim = pts.shape[1] - 1
    if base_dim < 1:
        raise ValueError("scene points need at least one base coordinate")
    if not 0 <= margin < side / 2.0:
        raise ValueError("margin must be nonnegative and below half the side")
    if np.any(np.abs(pts[:, :base_dim]) > side / 2.0) or np.any(
        (pts[:, base_dim] < 0) | (pts[:, base_dim] > height)
    ):
        raise ValueError("points must lie in the window")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("duplicate points in scene")
    if pinned is None:
        pinned = np.zeros(len(pts), dtype=bool)
    pinned = np.asarray(pinned, dtype=bool)
    return ParaboloidScene(
        base_dim=base_dim,
        side=float(side),
        height=float(height),
        margin=float(margin),
        points=pts,
        pinned=pinned,
        seed=int(seed),
    )


def _draw_window_points(rng, side, height, base_dim) -> np.ndarray:
    count = int(rng.poisson(side**base_dim * height))
    pts = np.empty((count, base_dim + 1))
    pts[:, :base_dim] = rng.uniform(-side / 2.0, side / 2.0, size=(count, base_dim))
    pts[:, base_dim] = rng.uniform(0.0, height, size=count)
    return pts


def make_scene(side, height, seed, base_dim=1, margin=0.0, pinned=None) -> ParaboloidScene:
    """Rate-one Poisson scene, plus optional pinned points appended last."""
    rng = sampling.derive_rng(seed, "scene", f"{side:g}", f"{height:g}", base_dim)
    pts = _draw_window_points(rng, side, height, base_dim)
    flags = np.zeros(len(pts), dtype=bool)
    if pinned is not None:
        extra = np.atleast_2d(np.asarray(pinned, dtype=float))
        pts = np.vstack([pts, extra]) if len(pts) else extra
        flags = np.concatenate([flags, np.ones(len(extra), dtype=bool)])
    return scene_from_points(pts, side, height, margin=margin, pinned=flags, seed=seed)


# ---------------------------------------------------------------------------
# exact oracle: strict-feasibility linear programs in rational arithmetic


def _canon_row(coeffs, rhs):
    scale = max((abs(c) for c in coeffs), default=Fraction(0))
    if scale == 0:
        return ((), 1 if rhs > 0 else 0 if rhs == 0 else -1)
    return (tuple(c / scale for c in coeffs), rhs / scale)


def _fm_strict_feasible(rows, nvars) -> bool:
    """Feasibility of {x : a_i . x < b_i} by Fourier-Motzkin elimination."""
    rows = list(rows)
    for var in range(nvars - 1, -1, -1):
        pos, neg, rest = [], [], []
        for a, b in rows:
            c = a[var]
            if c > 0:
                pos.append((a, b))
            elif c < 0:
                neg.append((a, b))
            else:
                rest.append((a[:var], b))
        combined = {}
        for a, b in rest:
            combined[_canon_row(a, b)] = (a, b)
        for ap, bp in pos:
            cp = ap[var]
            for am, bm in neg:
                cm = am[var]
                a = [cp * am[j] - cm * ap[j] for j in range(var)]
                b = cp * bm - cm * bp
                combined[_canon_row(a, b)] = (a, b)
        rows = list(combined.values())
    return all(b > 0 for _, b in rows)


def _lifted_fractions(points):
    return [[Fraction(float(x)) for x in row] for row in lift(points)]


def _point_rows(lifted, i, others):
    """Rows a . v* < b expressing that i's shifted support value stays
    strictly below every listed competitor's."""
    rows = []
    d = len(lifted[i]) - 1
    for y in others:
        if y == i:
            continue
        a = [lifted[y][j] - lifted[i][j] for j in range(d)]
        rows.append((a, lifted[y][d] - lifted[i][d]))
    return rows


def extreme_points_oracle(points) -> np.ndarray:
    """Direct-definition extremality, decided exactly.

    w0 is extreme iff some probe location sees w0's paraboloid strictly below
    all others, which after expanding squares is a strict linear system in
    the probe; feasibility comes from Fourier-Motzkin over rationals.
    Intended for small instances; cost grows quickly with the point count.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = pts.shape
    lifted = _lifted_fractions(pts)
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        flags[i] = _fm_strict_feasible(_point_rows(lifted, i, range(n)), d - 1)
    return flags


def _solve_equalities(eqs, nvars):
    """Row-reduce a . x = b over rationals. Returns (pivot map, free vars)
    with each pivot var expressed as const + coeffs over free vars, or None
    when the system is inconsistent or rank-deficient."""
    mat = [list(a) + [b] for a, b in eqs]
    pivots = []
    row = 0
    for col in range(nvars):
        sel = next((r for r in range(row, len(mat)) if mat[r][col] != 0), None)
        if sel is None:
            continue
        mat[row], mat[sel] = mat[sel], mat[row]
        piv = mat[row][col]
        mat[row] = [x / piv for x in mat[row]]
        for r in range(len(mat)):
            if r != row and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], mat[row])]
        pivots.append(col)
        row += 1
    if row != len(mat):
        return None  # dependent or inconsistent equations
    free = [c for c in range(nvars) if c not in pivots]
    exprs = {}
    for r, col in enumerate(pivots):
        exprs[col] = (mat[r][nvars], {f: -mat[r][f] for f in free})
    return exprs, free


def _substitute(rows, exprs, free):
    out = []
    for a, b in rows:
        const = b
        coeffs = {f: a[f] for f in free}
        for col, (c0, cf) in exprs.items():
            if a[col] != 0:
                const -= a[col] * c0
                for f in free:
                    coeffs[f] += a[col] * cf[f]
        out.append(([coeffs[f] for f in free], const))
    return out


def _face_supported(lifted, base_dim, subset, extremes) -> bool:
    """Whether the subset is the full vertex set of a supported face: some
    affine probe grazes exactly these points while every other extreme point
    stays strictly above."""
    s0 = subset[0]
    eqs = []
    for s in subset[1:]:
        a = [lifted[s0][j] - lifted[s][j] for j in range(base_dim)]
        eqs.append((a, lifted[s0][base_dim] - lifted[s][base_dim]))
    solved = _solve_equalities(eqs, base_dim)
    if solved is None:
        return False
    exprs, free = solved
    rows = _point_rows(lifted, s0, [y for y in extremes if y not in subset])
    return _fm_strict_feasible(_substitute(rows, exprs, free), len(free))


def _analysis_oracle(pts, base_dim):
    lifted = _lifted_fractions(pts)
    n = len(pts)
    flags = np.zeros(n, dtype=bool)
    for i in range(n):
        flags[i] = _fm_strict_feasible(_point_rows(lifted, i, range(n)), base_dim)
    extremes = [int(i) for i in np.flatnonzero(flags)]
    faces = {}
    for k in range(base_dim + 1):
        faces[k] = [
            tuple(sub)
            for sub in itertools.combinations(extremes, k + 1)
            if _face_supported(lifted, base_dim, sub, extremes)
        ]
    return flags, faces


# ---------------------------------------------------------------------------
# fast paths: lower hull of the lifted points


def _analysis_chain(pts):
    """base_dim = 1: lower envelope by monotone chain with exact-safe turns."""
    lifted = lift(pts)
    order = np.lexsort((lifted[:, 1], lifted[:, 0]))
    kept = []
    for idx in order:
        # a higher point directly above a lower one is never extreme
        if kept and lifted[idx, 0] == lifted[kept[-1], 0]:
            continue
        kept.append(int(idx))
    chain = []
    for idx in kept:
        while len(chain) >= 2 and _cross_sign(lifted, chain[-2], chain[-1], idx) <= 0:
            chain.pop()
        chain.append(idx)
    flags = np.zeros(len(pts), dtype=bool)
    flags[chain] = True
    faces = {
        0: sorted((i,) for i in chain),
        1: sorted(tuple(sorted(e)) for e in zip(chain, chain[1:])),
    }
    return flags, faces


def _analysis_hull(pts, base_dim):
    """base_dim >= 2: lower facets of the full lifted hull, with outer
    normals oriented exactly in rational arithmetic."""
    lifted = lift(pts)
    d = base_dim + 1
    lattice = hull.convex_hull(lifted)
    verts = lattice.vertex_indices
    frac = {int(i): [Fraction(float(x)) for x in lifted[i]] for i in verts}
    center = [sum(frac[int(i)][j] for i in verts) / len(verts) for j in range(d)]
    lower = []
    for facet in lattice.facets:
        ps = [frac[int(i)] for i in facet]
        edges = [[ps[r][j] - ps[0][j] for j in range(d)] for r in range(1, d)]
        normal = []
        for j in range(d):
            minor = [row[:j] + row[j + 1 :] for row in edges]
            normal.append((-1) ** j * _det(minor))
        orient = sum(normal[j] * (center[j] - ps[0][j]) for j in range(d))
        if orient == 0:
            raise RuntimeError("internal error: interior reference on facet plane")
        if orient > 0:
            normal = [-x for x in normal]
        if normal[-1] < 0:
            lower.append(tuple(int(i) for i in facet))
    flags = np.zeros(len(pts), dtype=bool)
    faces = {}
    for k in range(base_dim + 1):
        seen = set()
        for facet in lower:
            for sub in itertools.combinations(facet, k + 1):
                seen.add(sub)
        faces[k] = sorted(seen)
    for facet in lower:
        flags[list(facet)] = True
    return flags, faces


def _analyze(pts, base_dim):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(pts)
    if n == 0:
        raise ValueError("scene is empty")
    if base_dim == 1:
        return _analysis_chain(pts) if n >= 2 else _analysis_oracle(pts, base_dim)
    if n <= base_dim + 2:
        return _analysis_oracle(pts, base_dim)
    try:
        return _analysis_hull(pts, base_dim)
    except DegenerateInputError:
        if n <= 18:
            return _analysis_oracle(pts, base_dim)
        raise


def extreme_points(scene: ParaboloidScene) -> np.ndarray:
    flags, _ = _analyze(scene.points, scene.base_dim)
    return flags


def paraboloid_faces(scene: ParaboloidScene, k: int):
    """(k-face vertex-index sets, per-point scores). A point scores
    (#incident k-faces)/(k+1) when its base coordinate lies in the inner
    window (each side shrunk by the margin), zero otherwise."""
    if not 0 <= k <= scene.base_dim:
        raise ValueError("face dimension out of range")
    _, faces = _analyze(scene.points, scene.base_dim)
    return faces[k], _face_scores(scene, faces[k], k)


def _face_scores(scene, faces, k):
    pts = scene.points
    half_inner = scene.side / 2.0 - scene.margin
    inner = np.all(np.abs(pts[:, : scene.base_dim]) <= half_inner + 1e-12, axis=1)
    counts = Counter(i for face in faces for i in face if inner[i])
    return [Fraction(counts.get(i, 0), k + 1) for i in range(len(pts))]


def analyze_scene(scene: ParaboloidScene) -> SceneResult:
    flags, faces = _analyze(scene.points, scene.base_dim)
    scores = {k: _face_scores(scene, faces[k], k) for k in range(scene.base_dim + 1)}
    return SceneResult(extreme_flags=flags, hull_k_faces=faces, xi_inf_scores=scores)


# ---------------------------------------------------------------------------
# correlation estimators


def _require(cond, msg):
    if not cond:
        raise ValueError(msg)


def _pin_scores(base_pts, pins, base_dim, k):
    """Scores of the pinned points inside scene + pins (pins appended)."""
    arr = np.vstack([base_pts, pins]) if len(base_pts) else np.asarray(pins, dtype=float)
    _, faces = _analyze(arr, base_dim)
    counts = Counter(i for face in faces[k] for i in face)
    first = len(base_pts)
    return [Fraction(counts.get(first + j, 0), k + 1) for j in range(len(pins))]


def estimate_zeta1(k, pin_height, side, height, reps, seed, base_dim=1) -> CorrelationEstimate:
    """Second moment of the pinned-point score at the window center."""
    _require(0 <= k <= base_dim, "face dimension out of range")
    _require(0 <= pin_height < height, "pin must sit inside the window height")
    _require(reps >= 100, "need at least 100 replications")
    pin = np.zeros((1, base_dim + 1))
    pin[0, -1] = pin_height
    vals = np.empty(reps)
    for r in range(reps):
        rng = sampling.derive_rng(seed, "pin-scene", r)
        pts = _draw_window_points(rng, side, height, base_dim)
        vals[r] = float(_pin_scores(pts, pin, base_dim, k)[0]) ** 2
    se = max(float(vals.std(ddof=1) / math.sqrt(reps)), _TINY)
    return CorrelationEstimate(
        target=f"zeta1(k={k};h={pin_height:g})",
        value=float(vals.mean()),
        std_error=se,
        replications=reps,
        grid={"side": side, "height": height, "base_dim": base_dim, "seed": seed},
    )


def estimate_zeta2(
    k, pin_height, offset, other_height, side, height, reps, seed
) -> CorrelationEstimate:
    """Two-point score covariance: E xi(w1)xi(w2) with both points pinned,
    minus the product of the singly pinned means. The three expectations
    share each replication's scene (common random numbers)."""
    off = np.atleast_1d(np.asarray(offset, dtype=float))
    base_dim = len(off)
    _require(0 <= k <= base_dim, "face dimension out of range")
    _require(0 <= pin_height < height, "pin must sit inside the window height")
    _require(0 <= other_height < height, "pin must sit inside the window height")
    _require(np.all(np.abs(off) <= side / 2.0), "offset leaves the window")
    _require(np.any(off != 0) or other_height != pin_height, "pinned points must be distinct")
    _require(reps >= 100, "need at least 100 replications")
    w1 = np.zeros((1, base_dim + 1))
    w1[0, -1] = pin_height
    w2 = np.zeros((1, base_dim + 1))
    w2[0, :base_dim] = off
    w2[0, -1] = other_height
    both = np.vstack([w1, w2])
    a = np.empty(reps)
    b = np.empty(reps)
    c = np.empty(reps)
    for r in range(reps):
        rng = sampling.derive_rng(seed, "pair-scene", r)
        pts = _draw_window_points(rng, side, height, base_dim)
        s1, s2 = _pin_scores(pts, both, base_dim, k)
        a[r] = float(s1) * float(s2)
        b[r] = float(_pin_scores(pts, w1, base_dim, k)[0])
        c[r] = float(_pin_scores(pts, w2, base_dim, k)[0])
    am, bm, cm = a.mean(), b.mean(), c.mean()
    influence = (a - am) - cm * (b - bm) - bm * (c - cm)
    se = max(float(influence.std(ddof=1) / math.sqrt(reps)), _TINY)
    off_txt = ",".join(f"{x:g}" for x in off)
    return CorrelationEstimate(
        target=f"zeta2(k={k};h={pin_height:g};v={off_txt};hp={other_height:g})",
        value=float(am - bm * cm),
        std_error=se,
        replications=reps,
        grid={"side": side, "height": height, "base_dim": base_dim, "seed": seed},
    )


def _geom_heights(h_max, n):
    """n nodes on [0, h_max], geometric refinement toward 0."""
    if n < 3:
        raise ValueError("need at least 3 height nodes")
    return np.concatenate([[0.0], np.geomspace(h_max / 2.0 ** (n - 2), h_max, n - 1)])


def _trap_weights(nodes):
    w = np.zeros(len(nodes))
    w[:-1] += np.diff(nodes) / 2.0
    w[1:] += np.diff(nodes) / 2.0
    return w


def _exp_tail(xs, ys):
    """Integral of a fitted exponential beyond xs[-1]; conservative fallback
    when the tail refuses to decay."""
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    mask = ys > 1e-300
    if mask.sum() < 2:
        return 0.0
    x_t, y_t = xs[mask][-2:], ys[mask][-2:]
    if y_t[1] >= y_t[0] or x_t[1] <= x_t[0]:
        return float(y_t[1] * max(xs[-1], 1.0))
    decay = (math.log(y_t[0]) - math.log(y_t[1])) / (x_t[1] - x_t[0])
    return float(y_t[1] / decay)


def estimate_sigma2_correlation(
    k, grids, side, height, reps, seed, base_dim=1
) -> CorrelationEstimate:
    """Scale factor of the score-sum variance, assembled from the one-point
    second moment plus the integrated two-point covariance on truncated
    geometric grids. Reported error = replication s.e. + truncation tail."""
    g = dict(grids or {})
    h_max = float(g.get("h_max", min(4.0, 0.8 * height)))
    hp_max = float(g.get("hp_max", h_max))
    rho_max = float(g.get("rho_max", min(4.0, side / 2.0 - 0.5)))
    nh = int(g.get("h_nodes", 5))
    nv = int(g.get("rho_nodes", 5))
    nhp = int(g.get("hp_nodes", 5))
    _require(0 <= k <= base_dim, "face dimension out of range")
    _require(reps >= 100, "need at least 100 replications per grid node")
    _require(h_max < height and hp_max < height, "grid heights must stay inside the window")
    _require(rho_max <= side / 2.0, "grid radius must stay inside the window")
    h_nodes = _geom_heights(h_max, nh)
    hp_nodes = _geom_heights(hp_max, nhp)
    v_nodes = np.geomspace(rho_max / 2.0 ** (nv - 1), rho_max, nv)
    w_h = _trap_weights(h_nodes)
    w_hp = _trap_weights(hp_nodes)
    if base_dim == 1:
        # integral over the full axis of an even function, plus the strip
        # between 0 and the first node taken at the first node's value
        w_v = 2.0 * _trap_weights(v_nodes)
        w_v[0] += 2.0 * v_nodes[0]
    elif base_dim == 2:
        w_v = 2.0 * math.pi * v_nodes * _trap_weights(v_nodes)
        w_v[0] += math.pi * v_nodes[0] ** 2
    else:
        raise ValueError("correlation integration supports base_dim 1 and 2")

    z1 = np.empty((reps, nh))
    amat = np.empty((reps, nh, nv, nhp))
    cmat = np.empty((reps, nv, nhp))
    pin1 = np.zeros((nh, 1, base_dim + 1))
    pin1[:, 0, -1] = h_nodes
    pin2 = np.zeros((nv, nhp, 1, base_dim + 1))
    pin2[:, :, 0, 0] = v_nodes[:, None]
    pin2[:, :, 0, -1] = hp_nodes[None, :]
    for r in range(reps):
        rng = sampling.derive_rng(seed, "s2c-scene", r)
        pts = _draw_window_points(rng, side, height, base_dim)
        for i in range(nh):
            z1[r, i] = float(_pin_scores(pts, pin1[i], base_dim, k)[0])
        for j in range(nv):
            for l in range(nhp):
                cmat[r, j, l] = float(_pin_scores(pts, pin2[j, l], base_dim, k)[0])
                for i in range(nh):
                    s1, s2 = _pin_scores(
                        pts, np.vstack([pin1[i], pin2[j, l]]), base_dim, k
                    )
                    amat[r, i, j, l] = float(s1) * float(s2)
    b_mean = z1.mean(axis=0)  # singly pinned mean, shared with the square
    z1_sq = z1**2
    i1_reps = z1_sq @ w_h
    a_mean = amat.mean(axis=0)
    c_mean = cmat.mean(axis=0)
    cov_nodes = a_mean - b_mean[:, None, None] * c_mean[None, :, :]
    w3 = w_h[:, None, None] * w_v[None, :, None] * w_hp[None, None, :]
    i2 = float((w3 * cov_nodes).sum())
    influence = (
        (amat - a_mean)
        - c_mean[None, None, :, :] * (z1[:, :, None, None] - b_mean[None, :, None, None])
        - b_mean[None, :, None, None] * (cmat[:, None, :, :] - c_mean[None, None, :, :])
    )
    total_reps = i1_reps + (w3[None] * influence).sum(axis=(1, 2, 3))
    stat_se = float(total_reps.std(ddof=1) / math.sqrt(reps))
    radial = 2.0 * np.ones(nv) if base_dim == 1 else 2.0 * math.pi * v_nodes
    tail = _exp_tail(h_nodes, z1_sq.mean(axis=0))
    tail += _exp_tail(h_nodes, (w_v[None, :, None] * w_hp[None, None, :] * cov_nodes).sum(axis=(1, 2)))
    tail += _exp_tail(v_nodes, radial * (w_h[:, None, None] * w_hp[None, None, :] * cov_nodes).sum(axis=(0, 2)))
    tail += _exp_tail(hp_nodes, (w_h[:, None, None] * w_v[None, :, None] * cov_nodes).sum(axis=(0, 1)))
    value = float(i1_reps.mean() + i2)
    if abs(value) > 0 and tail > 0.1 * abs(value):
        warnings.warn(
            "truncation tail exceeds 10% of the estimate; widen the grids",
            RuntimeWarning,
            stacklevel=2,
        )
    return CorrelationEstimate(
        target=f"sigma2(k={k})",
        value=value,
        std_error=max(stat_se + tail, _TINY),
        replications=reps,
        grid={
            "h_max": h_max,
            "hp_max": hp_max,
            "rho_max": rho_max,
            "h_nodes": nh,
            "rho_nodes": nv,
            "hp_nodes": nhp,
            "truncation": tail,
            "stat_se": stat_se,
            "side": side,
            "height": height,
            "base_dim": base_dim,
            "seed": seed,
        },
    )


def _variance_se(x):
    n = len(x)
    v = float(x.var(ddof=1))
    m4 = float(((x - x.mean()) ** 4).mean())
    inner = m4 - (n - 3) / (n - 1) * v * v
    return v, math.sqrt(max(inner, 0.0) / n)


def _score_sums(k, side, height, margin, reps, seed, base_dim, role):
    sums = np.empty(reps)
    half_inner = side / 2.0 - margin
    for r in range(reps):
        rng = sampling.derive_rng(seed, role, r)
        pts = _draw_window_points(rng, side, height, base_dim)
        if len(pts) == 0:
            sums[r] = 0.0
            continue
        _, faces = _analyze(pts, base_dim)
        inner = np.all(np.abs(pts[:, :base_dim]) <= half_inner + 1e-12, axis=1)
        counts = Counter(i for face in faces[k] for i in face if inner[i])
        sums[r] = sum(counts.values()) / (k + 1.0)
    return sums


def estimate_sigma2_window(
    k, side, height, margin, reps, seed, base_dim=1, min_margin_factor=0.5
) -> CorrelationEstimate:
    """Variance of the inner-window score sum per unit inner base volume:
    the stabilization cross-check for the correlation-integral estimator."""
    _require(0 <= k <= base_dim, "face dimension out of range")
    _require(reps >= 200, "need at least 200 replications")
    need = min_margin_factor * math.sqrt(max(math.log(side), 0.0))
    _require(margin >= need, f"margin too small for edge-effect control (need >= {need:.3g})")
    _require(margin < side / 2.0, "margin must be below half the side")
    sums = _score_sums(k, side, height, margin, reps, seed, base_dim, "window-scene")
    volume = (side - 2.0 * margin) ** base_dim
    var, se = _variance_se(sums)
    return CorrelationEstimate(
        target=f"sigma2_window(k={k})",
        value=var / volume,
        std_error=max(se / volume, _TINY),
        replications=reps,
        grid={
            "side": side,
            "height": height,
            "margin": margin,
            "base_dim": base_dim,
            "seed": seed,
        },
    )


def estimate_mean_score_density(
    k, side, height, margin, reps, seed, base_dim=1
) -> CorrelationEstimate:
    """Mean inner-window score sum per unit inner base volume; the
    expectation-side companion of the variance estimators."""
    _require(0 <= k <= base_dim, "face dimension out of range")
    _require(reps >= 100, "need at least 100 replications")
    _require(0 <= margin < side / 2.0, "margin must be below half the side")
    sums = _score_sums(k, side, height, margin, reps, seed, base_dim, "mean-scene")
    volume = (side - 2.0 * margin) ** base_dim
    se = max(float(sums.std(ddof=1) / math.sqrt(reps)) / volume, _TINY)
    return CorrelationEstimate(
        target=f"mean_density(k={k})",
        value=float(sums.mean()) / volume,
        std_error=se,
        replications=reps,
        grid={
            "side": side,
            "height": height,
            "margin": margin,
            "base_dim": base_dim,
            "seed": seed,
        },
    )


def suggest_window_height(side, seed, base_dim=1, start=4.0, pilot=5, cap=64.0) -> float:
    """Smallest trial height (growing by 1.5x) whose pilot scenes keep every
    extreme point at least 1 below the ceiling; extremes die off
    exponentially in height, so the first clean ceiling is safe."""
    height = float(start)
    while height < cap:
        clear = True
        for r in range(pilot):
            rng = sampling.derive_rng(seed, "height-pilot", f"{height:g}", r)
            pts = _draw_window_points(rng, side, height, base_dim)
            if len(pts) == 0:
                continue
            flags, _ = _analyze(pts, base_dim)
            if np.any(pts[flags, -1] > height - 1.0):
                clear = False
                break
        if clear:
            return height
        height *= 1.5
    return height


# ---------------------------------------------------------------------------
# exports


def scene_to_json(scene: ParaboloidScene, result: SceneResult) -> str:
    data = {
        "base_dim": scene.base_dim,
        "side": scene.side,
        "height": scene.height,
        "margin": scene.margin,
        "seed": scene.seed,
        "points": [[float(x) for x in row] for row in scene.points],
        "pinned": [bool(p) for p in scene.pinned],
        "extreme_flags": [bool(f) for f in result.extreme_flags],
        "faces": {str(k): [list(f) for f in faces] for k, faces in result.hull_k_faces.items()},
        "scores": {str(k): [str(s) for s in scores] for k, scores in result.xi_inf_scores.items()},
    }
    return json.dumps(data, sort_keys=True, indent=2)


def estimates_to_csv(estimates) -> str:
    lines = ["target,value,std_error,replications,seed"]
    for e in estimates:
        seed = e.grid.get("seed", "")
        lines.append(f"{e.target},{e.value!r},{e.std_error!r},{e.replications},{seed}")
    return "\n".join(lines) + "\n"
