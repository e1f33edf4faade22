"""Convex hulls with exact orientation predicates and face bookkeeping.

The construction is incremental with conflict lists: every point not yet
inside the running hull is parked on one facet it sees; the farthest such
point becomes the next apex, its visible region is flooded out across facet
adjacencies, and the horizon ridges are coned to the apex.

Orientation tests run in floating point with a forward error bound. When the
bound cannot certify the sign, the test is re-run in exact rational
arithmetic, and exact zeros are resolved by a symbolic index-ordered
perturbation, so every predicate returns a strict sign and the algorithm
behaves as if the input were in general position. The outputs are therefore
simplicial lattices whose combinatorics are those of an actual (perturbed)
point configuration: Euler's relation and the usual polytope identities hold
unconditionally.

Big statistical runs should not pay for exactness: `convex_hull_2d` is a
filtered monotone-chain fast path, and `qhull_vertices` delegates to scipy's
hull for d >= 3. Both are cross-checked against the exact lattice in tests.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import ConvexHull as _SciPyHull

_EPS = 2.0**-53
MAX_DIM = 5


class DegenerateInputError(ValueError):
    """Input is lower-dimensional: no d+1 affinely independent points."""


# ---------------------------------------------------------------------------
# small determinants and permanents (work on floats and Fractions alike)


def _det(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if n == 3:
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )
    total = m[0][0] * 0
    sign = 1
    for j in range(n):
        if m[0][j]:
            minor = [row[:j] + row[j + 1 :] for row in m[1:]]
            total += sign * m[0][j] * _det(minor)
        sign = -sign
    return total


def _perm(m):
    """Permanent of a nonnegative matrix; used for error bounds."""
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] + m[0][1] * m[1][0]
    total = 0.0
    for j in range(n):
        if m[0][j]:
            minor = [row[:j] + row[j + 1 :] for row in m[1:]]
            total += m[0][j] * _perm(minor)
    return total


def _sign(x):
    return (x > 0) - (x < 0)


# ---------------------------------------------------------------------------
# predicate engine


class _Predicates:
    """Orientation signs for one point set: float filter, exact rationals,
    symbolic perturbation. Results of the slow stages are cached."""

    def __init__(self, pts):
        self.pts = pts
        self.d = pts.shape[1]
        self._cache = {}

    def orient(self, idx, extra=None):
        """Sign of det of rows (pts[idx[1:]] - pts[idx[0]]), with `extra`
        (an unperturbed literal point) appended as the last row when given.
        Never returns 0."""
        rows = [self.pts[i] for i in idx]
        if extra is not None:
            rows = rows + [extra]
        base = rows[0]
        diff = [r - base for r in rows[1:]]
        det = _det([list(r) for r in diff])
        inflate = [
            list(np.abs(r - base) + _EPS * (np.abs(r) + np.abs(base))) for r in rows[1:]
        ]
        bound = 64.0 * math.factorial(len(diff)) * _EPS * _perm(inflate) + 1e-300
        if abs(det) > bound:
            return 1 if det > 0 else -1
        key = (idx, extra is not None)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self._orient_exact(idx, extra)
        if res == 0:
            res = self._orient_perturbed(idx, extra)
        self._cache[key] = res
        return res

    def _orient_exact(self, idx, extra):
        rows = [[Fraction(float(x)) for x in self.pts[i]] for i in idx]
        if extra is not None:
            rows.append([Fraction(float(x)) for x in extra])
        base = rows[0]
        m = [[r[j] - base[j] for j in range(self.d)] for r in rows[1:]]
        return _sign(_det(m))

    def _orient_perturbed(self, idx, extra):
        """Symbolic perturbation: point with input index i gets an offset of
        eps^(2^(i*d + j)) in coordinate j. The perturbed determinant's sign is
        the first nonzero coefficient in the expansion ordered by the total
        infinitesimal weight; the all-perturbation term guarantees a decision.
        """
        d = self.d
        order = sorted(range(len(idx)), key=lambda r: idx[r])
        inversions = sum(
            1
            for a in range(len(idx))
            for b in range(a + 1, len(idx))
            if idx[a] > idx[b]
        )
        parity = 1 if inversions % 2 == 0 else -1
        hom = [
            [Fraction(float(x)) for x in self.pts[idx[r]]] + [Fraction(1)]
            for r in order
        ]
        if extra is not None:
            hom.append([Fraction(float(x)) for x in extra] + [Fraction(1)])
        perturbable = list(range(len(order)))  # the literal extra row is exact
        terms = []
        for m_size in range(1, min(d, len(perturbable)) + 1):
            for rows_s in itertools.combinations(perturbable, m_size):
                for cols in itertools.permutations(range(d), m_size):
                    weight = sum(
                        1 << (idx[order[r]] * d + c) for r, c in zip(rows_s, cols)
                    )
                    terms.append((weight, rows_s, cols))
        terms.sort(key=lambda t: t[0])
        size = len(hom)
        for _, rows_s, cols in terms:
            mod = [list(row) for row in hom]
            for r, c in zip(rows_s, cols):
                mod[r] = [Fraction(0)] * (d + 1)
                mod[r][c] = Fraction(1)
            val = _det(mod)
            if val != 0:
                # the homogeneous det of size k equals the edge-matrix det up
                # to the sign (-1)^k of moving the 1s column through cofactors
                flip = 1 if (size % 2 == 1) else -1
                return parity * flip * _sign(val)
        raise RuntimeError("symbolic perturbation failed to decide")

    # -- bulk side tests against a facet plane -----------------------------

    def plane(self, facet):
        """Float normal, its componentwise error bound, and the base point,
        oriented so that sign((q - base) @ normal) approximates
        orient(facet + (q,))."""
        rows = self.pts[list(facet)]
        base = rows[0]
        edges = rows[1:] - base
        inflate = np.abs(edges) + _EPS * (np.abs(rows[1:]) + np.abs(base))
        d = self.d
        normal = np.empty(d)
        nbound = np.empty(d)
        for j in range(d):
            cols = [c for c in range(d) if c != j]
            normal[j] = (-1.0) ** j * _det(edges[:, cols].tolist())
            nbound[j] = _perm(inflate[:, cols].tolist())
        nbound = 64.0 * math.factorial(d) * _EPS * nbound + 1e-300
        if (d - 1) % 2 == 1:
            normal = -normal
        return base, normal, nbound

    def bulk_orient(self, facet, plane, query_idx):
        """Signs of orient(facet + (q,)) for an index array of queries."""
        base, normal, nbound = plane
        diff = self.pts[query_idx] - base
        s = diff @ normal
        err = np.abs(diff) @ nbound + 16 * self.d * _EPS * (np.abs(diff) @ np.abs(normal))
        out = np.where(s > err, 1, np.where(s < -err, -1, 0)).astype(np.int8)
        for pos in np.nonzero(out == 0)[0]:
            out[pos] = self.orient(facet + (int(query_idx[pos]),))
        return out


# ---------------------------------------------------------------------------
# lattice types


@dataclass(frozen=True, eq=False)
class FaceLattice:
    """Simplicial boundary complex of a full-dimensional hull."""

    input_count: int
    dim: int
    vertex_indices: tuple
    facets: tuple
    k_faces: tuple  # k_faces[k]: sorted tuple of sorted (k+1)-index tuples
    f_vector: tuple


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-input-point k-face incidence scores, exact rationals."""

    k: int
    scores: tuple  # Fractions, one per input point
    support: tuple  # indices with positive score


# ---------------------------------------------------------------------------
# initial simplex


def _initial_simplex(pts):
    n, d = pts.shape
    chosen = [0]
    basis = []  # orthonormalized float span of the chosen edge vectors
    exact_mode = False  # once floats prove unreliable, stay exact

    def exact_rank_grows(cand):
        rows = [
            [
                Fraction(float(pts[i][j])) - Fraction(float(pts[chosen[0]][j]))
                for j in range(d)
            ]
            for i in chosen[1:] + [cand]
        ]
        return _fraction_rank(rows) > len(chosen) - 1

    for cand in range(1, n):
        if len(chosen) == d + 1:
            break
        if exact_mode:
            if exact_rank_grows(cand):
                chosen.append(cand)
            continue
        edge = pts[cand] - pts[chosen[0]]
        resid = edge.copy()
        for b in basis:
            resid = resid - b * (b @ resid)
        scale = float(np.linalg.norm(edge))
        if np.linalg.norm(resid) > 1e-9 * (scale + 1e-300):
            chosen.append(cand)
            basis.append(resid / np.linalg.norm(resid))
        elif exact_rank_grows(cand):
            # independent in exact arithmetic but invisible to the float
            # basis: the shortcut is no longer trustworthy for this input
            chosen.append(cand)
            exact_mode = True
    if len(chosen) < d + 1:
        raise DegenerateInputError(
            f"input is lower-dimensional: affine rank {len(chosen) - 1} < {d}"
        )
    return chosen


def _fraction_rank(rows):
    m = [list(r) for r in rows]
    if not m:
        return 0
    n_rows, n_cols = len(m), len(m[0])
    rank = 0
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for r in range(rank + 1, n_rows):
            factor = m[r][col] / m[rank][col]
            for c in range(col, n_cols):
                m[r][c] -= factor * m[rank][c]
        rank += 1
        if rank == n_rows:
            break
    return rank


# ---------------------------------------------------------------------------
# hull construction


class _Facet:
    __slots__ = ("verts", "inside", "plane", "conflict", "alive")

    def __init__(self, verts, inside, plane):
        self.verts = verts
        self.inside = inside
        self.plane = plane
        self.conflict = []
        self.alive = True


def convex_hull(points) -> FaceLattice:
    """Full face lattice of the convex hull of an (n, d) float array."""
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim != 2:
        raise ValueError("points must be a 2d array")
    n, d = pts.shape
    if not 2 <= d <= MAX_DIM:
        raise ValueError(f"dimension {d} outside supported range 2..{MAX_DIM}")
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} points in dimension {d}")

    pred = _Predicates(pts)
    simplex = _initial_simplex(pts)
    ref = pts[simplex].mean(axis=0)

    facets = {}
    ridge_map = {}
    next_id = 0

    def new_facet(verts):
        nonlocal next_id
        verts = tuple(sorted(verts))
        plane = pred.plane(verts)
        inside = pred.orient(verts, extra=ref)
        if inside == 0:
            raise RuntimeError("interior reference degenerate")
        f = _Facet(verts, inside, plane)
        fid = next_id
        next_id += 1
        facets[fid] = f
        for skip in verts:
            ridge = frozenset(v for v in verts if v != skip)
            ridge_map.setdefault(ridge, set()).add(fid)
        return fid

    def drop_facet(fid):
        f = facets[fid]
        f.alive = False
        for skip in f.verts:
            ridge = frozenset(v for v in f.verts if v != skip)
            members = ridge_map.get(ridge)
            if members is not None:
                members.discard(fid)
                if not members:
                    del ridge_map[ridge]

    for skip in range(d + 1):
        new_facet([simplex[r] for r in range(d + 1) if r != skip])

    outside = np.array([i for i in range(n) if i not in set(simplex)], dtype=int)
    if len(outside):
        assigned = np.zeros(len(outside), dtype=bool)
        for fid in list(facets):
            f = facets[fid]
            rest = np.nonzero(~assigned)[0]
            if not len(rest):
                break
            signs = pred.bulk_orient(f.verts, f.plane, outside[rest])
            visible = signs == -f.inside
            take = rest[visible]
            f.conflict.extend(int(outside[i]) for i in take)
            assigned[take] = True

    queue = [fid for fid, f in facets.items() if f.conflict]
    while queue:
        fid = queue.pop()
        f = facets.get(fid)
        if f is None or not f.alive or not f.conflict:
            continue
        base, normal, _ = f.plane
        cand = np.asarray(f.conflict, dtype=int)
        heights = (pts[cand] - base) @ normal * (-f.inside)
        apex = int(cand[int(np.argmax(heights))])

        # flood the visible region out from the host facet
        visible_ids = {fid}
        stack = [fid]
        while stack:
            cur = facets[stack.pop()]
            for skip in cur.verts:
                ridge = frozenset(v for v in cur.verts if v != skip)
                for nb in ridge_map.get(ridge, ()):
                    if nb in visible_ids:
                        continue
                    g = facets[nb]
                    sign = pred.bulk_orient(
                        g.verts, g.plane, np.array([apex], dtype=int)
                    )[0]
                    if sign == -g.inside:
                        visible_ids.add(nb)
                        stack.append(nb)

        horizon = []
        for vid in visible_ids:
            g = facets[vid]
            for skip in g.verts:
                ridge = frozenset(v for v in g.verts if v != skip)
                others = ridge_map.get(ridge, set()) - visible_ids
                if others:
                    horizon.append(ridge)

        orphans = []
        for vid in visible_ids:
            orphans.extend(facets[vid].conflict)
            drop_facet(vid)
            del facets[vid]
        orphan_arr = np.array(
            sorted(set(o for o in orphans if o != apex)), dtype=int
        )

        created = [new_facet(tuple(ridge) + (apex,)) for ridge in horizon]
        if len(orphan_arr):
            assigned = np.zeros(len(orphan_arr), dtype=bool)
            for cid in created:
                g = facets[cid]
                rest = np.nonzero(~assigned)[0]
                if not len(rest):
                    break
                signs = pred.bulk_orient(g.verts, g.plane, orphan_arr[rest])
                visible = signs == -g.inside
                take = rest[visible]
                g.conflict.extend(int(orphan_arr[i]) for i in take)
                assigned[take] = True
        queue.extend(cid for cid in created if facets[cid].conflict)

    facet_tuples = sorted(f.verts for f in facets.values())
    k_faces = []
    for k in range(d):
        seen = set()
        for facet in facet_tuples:
            seen.update(itertools.combinations(facet, k + 1))
        k_faces.append(tuple(sorted(seen)))
    f_vector = tuple(len(k_faces[k]) for k in range(d))
    euler = sum((-1) ** k * f_vector[k] for k in range(d))
    if euler != 1 - (-1) ** d:
        raise RuntimeError("internal error: face lattice violates the Euler relation")
    vertex_indices = tuple(t[0] for t in k_faces[0])
    return FaceLattice(
        input_count=n,
        dim=d,
        vertex_indices=vertex_indices,
        facets=tuple(facet_tuples),
        k_faces=tuple(k_faces),
        f_vector=f_vector,
    )


# ---------------------------------------------------------------------------
# scores


def xi_scores(lattice: FaceLattice, k: int) -> ScoreVector:
    """Score of each input point: (number of k-faces containing it) / (k+1)
    for hull vertices, zero otherwise. Scores are exact rationals and sum to
    the k-face count."""
    if not 0 <= k < lattice.dim:
        raise ValueError(f"face dimension {k} outside 0..{lattice.dim - 1}")
    counts = Counter()
    for face in lattice.k_faces[k]:
        counts.update(face)
    scores = tuple(
        Fraction(counts[i], k + 1) if counts[i] else Fraction(0)
        for i in range(lattice.input_count)
    )
    support = tuple(i for i in range(lattice.input_count) if counts[i])
    return ScoreVector(k=k, scores=scores, support=support)


def weighted_score_sum(sample, scores: ScoreVector, g) -> float:
    """Integral of a test function against the score measure: the sum of
    g(x) times the score of x. Accumulated in exact rationals so a unit
    weight returns the face count exactly."""
    pts = np.atleast_2d(np.asarray(sample, dtype=float))
    vals = np.asarray(g(pts), dtype=float)
    total = Fraction(0)
    for i in scores.support:
        total += Fraction(float(vals[i])) * scores.scores[i]
    return float(total)


# ---------------------------------------------------------------------------
# fast paths


def _cross_sign(pts, o, a, b):
    ox, oy = pts[o]
    ax, ay = pts[a]
    bx, by = pts[b]
    v = (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)
    mag = abs((ax - ox) * (by - oy)) + abs((ay - oy) * (bx - ox))
    if abs(v) > 8 * _EPS * mag + 1e-300:
        return 1 if v > 0 else -1
    fox, foy = Fraction(float(ox)), Fraction(float(oy))
    det = (Fraction(float(ax)) - fox) * (Fraction(float(by)) - foy) - (
        Fraction(float(ay)) - foy
    ) * (Fraction(float(bx)) - fox)
    return _sign(det)


def convex_hull_2d(points) -> np.ndarray:
    """Vertex indices of the planar hull in counterclockwise order.

    Monotone chain on lexicographically sorted candidates that survive a
    directional-extremes prefilter; cross products are float-filtered with an
    exact fallback. Collinear boundary points are not reported as vertices.
    Intended for large general-position samples."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    n = len(pts)
    if n < 3:
        raise ValueError("need at least 3 points")

    x, y = pts[:, 0], pts[:, 1]
    keep = np.ones(n, dtype=bool)
    if n > 64:
        # discard points strictly inside the polygon of 8 directional extremes
        corners = set()
        for vals in (x, y, x + y, x - y):
            corners.add(int(np.argmin(vals)))
            corners.add(int(np.argmax(vals)))
        corner_idx = sorted(corners)
        cpts = pts[corner_idx]
        center = cpts.mean(axis=0)
        ang = np.arctan2(cpts[:, 1] - center[1], cpts[:, 0] - center[0])
        ring = cpts[np.argsort(ang)]
        inside = np.ones(n, dtype=bool)
        for i in range(len(ring)):
            a = ring[i]
            b = ring[(i + 1) % len(ring)]
            e = b - a
            cross = e[0] * (y - a[1]) - e[1] * (x - a[0])
            scale = np.abs(e[0] * (y - a[1])) + np.abs(e[1] * (x - a[0])) + 1e-300
            inside &= cross > 1e-9 * scale
        keep = ~inside
    cand = np.nonzero(keep)[0]
    order = np.lexsort((y[cand], x[cand]))
    cand = cand[order]

    def half_chain(seq):
        chain = []
        for i in seq:
            while len(chain) >= 2 and _cross_sign(pts, chain[-2], chain[-1], i) <= 0:
                chain.pop()
            chain.append(int(i))
        return chain

    lower = half_chain(cand)
    upper = half_chain(cand[::-1])
    hull_idx = lower[:-1] + upper[:-1]
    if len(hull_idx) < 3:
        raise DegenerateInputError("input is lower-dimensional: all points collinear")
    return np.asarray(hull_idx, dtype=int)


def qhull_vertices(points) -> np.ndarray:
    """Sorted hull vertex indices from the scipy/qhull backend."""
    res = _SciPyHull(np.asarray(points, dtype=float))
    return np.sort(res.vertices)


def face_count_bound_ok(lattice: FaceLattice, k: int, coefficient: float) -> bool:
    """Optional sanity bound f_k <= coefficient * n^(d/2); empirical, not a
    correctness requirement."""
    return lattice.f_vector[k] <= coefficient * lattice.input_count ** (lattice.dim / 2)


# ---------------------------------------------------------------------------
# export


def lattice_to_json(lattice: FaceLattice) -> str:
    data = {
        "input_count": lattice.input_count,
        "dim": lattice.dim,
        "vertex_indices": list(lattice.vertex_indices),
        "facets": [list(f) for f in lattice.facets],
        "f_vector": list(lattice.f_vector),
    }
    return json.dumps(data, sort_keys=True, indent=2)


def scores_to_csv(scores: ScoreVector) -> str:
    lines = ["index,numerator,denominator"]
    for i, s in enumerate(scores.scores):
        lines.append(f"{i},{s.numerator},{s.denominator}")
    return "\n".join(lines) + "\n"
