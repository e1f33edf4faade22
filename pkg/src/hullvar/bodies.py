"""Smooth convex bodies: curvature data, boundary quadrature, normalization maps.

The catalog is deliberately small (Euclidean balls, axis-aligned ellipsoids,
and trigonometric radial perturbations of the unit disk) because every body
here must answer exact questions: membership, volume, boundary points with
principal curvatures, curvature-power boundary integrals, nearest-boundary
distances. On top of the catalog sit two geometric normalizations used by the
statistical pipeline:

* an equi-curvature affine map at a boundary point z (volume preserving, fixes
  z and the inner normal, makes all principal curvatures at z equal), and
* an anisotropic boundary-zoom transform that magnifies a neighbourhood of z
  into (tangent, height) coordinates, tangentially at rate (r_z^d lam)^beta
  and radially at the squared rate, with beta = 1/(d+1).

Everything is immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DIM = 5

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class QuadratureError(RuntimeError):
    """Adaptive refinement hit its depth cap; carries the partial value."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    refinements: int


def _adaptive_gl_1d(f, a, b, rel_tol=1e-8, max_depth=14):
    """Composite 16-point Gauss-Legendre, panel count doubled until the
    successive difference is below rel_tol (relative to max(1, |value|))."""
    prev = None
    panels = 1
    for depth in range(max_depth + 1):
        edges = np.linspace(a, b, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1] - edges[0])
        x = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
        w = np.broadcast_to(half * _GL_WEIGHTS, (panels, 16)).ravel()
        val = float(np.asarray(f(x), dtype=float) @ w)
        if prev is not None:
            err = abs(val - prev)
            if err <= rel_tol * max(1.0, abs(val)):
                return QuadratureResult(val, err, depth)
        prev = val
        panels *= 2
    raise QuadratureError("boundary quadrature did not converge", prev)


def _adaptive_gl_2d(f, a1, b1, a2, b2, rel_tol=1e-8, max_depth=9):
    """Tensor-product version of _adaptive_gl_1d, both axes refined in
    lockstep. f takes flat arrays (x, y) of equal length."""
    prev = None
    panels = 1
    for depth in range(max_depth + 1):
        def axis(a, b):
            edges = np.linspace(a, b, panels + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1] - edges[0])
            x = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
            w = np.broadcast_to(half * _GL_WEIGHTS, (panels, 16)).ravel()
            return x, w

        x1, w1 = axis(a1, b1)
        x2, w2 = axis(a2, b2)
        xx, yy = np.meshgrid(x1, x2, indexing="ij")
        vals = np.asarray(f(xx.ravel(), yy.ravel()), dtype=float).reshape(xx.shape)
        val = float(w1 @ vals @ w2)
        if prev is not None:
            err = abs(val - prev)
            if err <= rel_tol * max(1.0, abs(val)):
                return QuadratureResult(val, err, depth)
        prev = val
        panels *= 2
    raise QuadratureError("surface quadrature did not converge", prev)


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# bodies


@dataclass(frozen=True, eq=False)
class SmoothBody:
    """A compact convex body with smooth, positively curved boundary."""

    kind: str
    dim: int
    radius: float | None = None
    semi_axes: tuple[float, ...] | None = None
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()
    volume: float = 0.0
    reach_lower_bound: float = 0.0
    bounding_box: tuple[tuple[float, float], ...] = ()
    body_id: str = ""

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Vectorized closed-body membership for an (m, dim) array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return np.einsum("ij,ij->i", pts, pts) <= self.radius**2
        if self.kind == "ellipsoid":
            scaled = pts / np.asarray(self.semi_axes)
            return np.einsum("ij,ij->i", scaled, scaled) <= 1.0
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        return np.hypot(pts[:, 0], pts[:, 1]) <= self._radial(theta)

    def _radial(self, theta):
        """Perturbed-disk radial function rho(theta)."""
        rho = np.ones_like(theta)
        for j, c in enumerate(self.cos_coeffs, start=1):
            if c:
                rho = rho + c * np.cos(j * theta)
        for j, s in enumerate(self.sin_coeffs, start=1):
            if s:
                rho = rho + s * np.sin(j * theta)
        return rho

    def _radial_derivs(self, theta):
        rho = np.ones_like(theta)
        d1 = np.zeros_like(theta)
        d2 = np.zeros_like(theta)
        for j, c in enumerate(self.cos_coeffs, start=1):
            if c:
                rho += c * np.cos(j * theta)
                d1 += -c * j * np.sin(j * theta)
                d2 += -c * j * j * np.cos(j * theta)
        for j, s in enumerate(self.sin_coeffs, start=1):
            if s:
                rho += s * np.sin(j * theta)
                d1 += s * j * np.cos(j * theta)
                d2 += -s * j * j * np.sin(j * theta)
        return rho, d1, d2

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        if self.kind == "ball":
            cfg.update(dim=self.dim, radius=self.radius)
        elif self.kind == "ellipsoid":
            cfg.update(semi_axes=list(self.semi_axes))
        else:
            cfg.update(
                cos_coeffs={j: c for j, c in enumerate(self.cos_coeffs, 1) if c},
                sin_coeffs={j: s for j, s in enumerate(self.sin_coeffs, 1) if s},
            )
        return cfg


def _check_dim(dim):
    if not 2 <= dim <= MAX_DIM:
        raise ValueError(f"dimension {dim} outside supported range 2..{MAX_DIM}")


def make_ball(dim: int, radius: float = 1.0) -> SmoothBody:
    _check_dim(dim)
    if radius <= 0:
        raise ValueError("radius must be positive")
    box = tuple((-radius, radius) for _ in range(dim))
    return SmoothBody(
        kind="ball",
        dim=dim,
        radius=float(radius),
        volume=unit_ball_volume(dim) * radius**dim,
        reach_lower_bound=float(radius),
        bounding_box=box,
        body_id=f"ball:d={dim},r={radius:g}",
    )


def make_ellipsoid(semi_axes) -> SmoothBody:
    axes = tuple(float(a) for a in semi_axes)
    _check_dim(len(axes))
    if any(a <= 0 for a in axes):
        raise ValueError("semi-axes must be positive")
    dim = len(axes)
    # largest principal curvature over the boundary is a_max / a_min^2
    reach = min(axes) ** 2 / max(axes)
    return SmoothBody(
        kind="ellipsoid",
        dim=dim,
        semi_axes=axes,
        volume=unit_ball_volume(dim) * math.prod(axes),
        reach_lower_bound=reach,
        bounding_box=tuple((-a, a) for a in axes),
        body_id="ellipsoid:" + ",".join(f"{a:g}" for a in axes),
    )


def _coeff_tuple(coeffs) -> tuple[float, ...]:
    if not coeffs:
        return ()
    items = {int(j): float(v) for j, v in dict(coeffs).items()}
    if any(j < 1 for j in items):
        raise ValueError("harmonic indices must be >= 1")
    top = max(items)
    return tuple(items.get(j, 0.0) for j in range(1, top + 1))


def make_perturbed_disk(cos_coeffs=None, sin_coeffs=None, convexity_grid: int = 10_000) -> SmoothBody:
    cos_t = _coeff_tuple(cos_coeffs)
    sin_t = _coeff_tuple(sin_coeffs)
    probe = SmoothBody(kind="perturbed_disk", dim=2, cos_coeffs=cos_t, sin_coeffs=sin_t)
    theta = np.linspace(0.0, 2 * math.pi, convexity_grid, endpoint=False)
    rho, d1, d2 = probe._radial_derivs(theta)
    if np.any(rho <= 0):
        raise ValueError("perturbed disk rejected: radial function not positive")
    curv_num = rho**2 + 2 * d1**2 - rho * d2
    if np.any(curv_num <= 0):
        j = int(np.argmin(curv_num))
        raise ValueError(
            f"perturbed disk rejected: not convex (curvature <= 0 near theta={theta[j]:.4f})"
        )
    kappa = curv_num / (rho**2 + d1**2) ** 1.5
    # Parseval closed form for the area of a trigonometric radial graph
    area = math.pi * (1.0 + 0.5 * (sum(c * c for c in cos_t) + sum(s * s for s in sin_t)))
    # trapezoid rule is exact for trig polynomials once the grid resolves them
    area_quad = float(np.mean(rho**2) / 2.0) * 2 * math.pi
    if abs(area - area_quad) > 1e-10 * area:
        raise ValueError("perturbed disk volume quadrature mismatch")
    rho_max_bound = 1.0 + sum(abs(c) for c in cos_t) + sum(abs(s) for s in sin_t)
    harmonics = [f"c{j}={c:g}" for j, c in enumerate(cos_t, 1) if c]
    harmonics += [f"s{j}={s:g}" for j, s in enumerate(sin_t, 1) if s]
    return SmoothBody(
        kind="perturbed_disk",
        dim=2,
        cos_coeffs=cos_t,
        sin_coeffs=sin_t,
        volume=area,
        # grid max of kappa can undershoot the true max; shave a margin so the
        # stored value stays a genuine lower bound for the reach
        reach_lower_bound=float(1.0 / np.max(kappa)) * (1.0 - 1e-6),
        bounding_box=((-rho_max_bound, rho_max_bound), (-rho_max_bound, rho_max_bound)),
        body_id="pdisk:" + ";".join(harmonics or ["round"]),
    )


def make_body(kind: str, **parameters) -> SmoothBody:
    """Factory for the body catalog; validates and runs construction checks."""
    if kind == "ball":
        return make_ball(parameters.pop("dim"), parameters.pop("radius", 1.0))
    if kind == "ellipsoid":
        return make_ellipsoid(parameters.pop("semi_axes"))
    if kind == "perturbed_disk":
        return make_perturbed_disk(
            parameters.pop("cos_coeffs", None),
            parameters.pop("sin_coeffs", None),
            parameters.pop("convexity_grid", 10_000),
        )
    raise ValueError(f"unknown body kind {kind!r}")


def body_from_config(cfg: dict) -> SmoothBody:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if "semi_axes" in cfg:
        cfg["semi_axes"] = tuple(cfg["semi_axes"])
    return make_body(kind, **cfg)


# ---------------------------------------------------------------------------
# boundary points


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    """A boundary point with its full second-order data."""

    z: np.ndarray
    param: np.ndarray
    inner_normal: np.ndarray
    principal_curvatures: np.ndarray  # ascending
    principal_directions: np.ndarray  # rows, orthonormal, tangent
    gauss_curvature: float
    curvature_radius: float
    osculating_center: np.ndarray


def _sphere_point(angles: np.ndarray) -> np.ndarray:
    """Unit vector from the cascade chart: u1 = cos t1, u2 = sin t1 cos t2, ..."""
    u = []
    sin_prod = 1.0
    for t in angles[:-1]:
        u.append(sin_prod * math.cos(t))
        sin_prod *= math.sin(t)
    u.append(sin_prod * math.cos(angles[-1]))
    u.append(sin_prod * math.sin(angles[-1]))
    return np.array(u)


def _tangent_frame(normal: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the hyperplane orthogonal to `normal`.

    Gram-Schmidt over coordinate axes, least-aligned axis first, so the frame
    is a stable function of the normal alone.
    """
    d = len(normal)
    order = np.argsort(np.abs(normal), kind="stable")
    basis = []
    for idx in order:
        w = np.zeros(d)
        w[idx] = 1.0
        w = w - normal * normal[idx]
        for b in basis:
            w = w - b * (b @ w)
        norm = np.linalg.norm(w)
        if norm > 1e-10:
            basis.append(w / norm)
        if len(basis) == d - 1:
            break
    return np.array(basis)


def boundary_point(body: SmoothBody, param) -> BoundaryPoint:
    """Evaluate the boundary chart and its curvature data at `param`.

    `param` is a length d-1 vector of chart angles.
    """
    angles = np.atleast_1d(np.asarray(param, dtype=float))
    if len(angles) != body.dim - 1:
        raise ValueError(f"chart parameter must have length {body.dim - 1}")

    if body.kind == "perturbed_disk":
        theta = float(angles[0])
        rho, d1, d2 = body._radial_derivs(np.array([theta]))
        rho, d1, d2 = float(rho[0]), float(d1[0]), float(d2[0])
        e_r = np.array([math.cos(theta), math.sin(theta)])
        e_t = np.array([-math.sin(theta), math.cos(theta)])
        z = rho * e_r
        tangent = d1 * e_r + rho * e_t
        speed = math.hypot(*tangent)
        tangent = tangent / speed
        outer = np.array([tangent[1], -tangent[0]])
        kappa = (rho**2 + 2 * d1**2 - rho * d2) / (rho**2 + d1**2) ** 1.5
        curvatures = np.array([kappa])
        directions = tangent[None, :]
        inner = -outer
    elif body.kind == "ball":
        u = _sphere_point(angles)
        z = body.radius * u
        inner = -u
        curvatures = np.full(body.dim - 1, 1.0 / body.radius)
        directions = _tangent_frame(u)
        kappa = body.radius ** (-(body.dim - 1))
    else:
        axes = np.asarray(body.semi_axes)
        u = _sphere_point(angles)
        z = axes * u
        m_diag = 1.0 / axes**2
        grad = m_diag * z
        q = float(np.linalg.norm(grad))
        outer = grad / q
        frame = _tangent_frame(outer)
        shape_matrix = (frame * m_diag) @ frame.T / q
        eigvals, eigvecs = np.linalg.eigh(shape_matrix)
        curvatures = eigvals
        directions = eigvecs.T @ frame
        kappa = float(np.prod(m_diag)) * q ** (-(body.dim + 1))
        inner = -outer

    kappa = float(kappa)
    r_z = kappa ** (-1.0 / (body.dim - 1))
    return BoundaryPoint(
        z=z,
        param=angles,
        inner_normal=inner,
        principal_curvatures=np.asarray(curvatures, dtype=float),
        principal_directions=np.asarray(directions, dtype=float),
        gauss_curvature=kappa,
        curvature_radius=r_z,
        osculating_center=z + r_z * inner,
    )


# ---------------------------------------------------------------------------
# boundary integrals


def boundary_curvature_integral(body: SmoothBody, weight=None, power=None) -> QuadratureResult:
    """Integrate weight(z) * kappa(z)**power over the boundary.

    Default power is 1/(dim+1). `weight` maps an (m, dim) array of boundary
    points to m values; omitted means 1. Quadrature is adaptive composite
    Gauss-Legendre; dims 4 and 5 are served by closed forms (unweighted,
    default power only).
    """
    d = body.dim
    p = 1.0 / (d + 1) if power is None else float(power)

    if d == 2:
        def integrand(theta):
            if body.kind == "perturbed_disk":
                rho, d1, d2 = body._radial_derivs(theta)
                e_r = np.stack([np.cos(theta), np.sin(theta)], axis=1)
                e_t = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
                z = rho[:, None] * e_r
                speed = np.hypot(d1, rho)
                kappa = (rho**2 + 2 * d1**2 - rho * d2) / (rho**2 + d1**2) ** 1.5
            elif body.kind == "ball":
                r = body.radius
                z = r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
                speed = np.full_like(theta, r)
                kappa = np.full_like(theta, 1.0 / r)
            else:
                a, b = body.semi_axes
                z = np.stack([a * np.cos(theta), b * np.sin(theta)], axis=1)
                speed = np.hypot(a * np.sin(theta), b * np.cos(theta))
                kappa = a * b / speed**3
            vals = kappa**p * speed
            if weight is not None:
                vals = vals * np.asarray(weight(z), dtype=float)
            return vals

        return _adaptive_gl_1d(integrand, 0.0, 2 * math.pi)

    if d == 3:
        axes = np.array([body.radius] * 3) if body.kind == "ball" else np.asarray(body.semi_axes)

        def integrand(theta, phi):
            st, ct = np.sin(theta), np.cos(theta)
            sp, cp = np.sin(phi), np.cos(phi)
            z = np.stack([axes[0] * ct, axes[1] * st * cp, axes[2] * st * sp], axis=1)
            zt = np.stack([-axes[0] * st, axes[1] * ct * cp, axes[2] * ct * sp], axis=1)
            zp = np.stack([np.zeros_like(st), -axes[1] * st * sp, axes[2] * st * cp], axis=1)
            cross = np.cross(zt, zp)
            jac = np.linalg.norm(cross, axis=1)
            q2 = np.einsum("ij,ij->i", z / axes**2, z / axes**2)
            kappa = (1.0 / np.prod(axes**2)) * q2 ** (-(d + 1) / 2.0)
            vals = kappa**p * jac
            if weight is not None:
                vals = vals * np.asarray(weight(z), dtype=float)
            return vals

        return _adaptive_gl_2d(integrand, 0.0, math.pi, 0.0, 2 * math.pi)

    if weight is not None or power is not None:
        raise NotImplementedError("weighted boundary integrals are implemented for dim <= 3")
    if body.kind == "ball":
        r = body.radius
        surface = d * unit_ball_volume(d) * r ** (d - 1)
        value = surface * r ** (-(d - 1) * p)
        return QuadratureResult(value, 0.0, 0)
    # linear image with matrix T scales the integral by |det T|^{(d-1)/(d+1)};
    # diag(semi_axes) maps the unit ball to the ellipsoid
    det = math.prod(body.semi_axes)
    unit = d * unit_ball_volume(d)
    return QuadratureResult(det ** ((d - 1) / (d + 1)) * unit, 0.0, 0)


def affine_surface_area(body: SmoothBody) -> QuadratureResult:
    """Boundary integral of kappa^{1/(dim+1)}, with quadrature error estimate."""
    return boundary_curvature_integral(body)


def shell_area_by_jacobian(body: SmoothBody, s: float) -> float:
    """Area of the inner boundary shell of depth s via the normal-offset
    Jacobian: integral over the boundary of (s - s^2 kappa / 2). Valid for
    d = 2 and s at most the reach."""
    if body.dim != 2:
        raise ValueError("jacobian shell area implemented for dim 2")
    if not 0 < s <= body.reach_lower_bound:
        raise ValueError("shell depth must lie in (0, reach]")
    res = boundary_curvature_integral(
        body, weight=None, power=0.0
    )
    perim = res.value
    kap = boundary_curvature_integral(body, weight=None, power=1.0).value
    return s * perim - 0.5 * s * s * kap


# ---------------------------------------------------------------------------
# affine normalizer


@dataclass(frozen=True, eq=False)
class AffineNormalizer:
    """Volume-preserving affine map fixing a boundary point and its normal,
    scaling each principal direction so the image curvatures at the point
    are all equal to 1/r_z."""

    base: BoundaryPoint
    matrix: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.matrix.T + self.translation

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


def affine_normalizer(body: SmoothBody, bp: BoundaryPoint) -> AffineNormalizer:
    if np.any(bp.principal_curvatures <= 0):
        raise ValueError("normalizer requires strictly positive curvatures")
    scales = np.sqrt(bp.principal_curvatures * bp.curvature_radius)
    # pin the determinant to 1 exactly; the drift is within curvature rounding
    scales = scales / math.prod(scales) ** (1.0 / len(scales))
    rows = np.vstack([bp.principal_directions, bp.inner_normal[None, :]])
    diag = np.concatenate([scales, [1.0]])
    matrix = rows.T @ (diag[:, None] * rows)
    translation = bp.z - matrix @ bp.z
    return AffineNormalizer(base=bp, matrix=matrix, translation=translation)


# ---------------------------------------------------------------------------
# boundary-zoom scaling transform


@dataclass(frozen=True, eq=False)
class ScalingTransform:
    """Anisotropic zoom at a boundary point.

    Points are addressed in polar coordinates (r, u) about the osculating
    center z_0: r = |x - z_0|, u = (x - z_0)/r. The forward map sends
    u to tangential coordinates via the inverse sphere exponential at u_z
    (the direction of z from z_0) times the tangential rate, and r to the
    scaled height (1 - r/r_z) times the squared rate.
    """

    body: SmoothBody
    base: BoundaryPoint
    lam: float
    beta: float
    tangential_rate: float
    height_rate: float
    u_z: np.ndarray
    frame: np.ndarray  # (d-1, d) orthonormal tangent basis at u_z

    def forward_polar(self, r, u):
        r = np.asarray(r, dtype=float)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        cosang = np.clip(u @ self.u_z, -1.0, 1.0)
        w = u - cosang[:, None] * self.u_z
        wnorm = np.linalg.norm(w, axis=1)
        phi = np.arccos(cosang)
        if np.any((wnorm < 1e-12) & (cosang < 0)):
            raise ValueError("antipodal direction: sphere exponential not invertible")
        unit_w = w / np.maximum(wnorm, 1e-12)[:, None]
        v = self.tangential_rate * phi[:, None] * (unit_w @ self.frame.T)
        h = self.height_rate * (1.0 - r / self.base.curvature_radius)
        return v, h

    def inverse_polar(self, v, h):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        h = np.asarray(h, dtype=float)
        phi = np.linalg.norm(v, axis=1) / self.tangential_rate
        if np.any(phi >= math.pi):
            raise ValueError("tangential coordinate outside the injectivity region")
        r = self.base.curvature_radius * (1.0 - h / self.height_rate)
        unit_v = np.where(phi[:, None] > 0, v / np.where(phi == 0, 1, phi * self.tangential_rate)[:, None], 0.0)
        u = np.cos(phi)[:, None] * self.u_z + np.sin(phi)[:, None] * (unit_v @ self.frame)
        return r, u

    def forward_points(self, points):
        """Cartesian points -> (v', h'); points must differ from z_0."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.base.osculating_center
        r = np.linalg.norm(rel, axis=1)
        if np.any(r == 0):
            raise ValueError("osculating center has no polar address")
        return self.forward_polar(r, rel / r[:, None])

    def inverse_points(self, v, h):
        r, u = self.inverse_polar(v, h)
        return self.base.osculating_center + r[:, None] * u


def scaling_transform(body: SmoothBody, bp: BoundaryPoint, lam: float) -> ScalingTransform:
    if lam < 1:
        raise ValueError("intensity must be >= 1")
    d = body.dim
    beta = 1.0 / (d + 1)
    rate = (bp.curvature_radius**d * lam) ** beta
    u_z = -bp.inner_normal
    return ScalingTransform(
        body=body,
        base=bp,
        lam=float(lam),
        beta=beta,
        tangential_rate=rate,
        height_rate=rate**2,
        u_z=u_z,
        frame=_tangent_frame(u_z),
    )


# ---------------------------------------------------------------------------
# boundary distance / shells


def _newton_bisect(f, df, lo, hi, tol=1e-15, max_iter=200):
    """Safeguarded scalar root finder on a bracket with f(lo), f(hi) of
    opposite signs. Newton steps falling outside the shrinking bracket are
    replaced by bisection."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise RuntimeError("root finder: bracket does not straddle a root")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0:
            return x
        if flo * fx < 0:
            hi = x
        else:
            lo, flo = x, fx
        dfx = df(x)
        x_new = x - fx / dfx if dfx != 0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        scale = max(1.0, abs(x_new))
        if abs(x_new - x) < tol * scale or hi - lo < tol * scale:
            return x_new
        x = x_new
    raise RuntimeError("root finder failed to converge")


def _ellipsoid_foot(axes: np.ndarray, x: np.ndarray):
    """Nearest boundary point of an axis-aligned ellipsoid from an interior
    point, exact over axis-aligned edge cases. Returns (distance, foot)."""
    d = len(axes)
    if d == 1:
        z = math.copysign(axes[0], x[0]) if x[0] != 0 else axes[0]
        return abs(z - x[0]), np.array([z])
    a2 = axes**2
    nonzero = x != 0.0
    if np.all(nonzero):
        def f(t):
            return float(np.sum(a2 * x**2 / (a2 + t) ** 2) - 1.0)

        def fp(t):
            return float(-2.0 * np.sum(a2 * x**2 / (a2 + t) ** 3))

        lo = -float(np.min(a2))
        lo = lo + max(1e-300, abs(lo)) * 1e-14
        while f(lo) < 0:
            lo *= 0.5  # pathological rounding; shrink toward 0 keeps a bracket
        t = _newton_bisect(f, fp, lo, 0.0) if f(0.0) < 0 else 0.0
        z = a2 * x / (a2 + t)
        return float(np.linalg.norm(z - x)), z

    candidates = []
    reduced_axes = axes[nonzero]
    if reduced_axes.size:
        s_red, z_red = _ellipsoid_foot(reduced_axes, x[nonzero])
        z = np.zeros(d)
        z[nonzero] = z_red
        candidates.append((float(np.linalg.norm(z - x)), z))
    else:
        i = int(np.argmin(axes))
        z = np.zeros(d)
        z[i] = axes[i]
        candidates.append((axes[i], z))
    # off-subspace branch: the zeroed coordinate absorbs the constraint slack
    for i in np.nonzero(~nonzero)[0]:
        denom = a2 - a2[i]
        if np.any((np.abs(denom) < 1e-300) & nonzero):
            continue
        z = np.zeros(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            z[nonzero] = (a2 * x)[nonzero] / denom[nonzero]
        slack = 1.0 - float(np.sum((z[nonzero] / axes[nonzero]) ** 2))
        if slack < 0:
            continue
        z[i] = axes[i] * math.sqrt(slack)
        candidates.append((float(np.linalg.norm(z - x)), z))
    return min(candidates, key=lambda c: c[0])


def boundary_distance(body: SmoothBody, x) -> tuple[float, np.ndarray]:
    """Distance from an interior point to the boundary with the nearest
    boundary point. Newton with bisection safeguard, tolerance 1e-10."""
    x = np.asarray(x, dtype=float)
    if not body.contains(x[None, :])[0]:
        raise ValueError("point is outside the body")
    if body.kind == "ball":
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            z = np.zeros(body.dim)
            z[0] = body.radius
            return body.radius, z
        return body.radius - norm, x * (body.radius / norm)
    if body.kind == "ellipsoid":
        return _ellipsoid_foot(np.asarray(body.semi_axes), x)

    # perturbed disk: dense init + Newton on the foot-point equation
    grid = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
    rho = body._radial(grid)
    zx, zy = rho * np.cos(grid), rho * np.sin(grid)
    i = int(np.argmin((zx - x[0]) ** 2 + (zy - x[1]) ** 2))
    theta = grid[i]

    def g_and_dg(t):
        arr = np.array([t])
        rho, d1, d2 = body._radial_derivs(arr)
        rho, d1, d2 = float(rho[0]), float(d1[0]), float(d2[0])
        e_r = np.array([math.cos(t), math.sin(t)])
        e_t = np.array([-math.sin(t), math.cos(t)])
        z = rho * e_r
        z1 = d1 * e_r + rho * e_t
        z2 = (d2 - rho) * e_r + 2 * d1 * e_t
        diff = z - x
        return float(diff @ z1), float(z1 @ z1 + diff @ z2), z

    t = theta
    for _ in range(60):
        g, dg, z = g_and_dg(t)
        if abs(g) < 1e-13:
            break
        step = g / dg if dg != 0 else 0.0
        step = max(-0.05, min(0.05, step))
        t -= step
        if abs(step) < 1e-13:
            break
    else:
        # bisection fallback on the bracketing grid neighbours
        lo, hi = grid[i] - (grid[1] - grid[0]), grid[i] + (grid[1] - grid[0])
        t = _newton_bisect(lambda tt: g_and_dg(tt)[0], lambda tt: g_and_dg(tt)[1], lo, hi)
    _, _, z = g_and_dg(t)
    return float(np.linalg.norm(z - x)), z


def boundary_distances(body: SmoothBody, points: np.ndarray) -> np.ndarray:
    """Vectorized boundary distances for interior points.

    Points with exactly-zero coordinates (ellipsoid) route through the exact
    scalar path; the generic branch is a bracketed vector Newton.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if body.kind == "ball":
        return body.radius - np.linalg.norm(pts, axis=1)
    if body.kind == "ellipsoid":
        axes = np.asarray(body.semi_axes)
        a2 = axes**2
        out = np.empty(len(pts))
        generic = np.all(pts != 0.0, axis=1)
        if np.any(generic):
            xs = pts[generic]
            lo = np.full(len(xs), -float(np.min(a2)) * (1 - 1e-14))
            hi = np.zeros(len(xs))

            def fval(t):
                return np.sum(a2 * xs**2 / (a2 + t[:, None]) ** 2, axis=1) - 1.0

            t = np.zeros(len(xs))
            flo = fval(lo)
            for _ in range(200):
                ft = fval(t)
                move_hi = ft < 0
                hi = np.where(move_hi, t, hi)
                lo = np.where(~move_hi, t, lo)
                dft = -2.0 * np.sum(a2 * xs**2 / (a2 + t[:, None]) ** 3, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    t_new = t - ft / dft
                bad = ~((t_new > lo) & (t_new < hi)) | ~np.isfinite(t_new)
                t_new = np.where(bad, 0.5 * (lo + hi), t_new)
                if np.max(np.abs(t_new - t)) < 1e-14:
                    t = t_new
                    break
                t = t_new
            z = a2 * xs / (a2 + t[:, None])
            out[generic] = np.linalg.norm(z - xs, axis=1)
        for j in np.nonzero(~generic)[0]:
            out[j] = _ellipsoid_foot(axes, pts[j])[0]
        return out

    # perturbed disk: chunked dense grid init + vector Newton on the angle
    grid = np.linspace(0.0, 2 * math.pi, 2048, endpoint=False)
    rho_g = body._radial(grid)
    bx, by = rho_g * np.cos(grid), rho_g * np.sin(grid)
    out = np.empty(len(pts))
    chunk_size = 2048
    for start in range(0, len(pts), chunk_size):
        chunk = pts[start : start + chunk_size]
        d2 = (bx[None, :] - chunk[:, :1]) ** 2 + (by[None, :] - chunk[:, 1:2]) ** 2
        t = grid[np.argmin(d2, axis=1)]
        for _ in range(40):
            rho, d1, dd2 = body._radial_derivs(t)
            ct, st = np.cos(t), np.sin(t)
            zx, zy = rho * ct, rho * st
            z1x, z1y = d1 * ct - rho * st, d1 * st + rho * ct
            z2x = (dd2 - rho) * ct - 2 * d1 * st
            z2y = (dd2 - rho) * st + 2 * d1 * ct
            gx, gy = zx - chunk[:, 0], zy - chunk[:, 1]
            g = gx * z1x + gy * z1y
            dg = z1x**2 + z1y**2 + gx * z2x + gy * z2y
            # a wrong-convergence angle can only overestimate the distance,
            # so clipping the step never corrupts shell membership counts
            step = np.clip(np.where(dg != 0, g / np.where(dg == 0, 1, dg), 0.0), -0.05, 0.05)
            t = t - step
            if np.max(np.abs(step)) < 1e-13:
                break
        rho = body._radial(t)
        out[start : start + chunk_size] = np.hypot(
            rho * np.cos(t) - chunk[:, 0], rho * np.sin(t) - chunk[:, 1]
        )
    return out


def inner_parallel_contains(body: SmoothBody, x, s: float) -> bool:
    """True when the interior point lies in the depth-s boundary shell."""
    dist, _ = boundary_distance(body, x)
    return dist <= s


# ---------------------------------------------------------------------------


def epsilon_lambda(lam: float, d: int, d3: float = 1.0) -> float:
    """Near-boundary shell width (12 d log(lam) / (d3 lam))^{1/(d+1)};
    diagnostics only. d3 is a configurable positive constant."""
    if lam <= 1:
        raise ValueError("intensity must exceed 1")
    if d3 <= 0:
        raise ValueError("d3 must be positive")
    return (12.0 * d * math.log(lam) / (d3 * lam)) ** (1.0 / (d + 1))
