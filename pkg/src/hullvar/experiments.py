"""Monte Carlo sweep orchestration for hull statistics on convex bodies.

Runs replicated sample -> hull -> score pipelines over geometric intensity or
count grids, attaches bootstrap confidence intervals, fits log-log scaling
exponents against the expected (d-1)/(d+1) rate, extracts normalized-constant
plateaus, and hosts the coupled binomial/Poisson gap comparison, the hull
volume variance identity, and the boundary-integral consistency checks that
tie sweep output to the window estimators in the paraboloid module.

Every stochastic call derives its stream from the single config seed and a
role path, so reruns are byte-identical. Statistics use a fast face-counting
path (monotone chain in the plane, the qhull backend above it); its agreement
with the exact rational face lattice is enforced by the test suite.
"""

import csv
import io
import itertools
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import bodies, hull, sampling

_BOOTSTRAP_B = 1000
_CI_Z = 1.959963984540054  # two-sided 95% normal quantile
_MODES = ("poisson", "binomial", "coupled")

_ROW_FIELDS = (
    "level", "status",
    "mean_fk", "mean_fk_lo", "mean_fk_hi",
    "var_fk", "var_fk_lo", "var_fk_hi",
    "mean_gsum", "var_gsum", "var_gsum_lo", "var_gsum_hi",
    "wide_ci", "replications",
)

_DEPOISSON_FIELDS = (
    "n", "var_binomial", "var_poisson", "var_poisson_lo", "var_poisson_hi",
    "gap", "gap_lo", "gap_hi", "ratio", "count_mismatch_rate", "replications",
)


# ---------------------------------------------------------------------------
# test-function registry


def test_function(g_id: str):
    """Registry of closed-form boundary weights, keyed by a short id.

    Supported ids: "const", "zero", "coord:i", and "gauss:c1,...,cd,w" for
    exp(-|x - c|^2 / w^2). Closed forms keep the companion boundary integrals
    computable by the same certified quadrature as the surface area.
    """
    if g_id == "const":
        return lambda pts: np.ones(len(np.atleast_2d(pts)))
    if g_id == "zero":
        return lambda pts: np.zeros(len(np.atleast_2d(pts)))
    if g_id.startswith("coord:"):
        try:
            axis = int(g_id.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad coordinate index in test function id {g_id!r}")
        if axis < 0:
            raise ValueError(f"bad coordinate index in test function id {g_id!r}")
        return lambda pts: np.atleast_2d(pts)[:, axis]
    if g_id.startswith("gauss:"):
        try:
            parts = [float(p) for p in g_id.split(":", 1)[1].split(",")]
        except ValueError:
            raise ValueError(f"bad gaussian parameters in test function id {g_id!r}")
        if len(parts) < 3:
            raise ValueError(f"gaussian id needs center and width: {g_id!r}")
        center = np.array(parts[:-1])
        width = parts[-1]
        if width <= 0:
            raise ValueError("gaussian width must be positive")

        def bump(pts):
            diff = np.atleast_2d(pts) - center
            return np.exp(-np.einsum("ij,ij->i", diff, diff) / width**2)

        return bump
    raise ValueError(f"unknown test function id {g_id!r}")


# ---------------------------------------------------------------------------
# configuration and report containers


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a body, a face dimension, a sampling mode, and a grid of
    intensity levels (Poisson) or point counts (binomial/coupled)."""

    body: bodies.SmoothBody
    k: int
    mode: str
    grid: tuple
    replications: int
    seed: int
    g_id: str = "const"
    out_dir: str = ""
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        if len(self.grid) == 0:
            raise ValueError("grid must contain at least one level")
        arr = np.asarray(self.grid, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("grid levels must be finite and positive")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if int(self.replications) < 2:
            raise ValueError("replications must be at least 2")
        object.__setattr__(self, "replications", int(self.replications))
        if not 0 <= self.k < self.body.dim:
            raise ValueError(f"k must lie in 0..{self.body.dim - 1}")
        test_function(self.g_id)

    def to_config(self) -> dict:
        return {
            "body": self.body.to_config(),
            "k": self.k,
            "mode": self.mode,
            "grid": [float(x) for x in self.grid],
            "replications": self.replications,
            "seed": int(self.seed),
            "g": self.g_id,
            "out_dir": self.out_dir,
            "label": self.label,
        }


@dataclass(frozen=True)
class VarianceReport:
    """Per-grid-point hull statistics with bootstrap confidence intervals.

    Wall times are kept out of the CSV so reruns stay byte-identical; they
    travel separately in `timings` (one entry per grid point, seconds)."""

    config: SweepConfig
    rows: tuple
    timings: tuple


@dataclass(frozen=True)
class ScalingFit:
    """Ordinary least squares fit of log statistic vs log level, with the
    normalized-constant plateau and its surface-area quotient."""

    statistic: str
    slope: float
    intercept: float
    slope_se: float
    theoretical_slope: float
    levels: tuple
    normalized: tuple
    normalized_se: tuple
    plateau: float
    plateau_se: float
    plateau_cv: float
    fhat: float
    fhat_se: float
    surface_integral: float


# ---------------------------------------------------------------------------
# fast face statistics


def face_statistics(points, k: int, g=None):
    """(f_k, sum of g at hull points weighted by k-face incidence scores).

    Designed for throughput inside replication loops: the planar case runs on
    the prefiltered monotone chain where every polygon vertex carries unit
    weight for k in {0, 1}; higher dimensions enumerate k-faces from the qhull
    facet list, which is exact for samples in general position. `g = None`
    skips evaluation and returns the face count as the weighted sum.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2d array")
    n, d = pts.shape
    if not 0 <= k < d:
        raise ValueError(f"face dimension {k} outside 0..{d - 1}")
    if n <= d:
        # at most a simplex: every (k+1)-subset spans a face
        fk = math.comb(n, k + 1)
        if g is None:
            return fk, float(fk)
        weights = np.full(n, math.comb(max(n - 1, 0), k) / (k + 1.0))
        return fk, float(weights @ np.asarray(g(pts), dtype=float))
    if d == 2:
        idx = hull.convex_hull_2d(pts)
        fk = int(len(idx))
        if g is None:
            return fk, float(fk)
        return fk, float(np.sum(np.asarray(g(pts[idx]), dtype=float)))
    from scipy.spatial import ConvexHull as _QHull

    simplices = _QHull(pts).simplices
    if k == d - 1:
        faces = np.unique(np.sort(simplices, axis=1), axis=0)
    else:
        parts = [
            np.sort(simplices[:, list(c)], axis=1)
            for c in itertools.combinations(range(d), k + 1)
        ]
        faces = np.unique(np.vstack(parts), axis=0)
    fk = int(len(faces))
    if g is None:
        return fk, float(fk)
    counts = np.bincount(faces.ravel(), minlength=n)
    return fk, float((counts / (k + 1.0)) @ np.asarray(g(pts), dtype=float))


def hull_volume(points) -> float:
    """Volume of the convex hull: shoelace over the chain in the plane,
    facet-cone volume from the qhull backend above it."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        idx = hull.convex_hull_2d(pts)
        x, y = pts[idx, 0], pts[idx, 1]
        return float(0.5 * abs(x @ np.roll(y, -1) - y @ np.roll(x, -1)))
    from scipy.spatial import ConvexHull as _QHull

    return float(_QHull(pts).volume)


# ---------------------------------------------------------------------------
# sweeps


def _draw_points(config: SweepConfig, level, seed: int) -> np.ndarray:
    if config.mode == "poisson":
        return sampling.sample_poisson(config.body, float(level), seed).points
    if config.mode == "binomial":
        return sampling.sample_binomial(config.body, int(level), seed).points
    # coupled mode feeds the binomial view through the shared-stream pair so
    # sweep output is directly comparable with depoisson_compare
    return sampling.sample_coupled(config.body, int(level), seed).binomial_view


def _percentile_ci(samples: np.ndarray, point: float):
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return min(float(lo), point), max(float(hi), point)


def _statistics_row(config: SweepConfig, li: int, level: float,
                    fk: np.ndarray, gs: np.ndarray) -> dict:
    reps = len(fk)
    mean_f = float(fk.mean())
    var_f = float(fk.var(ddof=1))
    mean_g = float(gs.mean())
    var_g = float(gs.var(ddof=1))
    boot = sampling.derive_rng(config.seed, "bootstrap", li)
    idx = boot.integers(0, reps, size=(_BOOTSTRAP_B, reps))
    sam_f = fk[idx]
    m_lo, m_hi = _percentile_ci(sam_f.mean(axis=1), mean_f)
    v_lo, v_hi = _percentile_ci(sam_f.var(axis=1, ddof=1), var_f)
    gv_lo, gv_hi = _percentile_ci(gs[idx].var(axis=1, ddof=1), var_g)
    wide = bool(v_hi - v_lo >= 0.75 * max(var_f, 1e-12))
    return {
        "level": float(level), "status": "ok",
        "mean_fk": mean_f, "mean_fk_lo": m_lo, "mean_fk_hi": m_hi,
        "var_fk": var_f, "var_fk_lo": v_lo, "var_fk_hi": v_hi,
        "mean_gsum": mean_g, "var_gsum": var_g,
        "var_gsum_lo": gv_lo, "var_gsum_hi": gv_hi,
        "wide_ci": wide, "replications": reps,
    }


def _diagnostic_row(level: float, reps: int, exc: Exception) -> dict:
    row = {f: math.nan for f in _ROW_FIELDS}
    row.update(level=float(level), status=f"error: {exc}",
               wide_ci=True, replications=reps)
    return row


def _grid_point(config: SweepConfig, g, li: int, level) -> tuple:
    t0 = time.perf_counter()
    try:
        fk = np.empty(config.replications)
        gs = np.empty(config.replications)
        for r in range(config.replications):
            pts = _draw_points(
                config, level, sampling.derive_seed(config.seed, "sweep", li, r)
            )
            fk[r], gs[r] = face_statistics(pts, config.k, g)
        row = _statistics_row(config, li, float(level), fk, gs)
    except Exception as exc:  # diagnostic row, keep sweeping
        row = _diagnostic_row(float(level), config.replications, exc)
    return li, row, time.perf_counter() - t0


def run_sweep(config: SweepConfig, threads: int = 1) -> VarianceReport:
    """R replications of sample -> hull -> scores at every grid level.

    Each replication gets its own derived seed, so grid points are
    independent tasks and any execution order (or pool size) yields the same
    report; rows are emitted in grid order. A failing replication aborts its
    grid point and leaves a diagnostic row; the remaining levels still run.
    """
    g = test_function(config.g_id)
    items = list(enumerate(config.grid))
    if threads and int(threads) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(lambda it: _grid_point(config, g, *it), items))
    else:
        results = [_grid_point(config, g, li, level) for li, level in items]
    results.sort(key=lambda trio: trio[0])
    return VarianceReport(
        config=config,
        rows=tuple(r[1] for r in results),
        timings=tuple(r[2] for r in results),
    )


# ---------------------------------------------------------------------------
# scaling fits


def fit_scaling(report: VarianceReport, statistic: str = "variance") -> ScalingFit:
    """OLS of the log statistic against the log level, plus the plateau of the
    level^{-(d-1)/(d+1)} normalized constants over the top half of the grid
    (inverse-variance weights from the bootstrap CIs).

    The plateau divided by the boundary curvature integral estimates the
    universal constant in front of the scaling law; count-based modes carry
    the extra vol(K)^{(d-1)/(d+1)} normalization factor.
    """
    if statistic not in ("variance", "mean"):
        raise ValueError("statistic must be 'variance' or 'mean'")
    key, lo_key, hi_key = (
        ("var_fk", "var_fk_lo", "var_fk_hi") if statistic == "variance"
        else ("mean_fk", "mean_fk_lo", "mean_fk_hi")
    )
    levels, vals, ses = [], [], []
    for row in report.rows:
        v = row[key]
        if row["status"] != "ok" or not v > 0:
            warnings.warn(
                f"level {row['level']:g}: non-positive or failed {statistic} "
                "estimate excluded from the fit",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        levels.append(row["level"])
        vals.append(v)
        ses.append(max((row[hi_key] - row[lo_key]) / (2 * _CI_Z), 1e-12 * v))
    if len(levels) < 4:
        raise ValueError("need at least 4 usable grid points for a scaling fit")

    x = np.log(levels)
    y = np.log(vals)
    m = len(x)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - slope * x - intercept
    ssr = float(resid @ resid)
    slope_se = math.sqrt(max(ssr, 1e-28) / (m - 2) / sxx)

    d = report.config.body.dim
    theta = (d - 1) / (d + 1)
    lev = np.asarray(levels)
    normalized = np.asarray(vals) / lev**theta
    normalized_se = np.asarray(ses) / lev**theta
    top = slice(m - (m + 1) // 2, m)
    w = 1.0 / normalized_se[top] ** 2
    plateau = float(w @ normalized[top] / w.sum())
    plateau_se = float(w.sum() ** -0.5)
    plateau_cv = float(np.std(normalized[top]) / abs(np.mean(normalized[top])))

    asa = bodies.affine_surface_area(report.config.body).value
    volume_factor = (
        report.config.body.volume**theta if report.config.mode != "poisson" else 1.0
    )
    return ScalingFit(
        statistic=statistic,
        slope=slope,
        intercept=intercept,
        slope_se=slope_se,
        theoretical_slope=theta,
        levels=tuple(float(v) for v in levels),
        normalized=tuple(float(v) for v in normalized),
        normalized_se=tuple(float(v) for v in normalized_se),
        plateau=plateau,
        plateau_se=plateau_se,
        plateau_cv=plateau_cv,
        fhat=plateau * volume_factor / asa,
        fhat_se=plateau_se * volume_factor / asa,
        surface_integral=asa,
    )


# ---------------------------------------------------------------------------
# coupled binomial/Poisson comparison


def depoisson_compare(body, k: int, n_grid, replications: int, seed: int) -> dict:
    """Variance gap between fixed-count and Poisson-count hulls on shared
    streams: per n, Var f_k under both views of the coupled pair, the absolute
    gap, and the gap / binomial-variance ratio whose decay across the grid is
    the de-Poissonization diagnostic."""
    rows = []
    for ni, n in enumerate(n_grid):
        n = int(n)
        fb = np.empty(replications)
        fp = np.empty(replications)
        mismatches = 0
        for r in range(replications):
            pair = sampling.sample_coupled(
                body, n, sampling.derive_seed(seed, "depoisson", ni, r)
            )
            fb[r], _ = face_statistics(pair.binomial_view, k, None)
            fp[r], _ = face_statistics(pair.poisson_view, k, None)
            mismatches += pair.poisson_count != pair.binomial_count
        var_b = float(fb.var(ddof=1))
        var_p = float(fp.var(ddof=1))
        boot = sampling.derive_rng(seed, "depoisson-boot", ni)
        idx = boot.integers(0, replications, size=(_BOOTSTRAP_B, replications))
        vb = fb[idx].var(axis=1, ddof=1)
        vp = fp[idx].var(axis=1, ddof=1)
        p_lo, p_hi = _percentile_ci(vp, var_p)
        gap = abs(var_b - var_p)
        g_lo, g_hi = _percentile_ci(np.abs(vb - vp), gap)
        rows.append({
            "n": n,
            "var_binomial": var_b,
            "var_poisson": var_p,
            "var_poisson_lo": p_lo, "var_poisson_hi": p_hi,
            "gap": gap, "gap_lo": g_lo, "gap_hi": g_hi,
            "ratio": gap / var_b,
            "count_mismatch_rate": mismatches / replications,
            "replications": replications,
        })
    ratios = [row["ratio"] for row in rows]
    return {
        "body_id": body.body_id,
        "k": k,
        "seed": int(seed),
        "rows": rows,
        "ratios": ratios,
        "ratio_decreasing": bool(all(b < a for a, b in zip(ratios, ratios[1:]))),
    }


# ---------------------------------------------------------------------------
# hull volume variance identity


def volume_variance(body, n: int, replications: int, seed: int) -> dict:
    """Monte Carlo Var vol(hull of n points) against the count-variance route:
    vol(K)^2 (Var f_0 at n+2 points + correction) / ((n+1)(n+2)), where the
    correction is the large-n limit (3-d)/(d+1) * surface integral *
    vol(K)^{-(d-1)/(d+1)} * (n+2)^{(d-1)/(d+1)}; it vanishes identically in
    dimension 3. Substituting the limiting correction for its finite-n value
    is part of the tolerance budget of the comparison."""
    d = body.dim
    if d not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {d}")
    n = int(n)
    vols = np.empty(replications)
    f0 = np.empty(replications)
    for r in range(replications):
        pts = sampling.sample_binomial(
            body, n, sampling.derive_seed(seed, "volvar-vol", r)
        ).points
        vols[r] = hull_volume(pts)
    for r in range(replications):
        pts = sampling.sample_binomial(
            body, n + 2, sampling.derive_seed(seed, "volvar-f0", r)
        ).points
        f0[r], _ = face_statistics(pts, 0, None)

    var_vol = float(vols.var(ddof=1))
    var_f0 = float(f0.var(ddof=1))
    boot = sampling.derive_rng(seed, "volvar-boot")
    idx = boot.integers(0, replications, size=(_BOOTSTRAP_B, replications))
    vv_lo, vv_hi = _percentile_ci(vols[idx].var(axis=1, ddof=1), var_vol)
    vf_lo, vf_hi = _percentile_ci(f0[idx].var(axis=1, ddof=1), var_f0)

    theta = (d - 1) / (d + 1)
    asa = bodies.affine_surface_area(body).value
    correction = (3 - d) / (d + 1) * asa * body.volume**(-theta) * (n + 2) ** theta
    denom = (n + 1) * (n + 2)
    rhs = body.volume**2 * (var_f0 + correction) / denom
    rhs_lo = body.volume**2 * (vf_lo + correction) / denom
    rhs_hi = body.volume**2 * (vf_hi + correction) / denom
    return {
        "body_id": body.body_id,
        "dim": d,
        "n": n,
        "replications": replications,
        "seed": int(seed),
        "var_volume": var_vol,
        "var_volume_lo": vv_lo, "var_volume_hi": vv_hi,
        "var_f0": var_f0,
        "var_f0_lo": vf_lo, "var_f0_hi": vf_hi,
        "count_correction": correction,
        "surface_integral": asa,
        "rhs": rhs, "rhs_lo": rhs_lo, "rhs_hi": rhs_hi,
        "relative_error": abs(var_vol - rhs) / rhs,
    }


# ---------------------------------------------------------------------------
# boundary-integral consistency (weighted score sums vs window estimators)


def theorem2_check(body, k: int, g_id: str, lam_grid, replications: int,
                   seed: int, sigma2=None, sigma2_se: float = 0.0,
                   mean_density=None, mean_density_se: float = 0.0) -> dict:
    """Compare normalized weighted-score statistics from a Poisson sweep with
    the boundary-integral predictions.

    Variance side: level^{-(d-1)/(d+1)} Var(sum of g at hull points) against
    sigma2 * integral of g^2 kappa^{1/(d+1)}. Expectation side: the same
    normalization of the mean against mean_density * integral of
    g kappa^{1/(d+1)}. Pass sigma2 / mean_density from the paraboloid window
    estimators (they are computed there if omitted). Ratios are None when the
    predicted side vanishes, as with the zero weight."""
    config = SweepConfig(body=body, k=k, mode="poisson", grid=tuple(lam_grid),
                         replications=replications, seed=seed, g_id=g_id)
    report = run_sweep(config)
    g = test_function(g_id)
    i_g = bodies.boundary_curvature_integral(body, weight=g).value
    i_g2 = bodies.boundary_curvature_integral(
        body, weight=lambda z: np.asarray(g(z), dtype=float) ** 2
    ).value

    if sigma2 is None or mean_density is None:
        from . import paraboloid

        base_dim = body.dim - 1
        if sigma2 is None:
            est = paraboloid.estimate_sigma2_window(
                k, side=24.0, height=6.0, margin=2.0, reps=400,
                seed=sampling.derive_seed(seed, "th2-sigma2"), base_dim=base_dim,
            )
            sigma2, sigma2_se = est.value, est.std_error
        if mean_density is None:
            est = paraboloid.estimate_mean_score_density(
                k, side=24.0, height=6.0, margin=2.0, reps=400,
                seed=sampling.derive_seed(seed, "th2-mean"), base_dim=base_dim,
            )
            mean_density, mean_density_se = est.value, est.std_error

    out = {
        "body_id": body.body_id,
        "k": k,
        "g": g_id,
        "seed": int(seed),
        "weight_integral": i_g,
        "weight_sq_integral": i_g2,
        "sigma2": float(sigma2),
        "sigma2_se": float(sigma2_se),
        "mean_density": float(mean_density),
        "mean_density_se": float(mean_density_se),
        "rows": list(report.rows),
    }
    ok_rows = [row for row in report.rows if row["status"] == "ok"]
    if not ok_rows:
        out.update(status="no successful grid point", var_lhs=None, var_rhs=None,
                   var_ratio=None, mean_lhs=None, mean_rhs=None, mean_ratio=None)
        return out
    top = ok_rows[-1]
    theta = (body.dim - 1) / (body.dim + 1)
    scale = top["level"] ** theta
    var_lhs = top["var_gsum"] / scale
    var_lhs_se = (top["var_gsum_hi"] - top["var_gsum_lo"]) / (2 * _CI_Z) / scale
    var_rhs = float(sigma2) * i_g2
    var_rhs_se = float(sigma2_se) * i_g2
    mean_lhs = top["mean_gsum"] / scale
    mean_rhs = float(mean_density) * i_g
    tiny = 1e-12
    out.update(
        status="ok",
        level=top["level"],
        var_lhs=var_lhs, var_lhs_se=var_lhs_se,
        var_rhs=var_rhs, var_rhs_se=var_rhs_se,
        var_ratio=None if abs(var_rhs) < tiny else var_lhs / var_rhs,
        mean_lhs=mean_lhs,
        mean_rhs=mean_rhs,
        mean_ratio=None if abs(mean_rhs) < tiny else mean_lhs / mean_rhs,
    )
    return out


def ks_compare_bodies(body_a, body_b, lam: float, replications: int,
                      seed: int) -> dict:
    """Two-sample Kolmogorov-Smirnov comparison of hull vertex counts between
    two bodies at one Poisson intensity; volume-preserving linear images
    should be statistically indistinguishable."""
    from scipy.stats import ks_2samp

    fa = np.empty(replications)
    fb = np.empty(replications)
    for r in range(replications):
        pts = sampling.sample_poisson(
            body_a, lam, sampling.derive_seed(seed, "ks-a", r)
        ).points
        fa[r], _ = face_statistics(pts, 0, None)
        pts = sampling.sample_poisson(
            body_b, lam, sampling.derive_seed(seed, "ks-b", r)
        ).points
        fb[r], _ = face_statistics(pts, 0, None)
    res = ks_2samp(fa, fb)
    return {
        "body_a": body_a.body_id,
        "body_b": body_b.body_id,
        "lam": float(lam),
        "replications": replications,
        "seed": int(seed),
        "statistic": float(res.statistic),
        "pvalue": float(res.pvalue),
        "mean_a": float(fa.mean()),
        "mean_b": float(fb.mean()),
        "var_a": float(fa.var(ddof=1)),
        "var_b": float(fb.var(ddof=1)),
    }


# ---------------------------------------------------------------------------
# serialization


def _csv_cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def report_to_csv(report: VarianceReport) -> str:
    """One row per grid point, repr-round-trip floats, no timing columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_ROW_FIELDS)
    for row in report.rows:
        writer.writerow([_csv_cell(row[f]) for f in _ROW_FIELDS])
    return buf.getvalue()


def depoisson_to_csv(result: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_DEPOISSON_FIELDS)
    for row in result["rows"]:
        writer.writerow([_csv_cell(row[f]) for f in _DEPOISSON_FIELDS])
    return buf.getvalue()


def fit_to_json(fit: ScalingFit) -> str:
    return json.dumps(asdict(fit), indent=2, sort_keys=True)


def report_from_csv(text: str, config: SweepConfig) -> VarianceReport:
    """Rebuild a report from its CSV. Floats round-trip exactly through repr,
    so fits recomputed from the parsed report match the originals bit for
    bit. Timings are not stored in the CSV and come back as zeros."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != _ROW_FIELDS:
        raise ValueError("unrecognized report header")
    rows = []
    for rec in reader:
        row = dict(zip(_ROW_FIELDS, rec))
        for f in _ROW_FIELDS:
            if f == "status":
                continue
            if f == "wide_ci":
                row[f] = bool(int(row[f]))
            elif f == "replications":
                row[f] = int(row[f])
            else:
                row[f] = float(row[f])
        rows.append(row)
    return VarianceReport(config=config, rows=tuple(rows),
                          timings=tuple(0.0 for _ in rows))


# ---------------------------------------------------------------------------
# plots


def plot_scaling(report: VarianceReport, fit: ScalingFit, path) -> None:
    """Log-log scatter of the fitted statistic with its OLS line and a
    reference line at the theoretical slope. SVG output is deterministic:
    fixed hash salt, no date metadata."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = "hullvar"
    import matplotlib.pyplot as plt

    key = "var_fk" if fit.statistic == "variance" else "mean_fk"
    ok = [row for row in report.rows if row["status"] == "ok" and row[key] > 0]
    levels = np.array([row["level"] for row in ok])
    vals = np.array([row[key] for row in ok])
    los = np.array([row[key + "_lo"] for row in ok])
    his = np.array([row[key + "_hi"] for row in ok])

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.errorbar(levels, vals, yerr=[vals - los, his - vals], fmt="o",
                capsize=3, label="estimate with 95% CI")
    span = np.array([levels.min(), levels.max()])
    ax.plot(span, np.exp(fit.intercept) * span**fit.slope, "-",
            label=f"fit, slope {fit.slope:.4f}")
    anchor = vals[0] / levels[0] ** fit.theoretical_slope
    ax.plot(span, anchor * span**fit.theoretical_slope, "--",
            label=f"reference slope {fit.theoretical_slope:.4f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("grid level")
    stat_label = "Var" if fit.statistic == "variance" else "mean"
    ax.set_ylabel(f"{stat_label} f_{report.config.k}")
    ax.set_title(f"{report.config.mode} sweep on {report.config.body.body_id}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
