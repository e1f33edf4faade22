"""Tests for the sweep orchestration module.

Oracles used here:
  * planted scaling models with exactly known slope/intercept/plateau,
  * exact polytope identities (a polygon has as many edges as vertices,
    a polygon's area by the shoelace rule, the cube's volume),
  * the exact face lattice from the hull module as a cross-check for the
    fast face-statistics path,
  * closed-form registry values (exp(-1), coordinate projections),
  * structural Monte Carlo invariants (CIs contain point estimates,
    variances nonnegative, byte-identical reruns).

Heavy statistical checks at contract-level replication counts live in
test_acceptance.py; sizes here are trimmed for fast iteration.
"""

import hashlib
import math

import numpy as np
import pytest

from hullvar import bodies, experiments, hull, sampling

TWO_PI = 6.283185307179586
LN_2_5 = 0.9162907318741551
CBRT_PI = 1.4645918875615231
EXP_NEG_1 = 0.36787944117144233

DISK = bodies.make_ball(2, 1.0)
BALL3 = bodies.make_ball(3, 1.0)


def planted_report(levels, var_coeff, mean_coeff, mode="poisson", body=DISK,
                   rel_ci=0.02, theta=1.0 / 3.0):
    """VarianceReport with Var = var_coeff * level**theta exactly."""
    rows = []
    for lv in levels:
        v = var_coeff * lv**theta
        m = mean_coeff * lv**theta
        rows.append({
            "level": float(lv),
            "status": "ok",
            "mean_fk": m, "mean_fk_lo": m * (1 - rel_ci), "mean_fk_hi": m * (1 + rel_ci),
            "var_fk": v, "var_fk_lo": v * (1 - rel_ci), "var_fk_hi": v * (1 + rel_ci),
            "mean_gsum": m,
            "var_gsum": v, "var_gsum_lo": v * (1 - rel_ci), "var_gsum_hi": v * (1 + rel_ci),
            "wide_ci": False,
            "replications": 1000,
        })
    cfg = experiments.SweepConfig(
        body=body, k=0, mode=mode, grid=tuple(float(lv) for lv in levels),
        replications=1000, seed=7,
    )
    return experiments.VarianceReport(
        config=cfg, rows=tuple(rows), timings=tuple(0.0 for _ in levels)
    )


# ---------------------------------------------------------------------------
# test-function registry


def test_registry_const_zero_coord():
    pts = np.array([[0.5, 0.0], [-0.25, 1.0], [0.0, -2.0]])
    assert np.array_equal(experiments.test_function("const")(pts), np.ones(3))
    assert np.array_equal(experiments.test_function("zero")(pts), np.zeros(3))
    assert np.array_equal(experiments.test_function("coord:1")(pts), pts[:, 1])
    assert np.array_equal(experiments.test_function("coord:0")(pts), pts[:, 0])


def test_registry_gauss_frozen_values():
    g = experiments.test_function("gauss:1,0,1")
    vals = g(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert vals[0] == pytest.approx(1.0, abs=1e-15)
    assert vals[1] == pytest.approx(EXP_NEG_1, rel=1e-14)
    # width rescales the exponent: |x-c|^2 / w^2
    g2 = experiments.test_function("gauss:1,0,2")
    assert g2(np.array([[0.0, 0.0]]))[0] == pytest.approx(math.exp(-0.25), rel=1e-14)


def test_registry_rejects_unknown_ids():
    for bad in ("bump", "coord:x", "gauss:1", "gauss:1,2,0", ""):
        with pytest.raises(ValueError):
            experiments.test_function(bad)


# ---------------------------------------------------------------------------
# config validation


def test_sweep_config_validation():
    ok = dict(body=DISK, k=0, mode="poisson", grid=(100.0, 200.0),
              replications=50, seed=3)
    experiments.SweepConfig(**ok)
    with pytest.raises(ValueError, match="increasing"):
        experiments.SweepConfig(**{**ok, "grid": (200.0, 100.0)})
    with pytest.raises(ValueError, match="increasing"):
        experiments.SweepConfig(**{**ok, "grid": (100.0, 100.0)})
    with pytest.raises(ValueError, match="grid"):
        experiments.SweepConfig(**{**ok, "grid": ()})
    with pytest.raises(ValueError, match="replications"):
        experiments.SweepConfig(**{**ok, "replications": 1})
    with pytest.raises(ValueError, match="mode"):
        experiments.SweepConfig(**{**ok, "mode": "quantum"})
    with pytest.raises(ValueError, match="k"):
        experiments.SweepConfig(**{**ok, "k": 2})
    with pytest.raises(ValueError):
        experiments.SweepConfig(**{**ok, "g_id": "mystery"})


def test_derive_seed_is_stable_and_distinct():
    a = sampling.derive_seed(17, "sweep", 0, 3)
    assert a == sampling.derive_seed(17, "sweep", 0, 3)
    others = {
        sampling.derive_seed(17, "sweep", 0, 4),
        sampling.derive_seed(17, "sweep", 1, 3),
        sampling.derive_seed(18, "sweep", 0, 3),
        sampling.derive_seed(17, "boot", 0, 3),
    }
    assert a not in others and len(others) == 4
    for s in others | {a}:
        assert 0 <= s < 2**63
    # pinned to the documented construction: sha256 over the tagged path
    h = hashlib.sha256()
    h.update(b"17")
    for tag in (b"s:sweep", b"i:0", b"i:3"):
        h.update(b"|" + tag)
    assert a == int.from_bytes(h.digest()[:8], "little") >> 1


# ---------------------------------------------------------------------------
# scaling fits on planted models


def test_fit_scaling_planted_exact():
    rep = planted_report((1024, 2048, 4096, 8192), var_coeff=2.5, mean_coeff=4.0)
    fit = experiments.fit_scaling(rep)
    assert fit.slope == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert fit.intercept == pytest.approx(LN_2_5, abs=1e-10)
    assert fit.theoretical_slope == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert 0.0 < fit.slope_se < 1e-8
    assert fit.statistic == "variance"
    assert np.allclose(fit.normalized, 2.5, rtol=1e-12)
    assert fit.plateau == pytest.approx(2.5, rel=1e-12)
    assert fit.fhat == pytest.approx(2.5 / TWO_PI, rel=1e-6)
    assert fit.fhat > 0 and fit.plateau_se > 0
    assert fit.plateau_cv < 1e-10


def test_fit_scaling_mean_statistic():
    rep = planted_report((1024, 2048, 4096, 8192), var_coeff=2.5, mean_coeff=4.0)
    fit = experiments.fit_scaling(rep, statistic="mean")
    assert fit.slope == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert fit.statistic == "mean"
    assert fit.plateau == pytest.approx(4.0, rel=1e-12)
    assert fit.fhat == pytest.approx(4.0 / TWO_PI, rel=1e-6)
    with pytest.raises(ValueError, match="statistic"):
        experiments.fit_scaling(rep, statistic="median")


def test_fit_scaling_binomial_volume_normalization():
    rep = planted_report((1024, 2048, 4096, 8192), var_coeff=2.5, mean_coeff=4.0,
                         mode="binomial")
    fit = experiments.fit_scaling(rep)
    # count-sweep plateau carries a vol(K)^{(d-1)/(d+1)} factor before the
    # affine surface area division
    assert fit.fhat == pytest.approx(2.5 * CBRT_PI / TWO_PI, rel=1e-6)


def test_fit_scaling_excludes_nonpositive_with_warning():
    rep = planted_report((512, 1024, 2048, 4096, 8192), var_coeff=2.5, mean_coeff=4.0)
    rows = list(rep.rows)
    rows[0] = dict(rows[0], var_fk=0.0)
    rep_bad = experiments.VarianceReport(config=rep.config, rows=tuple(rows),
                                         timings=rep.timings)
    with pytest.warns(RuntimeWarning, match="non-positive"):
        fit = experiments.fit_scaling(rep_bad)
    assert len(fit.normalized) == 4
    assert fit.slope == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_fit_scaling_requires_four_points():
    rep = planted_report((1024, 2048, 4096), var_coeff=2.5, mean_coeff=4.0)
    with pytest.raises(ValueError, match="grid points"):
        experiments.fit_scaling(rep)


# ---------------------------------------------------------------------------
# sweeps


@pytest.fixture(scope="module")
def disk_sweep():
    cfg = experiments.SweepConfig(
        body=DISK, k=0, mode="poisson", grid=(150.0, 300.0, 600.0, 1200.0),
        replications=60, seed=42,
    )
    return cfg, experiments.run_sweep(cfg)


def test_run_sweep_row_structure(disk_sweep):
    cfg, rep = disk_sweep
    assert len(rep.rows) == len(cfg.grid) == len(rep.timings)
    means = []
    for row, lv in zip(rep.rows, cfg.grid):
        assert row["status"] == "ok"
        assert row["level"] == lv
        assert row["replications"] == 60
        assert row["var_fk"] >= 0.0
        assert row["var_fk_lo"] <= row["var_fk"] <= row["var_fk_hi"]
        assert row["mean_fk_lo"] <= row["mean_fk"] <= row["mean_fk_hi"]
        assert row["var_fk_hi"] > row["var_fk_lo"] >= 0.0
        means.append(row["mean_fk"])
    assert all(t > 0 for t in rep.timings)
    # vertex counts grow along the intensity grid
    assert means == sorted(means)


def test_run_sweep_constant_g_matches_face_counts(disk_sweep):
    _, rep = disk_sweep
    for row in rep.rows:
        assert row["mean_gsum"] == row["mean_fk"]
        assert row["var_gsum"] == row["var_fk"]


def test_run_sweep_deterministic_csv(disk_sweep):
    cfg, rep = disk_sweep
    again = experiments.run_sweep(cfg)
    text = experiments.report_to_csv(rep)
    assert text == experiments.report_to_csv(again)
    assert "wall" not in text.splitlines()[0]
    other = experiments.run_sweep(
        experiments.SweepConfig(body=cfg.body, k=cfg.k, mode=cfg.mode,
                                grid=cfg.grid, replications=cfg.replications,
                                seed=43)
    )
    assert experiments.report_to_csv(other) != text


def test_run_sweep_minimal_replications_flags_wide_ci():
    cfg = experiments.SweepConfig(body=DISK, k=0, mode="poisson",
                                  grid=(200.0, 400.0), replications=2, seed=5)
    rep = experiments.run_sweep(cfg)
    assert all(row["status"] == "ok" for row in rep.rows)
    assert any(row["wide_ci"] for row in rep.rows)


def test_run_sweep_k1_matches_k0_for_polygons():
    base = dict(body=DISK, mode="poisson", grid=(250.0,), replications=25, seed=11)
    r0 = experiments.run_sweep(experiments.SweepConfig(k=0, **base))
    r1 = experiments.run_sweep(experiments.SweepConfig(k=1, **base))
    assert r0.rows[0]["mean_fk"] == r1.rows[0]["mean_fk"]
    assert r0.rows[0]["var_fk"] == r1.rows[0]["var_fk"]


def test_run_sweep_diagnostic_row_on_failure():
    cfg = experiments.SweepConfig(body=DISK, k=0, mode="binomial",
                                  grid=(2, 500), replications=10, seed=9)
    rep = experiments.run_sweep(cfg)
    assert rep.rows[0]["status"].startswith("error:")
    assert math.isnan(rep.rows[0]["var_fk"])
    assert rep.rows[1]["status"] == "ok"
    text = experiments.report_to_csv(rep)
    assert "error:" in text


def test_binomial_sweep_runs():
    cfg = experiments.SweepConfig(body=DISK, k=0, mode="binomial",
                                  grid=(100, 400), replications=40, seed=21)
    rep = experiments.run_sweep(cfg)
    assert all(row["status"] == "ok" for row in rep.rows)
    assert rep.rows[1]["mean_fk"] > rep.rows[0]["mean_fk"]


# ---------------------------------------------------------------------------
# fast face statistics vs the exact lattice


def test_face_statistics_matches_exact_lattice_2d():
    rng = sampling.derive_rng(77, "face-stats-2d")
    for _ in range(12):
        pts = rng.standard_normal((rng.integers(8, 40), 2))
        lattice = hull.convex_hull(pts)
        for k in (0, 1):
            fk, gs = experiments.face_statistics(pts, k, experiments.test_function("const"))
            assert fk == lattice.f_vector[k]
            assert gs == pytest.approx(float(fk), abs=1e-9)


def test_face_statistics_matches_exact_lattice_3d():
    rng = sampling.derive_rng(78, "face-stats-3d")
    g_coord = experiments.test_function("coord:2")
    for _ in range(6):
        pts = rng.standard_normal((rng.integers(10, 36), 3))
        lattice = hull.convex_hull(pts)
        for k in (0, 1, 2):
            fk, gs = experiments.face_statistics(pts, k, experiments.test_function("const"))
            assert fk == lattice.f_vector[k]
            assert gs == pytest.approx(float(fk), rel=1e-12)
        # weighted sums agree with the exact rational scores
        fk, gs = experiments.face_statistics(pts, 1, g_coord)
        exact = hull.weighted_score_sum(pts, hull.xi_scores(lattice, 1), g_coord)
        assert gs == pytest.approx(exact, rel=1e-9)


def test_hull_volume_oracles():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
                       [0.3, 0.4], [0.7, 0.2], [0.5, 0.9]])
    assert experiments.hull_volume(square) == pytest.approx(1.0, abs=1e-12)
    corners = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0)
                        for z in (0.0, 1.0)])
    rng = sampling.derive_rng(5, "cube-fill")
    inner = rng.uniform(0.05, 0.95, size=(30, 3))
    cube = np.vstack([corners, inner])
    assert experiments.hull_volume(cube) == pytest.approx(1.0, rel=1e-12)


# ---------------------------------------------------------------------------
# de-Poissonization comparison


def test_coupled_equal_counts_give_identical_views():
    hits = 0
    for seed in range(300):
        pair = sampling.sample_coupled(DISK, 120, seed)
        if pair.poisson_count == pair.binomial_count:
            hits += 1
            assert np.array_equal(pair.poisson_view, pair.binomial_view)
            f_p, _ = experiments.face_statistics(pair.poisson_view, 0, None)
            f_b, _ = experiments.face_statistics(pair.binomial_view, 0, None)
            assert f_p == f_b
    assert hits >= 3


def test_depoisson_report_structure_and_consistency():
    rep = experiments.depoisson_compare(DISK, 0, (200, 800), 400, seed=31)
    assert [row["n"] for row in rep["rows"]] == [200, 800]
    for row in rep["rows"]:
        assert row["var_binomial"] > 0 and row["var_poisson"] > 0
        assert row["gap"] >= 0
        assert row["ratio"] == pytest.approx(row["gap"] / row["var_binomial"])
        assert row["var_poisson_lo"] <= row["var_poisson"] <= row["var_poisson_hi"]
    assert rep["ratios"] == [row["ratio"] for row in rep["rows"]]
    assert isinstance(rep["ratio_decreasing"], bool)
    # the Poisson-view variance is consistent with an uncoupled run at the
    # matching intensity (expected count 200 on the unit disk)
    sweep = experiments.run_sweep(experiments.SweepConfig(
        body=DISK, k=0, mode="poisson", grid=(200.0 / DISK.volume,),
        replications=400, seed=77))
    srow = sweep.rows[0]
    row = rep["rows"][0]
    assert row["var_poisson_lo"] <= srow["var_fk_hi"]
    assert srow["var_fk_lo"] <= row["var_poisson_hi"]


def test_depoisson_deterministic():
    a = experiments.depoisson_compare(DISK, 0, (150, 450), 120, seed=8)
    b = experiments.depoisson_compare(DISK, 0, (150, 450), 120, seed=8)
    assert experiments.depoisson_to_csv(a) == experiments.depoisson_to_csv(b)


# ---------------------------------------------------------------------------
# volume variance identity


def test_volume_variance_structure_d2():
    rep = experiments.volume_variance(DISK, 400, 300, seed=13)
    assert rep["dim"] == 2 and rep["n"] == 400
    assert rep["var_volume"] > 0
    assert rep["rhs"] > 0
    assert rep["count_correction"] > 0
    assert rep["relative_error"] == pytest.approx(
        abs(rep["var_volume"] - rep["rhs"]) / rep["rhs"])
    assert rep["var_volume_lo"] <= rep["var_volume"] <= rep["var_volume_hi"]


def test_volume_variance_d3_correction_vanishes():
    rep = experiments.volume_variance(BALL3, 150, 120, seed=14)
    assert rep["count_correction"] == 0.0
    expected = BALL3.volume**2 * rep["var_f0"] / (151 * 152)
    assert rep["rhs"] == pytest.approx(expected, rel=1e-12)


def test_volume_variance_rejects_high_dim():
    with pytest.raises(ValueError, match="dim"):
        experiments.volume_variance(bodies.make_ball(4, 1.0), 100, 50, seed=1)


# ---------------------------------------------------------------------------
# surface-integral comparison (boundary-localized weights)


def test_theorem2_zero_function():
    rep = experiments.theorem2_check(DISK, 0, "zero", (150.0, 300.0), 30, seed=3,
                                     sigma2=0.25, mean_density=0.8)
    assert rep["var_lhs"] == 0.0
    assert rep["var_rhs"] == 0.0
    assert rep["var_ratio"] is None
    assert rep["mean_lhs"] == 0.0 and rep["mean_rhs"] == 0.0


def test_theorem2_constant_reduces_to_total_mass():
    rep = experiments.theorem2_check(DISK, 0, "const", (200.0, 400.0), 40, seed=6,
                                     sigma2=1.0, mean_density=1.0)
    # with g = 1 both boundary integrals are the affine surface area
    assert rep["weight_integral"] == pytest.approx(TWO_PI, rel=1e-6)
    assert rep["weight_sq_integral"] == pytest.approx(TWO_PI, rel=1e-6)
    assert rep["var_rhs"] == pytest.approx(TWO_PI, rel=1e-6)
    # lhs equals the top-grid normalized count variance
    lam = 400.0
    top = rep["rows"][-1]
    assert rep["var_lhs"] == pytest.approx(top["var_gsum"] / lam ** (1.0 / 3.0))
    assert rep["var_ratio"] == pytest.approx(rep["var_lhs"] / rep["var_rhs"])


def test_ks_compare_structure():
    rep = experiments.ks_compare_bodies(DISK, DISK, 300.0, 120, seed=19)
    assert 0.0 < rep["pvalue"] <= 1.0
    assert rep["statistic"] >= 0.0
    again = experiments.ks_compare_bodies(DISK, DISK, 300.0, 120, seed=19)
    assert rep == again


# ---------------------------------------------------------------------------
# plots


def test_plot_scaling_writes_deterministic_svg(tmp_path):
    rep = planted_report((1024, 2048, 4096, 8192), var_coeff=2.5, mean_coeff=4.0)
    fit = experiments.fit_scaling(rep)
    p1 = tmp_path / "a.svg"
    p2 = tmp_path / "b.svg"
    experiments.plot_scaling(rep, fit, p1)
    experiments.plot_scaling(rep, fit, p2)
    b1 = p1.read_bytes()
    assert b1.startswith(b"<?xml") and b"<svg" in b1
    assert b1 == p2.read_bytes()
