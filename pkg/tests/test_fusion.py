import numpy as np
import pytest

from pointstage import (
    FeatureMapStack,
    Heatmap,
    ScoredCloud,
    WorkspaceCube,
    argmax_point,
    candidate_grid,
    make_rig,
    pool_local_feature,
    score_points,
)

from helpers import bilinear_scalar, score_points_scalar


def _heatmaps(rig, fill):
    return [
        Heatmap(np.full((c.height, c.width), v), view_id=i)
        for i, ((_, c), v) in enumerate(zip(rig, fill))
    ]


class TestValidation:
    def test_heatmap_shape_and_range(self):
        with pytest.raises(ValueError, match="2D"):
            Heatmap(np.zeros(5))
        with pytest.raises(ValueError, match="finite"):
            Heatmap(np.full((2, 2), np.nan))
        with pytest.raises(ValueError, match=">= 0"):
            Heatmap(np.array([[0.1, -0.2]]))

    def test_scored_cloud_shapes(self):
        with pytest.raises(ValueError, match="M, 3"):
            ScoredCloud(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError, match="views_hit"):
            ScoredCloud(np.zeros((2, 3)), np.zeros(3), np.zeros(2))

    def test_stack_shapes(self):
        cam = make_rig(WorkspaceCube(np.zeros(3), 1.0), ("front",)).cameras[0]
        with pytest.raises(ValueError, match="at least one"):
            FeatureMapStack((), ())
        with pytest.raises(ValueError, match="same length"):
            FeatureMapStack((np.zeros((2, 2, 1)),), (cam, cam))
        with pytest.raises(ValueError, match="share"):
            FeatureMapStack((np.zeros((2, 2, 1)), np.zeros((2, 3, 1))), (cam, cam))

    def test_score_points_mismatches(self, rig3_ortho):
        pts = np.zeros((1, 3))
        with pytest.raises(ValueError, match="heatmaps"):
            score_points(pts, [], rig3_ortho)
        bad = [Heatmap(np.zeros((2, 2))) for _ in range(3)]
        with pytest.raises(ValueError, match="does not match"):
            score_points(pts, bad, rig3_ortho)
        good = _heatmaps(rig3_ortho, [0, 0, 0])
        with pytest.raises(ValueError, match="at least one"):
            score_points(np.zeros((0, 3)), good, rig3_ortho)
        with pytest.raises(ValueError, match="M, 3"):
            score_points(np.zeros((2, 2)), good, rig3_ortho)


class TestScorePoints:
    def test_point_mass_at_integer_pixel_scores_one(self):
        # a single-view rig, heatmap 1 at exactly the pixel under the
        # workspace center: bilinear at integer coordinates is exact.
        ws = WorkspaceCube(np.zeros(3), 1.0)
        rig = make_rig(ws, ("front",), 64, 64)
        cam = rig.cameras[0]
        u, v, _ = cam.project_continuous(ws.center.reshape(1, 3))
        assert u[0] == int(u[0]) and v[0] == int(v[0])
        heat = np.zeros((64, 64))
        heat[int(v[0]), int(u[0])] = 1.0
        scored = score_points(ws.center.reshape(1, 3), [Heatmap(heat)], rig)
        assert scored.scores[0] == 1.0
        assert scored.views_hit[0] == 1

    def test_constant_heatmaps_average(self, rig3_ortho, unit_workspace):
        scored = score_points(
            unit_workspace.center.reshape(1, 3),
            _heatmaps(rig3_ortho, [0.2, 0.4, 0.9]),
            rig3_ortho,
        )
        assert scored.scores[0] == pytest.approx(0.5, abs=1e-15)
        assert scored.views_hit[0] == 3

    def test_unseen_candidates_get_minus_inf(self, rig3_ortho, unit_workspace):
        pts = np.array([[0.0, 0.0, 0.0], [99.0, 99.0, 99.0]])
        scored = score_points(pts, _heatmaps(rig3_ortho, [1, 1, 1]), rig3_ortho)
        assert scored.views_hit[1] == 0
        assert scored.scores[1] == -np.inf
        assert np.isfinite(scored.scores[0])

    def test_argmax_invariant_under_positive_scaling(self, rig3_ortho, rng):
        pts = rng.uniform(-0.45, 0.45, (40, 3))
        base = [Heatmap(rng.random((c.height, c.width))) for _, c in rig3_ortho]
        idx0, _ = argmax_point(score_points(pts, base, rig3_ortho))
        for lam in (0.001, 0.5, 3.7, 1e6):
            scaled = [Heatmap(h.values * lam) for h in base]
            idx, _ = argmax_point(score_points(pts, scaled, rig3_ortho))
            assert idx == idx0

    def test_power_of_two_scaling_is_bitwise(self, rig3_ortho, rng):
        # scaling by 2^k is a pure exponent shift, so the fused scores must
        # scale bitwise, not merely approximately
        pts = rng.uniform(-0.45, 0.45, (40, 3))
        base = [Heatmap(rng.random((c.height, c.width))) for _, c in rig3_ortho]
        scaled = [Heatmap(h.values * 4.0) for h in base]
        a = score_points(pts, base, rig3_ortho)
        b = score_points(pts, scaled, rig3_ortho)
        finite = np.isfinite(a.scores)
        assert np.array_equal(a.scores[finite] * 4.0, b.scores[finite])
        assert np.array_equal(a.views_hit, b.views_hit)

    def test_matches_scalar_oracle(self, rig3_ortho, rng):
        pts = rng.uniform(-0.6, 0.6, (60, 3))
        heatmaps = [Heatmap(rng.random((c.height, c.width))) for _, c in rig3_ortho]
        fast = score_points(pts, heatmaps, rig3_ortho)
        slow_scores, slow_hits = score_points_scalar(pts, heatmaps, rig3_ortho)
        assert np.array_equal(fast.views_hit, slow_hits)
        both = np.isfinite(fast.scores)
        assert np.array_equal(both, np.isfinite(slow_scores))
        assert np.abs(fast.scores[both] - slow_scores[both]).max() < 1e-12

    def test_support_mass_never_hurts(self, rng):
        # adding heat mass at any of the 4 bilinear support pixels of the
        # candidate's projection can only raise its score
        ws = WorkspaceCube(np.zeros(3), 1.0)
        rig = make_rig(ws, ("front",), 64, 64)
        cam = rig.cameras[0]
        pt = rng.uniform(-0.4, 0.4, 3).reshape(1, 3)
        u, v, _ = cam.project_continuous(pt)
        heat = rng.random((64, 64))
        base = score_points(pt, [Heatmap(heat)], rig).scores[0]
        x0, y0 = int(np.floor(u[0])), int(np.floor(v[0]))
        for dy in (0, 1):
            for dx in (0, 1):
                bumped = heat.copy()
                bumped[min(y0 + dy, 63), min(x0 + dx, 63)] += 5.0
                new = score_points(pt, [Heatmap(bumped)], rig).scores[0]
                assert new >= base


class TestArgmax:
    def test_picks_highest(self):
        scored = ScoredCloud(
            np.arange(9, dtype=float).reshape(3, 3),
            np.array([0.1, 0.9, 0.3]),
            np.array([1, 1, 1]),
        )
        idx, loc = argmax_point(scored)
        assert idx == 1
        assert np.array_equal(loc, [3.0, 4.0, 5.0])

    def test_tie_breaks_to_first(self):
        scored = ScoredCloud(
            np.zeros((4, 3)), np.full(4, 0.7), np.ones(4, dtype=int)
        )
        assert argmax_point(scored)[0] == 0

    def test_all_unscored_raises(self):
        scored = ScoredCloud(
            np.zeros((2, 3)), np.full(2, -np.inf), np.zeros(2, dtype=int)
        )
        with pytest.raises(ValueError, match="outside"):
            argmax_point(scored)

    def test_gaussian_bump_recovers_target_exactly(self, rng):
        # candidates include the target itself; with a per-view Gaussian
        # centered on the target's projection, no grid point can beat it.
        ws = WorkspaceCube(np.zeros(3), 1.0)
        rig = make_rig(ws, ("front", "top", "right"), 224, 224)
        target = rng.uniform(-0.4, 0.4, 3)
        heatmaps = []
        for _, cam in rig:
            u, v, _ = cam.project_continuous(target.reshape(1, 3))
            yy = np.arange(cam.height, dtype=np.float64)
            xx = np.arange(cam.width, dtype=np.float64)
            heat = np.exp(
                -((yy[:, None] - v[0]) ** 2 + (xx[None, :] - u[0]) ** 2)
                / (2 * 8.0**2)
            )
            heatmaps.append(Heatmap(heat))
        cands = np.vstack([candidate_grid(ws, 16), target[None, :]])
        scored = score_points(cands, heatmaps, rig)
        idx, loc = argmax_point(scored)
        assert np.array_equal(loc, target)


class TestPooling:
    def test_constant_grid_pools_constant(self, rig3_ortho, unit_workspace):
        grids = tuple(np.full((16, 16, 2), 7.5) for _ in range(3))
        cams = tuple(c for _, c in rig3_ortho)
        stack = FeatureMapStack(grids, cams)
        out = pool_local_feature(np.zeros(3), stack)
        assert out.shape == (6,)
        assert np.allclose(out, 7.5, atol=1e-12)

    def test_one_hot_grid_full_weight_on_cell(self):
        # location projecting to the center of grid cell (2, 3): the pooled
        # vector is the cell value exactly
        ws = WorkspaceCube(np.zeros(3), 1.0)
        rig = make_rig(ws, ("front",), 64, 64)
        cam = rig.cameras[0]
        gh = gw = 16
        # pick the world point whose rescaled grid coords are integers
        gu, gv = 3.0, 2.0
        u = (gu + 0.5) * (cam.width / gw) - 0.5
        v = (gv + 0.5) * (cam.height / gh) - 0.5
        x = (u - cam.projection.cx) / cam.projection.scale
        y = (v - cam.projection.cy) / cam.projection.scale
        world = cam.position + cam.rotation.T @ np.array([x, y, 1.5])
        grid = np.zeros((gh, gw, 1))
        grid[2, 3, 0] = 4.25
        stack = FeatureMapStack((grid,), (cam,))
        out = pool_local_feature(world, stack)
        assert out[0] == 4.25

    def test_unseen_view_contributes_zeros(self):
        # mix cameras framing different cubes so one view misses the point
        big = make_rig(WorkspaceCube(np.zeros(3), 4.0), ("front",), 64, 64)
        tight = make_rig(WorkspaceCube(np.zeros(3), 0.25), ("top",), 64, 64)
        cams = (big.cameras[0], tight.cameras[0])
        grids = (np.full((8, 8, 3), 1.5), np.full((8, 8, 3), 9.9))
        stack = FeatureMapStack(grids, cams)
        spot = np.array([1.0, 0.0, 0.0])  # inside big's view, outside tight's
        u, v, z = cams[1].project_continuous(spot.reshape(1, 3))
        assert not bool(cams[1].in_view(u, v, z)[0])
        out = pool_local_feature(spot, stack)
        assert out.shape == (6,)
        assert np.allclose(out[:3], 1.5)
        assert np.array_equal(out[3:], np.zeros(3))

    def test_invisible_everywhere_raises(self, rig3_ortho):
        cams = tuple(c for _, c in rig3_ortho)
        stack = FeatureMapStack(tuple(np.zeros((4, 4, 1)) for _ in cams), cams)
        with pytest.raises(ValueError, match="outside every view"):
            pool_local_feature(np.array([90.0, 90.0, 90.0]), stack)

    def test_matches_scalar_bilinear(self, rng, rig3_ortho):
        cams = tuple(c for _, c in rig3_ortho)
        grids = tuple(rng.random((12, 20, 4)) for _ in cams)
        stack = FeatureMapStack(grids, cams)
        loc = rng.uniform(-0.3, 0.3, 3)
        out = pool_local_feature(loc, stack)
        expect = []
        for grid, cam in zip(grids, cams):
            u, v, z = cam.project_continuous(loc.reshape(1, 3))
            if bool(cam.in_view(u, v, z)[0]):
                gu = (u[0] + 0.5) * (grid.shape[1] / cam.width) - 0.5
                gv = (v[0] + 0.5) * (grid.shape[0] / cam.height) - 0.5
                expect.append(bilinear_scalar(grid, gu, gv))
            else:
                expect.append(np.zeros(grid.shape[2]))
        assert np.abs(out - np.concatenate(expect)).max() < 1e-12


class TestCandidateGrid:
    def test_res_one_is_center(self):
        cube = WorkspaceCube(np.array([1.0, -2.0, 0.5]), 3.0)
        grid = candidate_grid(cube, 1)
        assert grid.shape == (1, 3)
        assert np.array_equal(grid[0], cube.center)

    def test_res_two_unit_cube(self):
        grid = candidate_grid(WorkspaceCube(np.zeros(3), 1.0), 2)
        assert grid.shape == (8, 3)
        got = {tuple(row) for row in grid}
        want = {
            (sx * 0.25, sy * 0.25, sz * 0.25)
            for sx in (-1, 1)
            for sy in (-1, 1)
            for sz in (-1, 1)
        }
        assert got == want

    def test_spacing_and_bounds(self):
        cube = WorkspaceCube(np.array([0.5, 0.5, 0.5]), 1.0)
        grid = candidate_grid(cube, 5)
        assert grid.shape == (125, 3)
        assert cube.contains(grid).all()
        xs = np.unique(grid[:, 0])
        assert np.allclose(np.diff(xs), 0.2)
        assert xs[0] == pytest.approx(0.1)

    def test_z_varies_fastest(self):
        grid = candidate_grid(WorkspaceCube(np.zeros(3), 1.0), 3)
        assert grid[0, 0] == grid[1, 0] == grid[2, 0]  # x constant
        assert grid[0, 2] < grid[1, 2] < grid[2, 2]  # z ascending
        assert grid[3, 1] > grid[0, 1]  # y steps after z wraps

    def test_resolution_validated(self):
        with pytest.raises(ValueError, match="resolution"):
            candidate_grid(WorkspaceCube(np.zeros(3), 1.0), 0)
