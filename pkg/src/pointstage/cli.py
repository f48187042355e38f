"""Command-line interface.

Subcommands
-----------
render     Render a scene config to per-view color/depth images.
pipeline   Two-stage synthetic-target localization over a scene.
keyframes  Extract gripper keyframes from a trajectory log.
bench      Time the vectorized renderer (optionally against the oracle).
verify     Cross-check the fast renderer against the sequential oracle.

Exit codes: 0 success, 1 runtime/data error or failed verification,
2 usage error (from argparse).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .fileio import (
    load_scene_config,
    load_trajectory,
    read_ply,
    write_image,
    write_report,
    write_tensor,
)
from .fusion import Heatmap, score_points
from .geom import PointCloud, WorkspaceCube, make_rig
from .pipeline import PipelineConfig, SyntheticScorer, extract_keyframes, run_two_stage
from .reference import render_oracle
from .renderer import SplatConfig, pack, render, unpack
from .upsample import CoarseFeatureGrid, convex_upsample, normalize_to_convex


def _parse_triple(raw: str, name: str) -> np.ndarray:
    parts = raw.split(",")
    if len(parts) != 3:
        raise ValueError(f"{name} must be three comma-separated numbers, got {raw!r}")
    return np.asarray([float(p) for p in parts], dtype=np.float64)


def _scene_setup(cfg_path: str, workers: int):
    scene = load_scene_config(cfg_path)
    cloud = read_ply(scene.cloud_path)
    workspace = WorkspaceCube(np.asarray(scene.center), scene.side)
    rig = make_rig(
        workspace, scene.views, scene.image_size, scene.image_size, scene.projection
    )
    splat = SplatConfig(radius=scene.radius, max_px=scene.max_px)
    pipe_cfg = PipelineConfig(
        views=tuple(scene.views),
        image_size=scene.image_size,
        projection=scene.projection,
        splat=splat,
        zoom=scene.zoom,
        coarse_resolution=scene.coarse_resolution,
        fine_resolution=scene.fine_resolution,
        workers=workers,
    )
    return scene, cloud, workspace, rig, splat, pipe_cfg


def _cmd_render(args: argparse.Namespace) -> int:
    scene, cloud, _, rig, splat, _ = _scene_setup(args.scene, args.workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = render(cloud, rig, splat, workers=args.workers)
    for (name, _), view in zip(rig, views):
        color = out_dir / f"{name}_color.ppm"
        depth = out_dir / f"{name}_depth.pgm"
        if view.features.shape[2] == 3:
            write_image(color, view.features)
        else:
            write_image(color.with_suffix(".pgm"), view.features[:, :, 0])
        write_image(depth, view.depth.astype(np.float64))
        write_tensor(out_dir / f"{name}_depth.pstn", view.depth)
        if args.save_features:
            write_tensor(out_dir / f"{name}_features.pstn", view.features)
        hits = int(view.hit_mask.sum())
        print(f"{name}: {hits} pixels hit, wrote {color.name} {depth.name} {name}_depth.pstn")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    _, cloud, workspace, _, _, pipe_cfg = _scene_setup(args.scene, args.workers)
    target = _parse_triple(args.target, "--target")
    if not bool(workspace.contains(target.reshape(1, 3))[0]):
        raise ValueError(f"target {target.tolist()} is outside the workspace")
    scorer = SyntheticScorer(target, sigma_px=args.sigma)

    t0 = time.perf_counter()
    fine = run_two_stage(cloud, scorer, pipe_cfg, workspace)
    elapsed = time.perf_counter() - t0
    coarse = fine.coarse
    assert coarse is not None
    coarse_err = float(np.linalg.norm(coarse.location - target))
    fine_err = float(np.linalg.norm(fine.location - target))
    print(f"coarse: location={coarse.location.tolist()} score={coarse.score:.6f} error={coarse_err:.6g}")
    print(f"fine:   location={fine.location.tolist()} score={fine.score:.6f} error={fine_err:.6g}")
    if fine.low_confidence:
        print("warning: fine stage score carries no positive evidence")
    if args.report:
        write_report(
            args.report,
            {
                "target": target.tolist(),
                "coarse_error_m": coarse_err,
                "fine_error_m": fine_err,
                "roi": {
                    "center": coarse.roi.center.tolist(),
                    "side": coarse.roi.side,
                },
                "timings": {"total_s": elapsed},
                "coarse": {
                    "location": coarse.location.tolist(),
                    "score": coarse.score,
                },
                "fine": {
                    "location": fine.location.tolist(),
                    "score": fine.score,
                    "low_confidence": fine.low_confidence,
                },
            },
        )
        print(f"wrote {args.report}")
    return 0


def _cmd_keyframes(args: argparse.Namespace) -> int:
    log = load_trajectory(args.log)
    frames = extract_keyframes(log)
    for t in frames:
        print(f"keyframe t={t}")
    if args.report:
        write_report(args.report, {"count": len(frames), "keyframes": frames})
        print(f"wrote {args.report}")
    return 0


def _bench_cloud(n_points: int, seed: int) -> tuple[PointCloud, WorkspaceCube]:
    rng = np.random.default_rng(seed)
    workspace = WorkspaceCube(np.zeros(3), 1.0)
    pos = rng.uniform(-0.5, 0.5, size=(n_points, 3))
    feat = rng.random((n_points, 3))
    return PointCloud(pos, feat), workspace


_VIEW_COUNTS = {"3": ("front", "top", "right"), "5": ("front", "back", "left", "right", "top")}


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.views in _VIEW_COUNTS:
        views = _VIEW_COUNTS[args.views]
    else:
        views = tuple(v.strip() for v in args.views.split(","))
    cloud, workspace = _bench_cloud(args.points, args.seed)
    rig = make_rig(workspace, views, args.size, args.size, args.projection)
    splat = SplatConfig(radius=args.radius, max_px=args.max_px)
    n_views = len(rig)

    render(cloud, rig, splat, workers=args.workers)  # warm-up
    best = float("inf")
    for _ in range(args.repeat):
        t0 = time.perf_counter()
        render(cloud, rig, splat, workers=args.workers)
        best = min(best, time.perf_counter() - t0)
    fast_pps = args.points * n_views / best
    print(
        f"fast points_per_s={fast_pps:.6g} ms_per_frame={1000.0 * best / n_views:.6g} "
        f"points={args.points} views={n_views} workers={args.workers}"
    )
    if args.oracle:
        t0 = time.perf_counter()
        render_oracle(cloud, rig, splat)
        elapsed = time.perf_counter() - t0
        oracle_pps = args.points * n_views / elapsed
        print(
            f"oracle points_per_s={oracle_pps:.6g} "
            f"ms_per_frame={1000.0 * elapsed / n_views:.6g}"
        )
        print(f"ratio fast_over_oracle={fast_pps / oracle_pps:.6g}")
    return 0


def _verify_scene(rng: np.random.Generator, index: int, workers_list: list[int]) -> list[str]:
    """One randomized fast-vs-oracle comparison; returns mismatch messages."""
    n = int(rng.integers(200, 2000))
    projection = "pinhole" if index % 2 else "orthographic"
    radius = [0.0, 0.02, 0.08][index % 3]
    size = int(rng.integers(24, 64))
    workspace = WorkspaceCube(rng.uniform(-1, 1, 3), float(rng.uniform(0.5, 2.0)))
    pos = rng.uniform(workspace.min_corner, workspace.max_corner, size=(n, 3))
    if index % 5 == 4:
        # Quantized positions force depth ties so index tie-breaks are hit.
        step = workspace.side / 8.0
        pos = workspace.center + np.round((pos - workspace.center) / step) * step
    cloud = PointCloud(pos, rng.random((n, 2)))
    rig = make_rig(workspace, ("front", "top", "right"), size, size, projection)
    cfg = SplatConfig(radius=radius, max_px=6)

    fast = render(cloud, rig, cfg)
    oracle = render_oracle(cloud, rig, cfg)
    problems = []
    for (name, _), a, b in zip(rig, fast, oracle):
        if not np.array_equal(a.depth, b.depth):
            problems.append(f"scene {index} view {name}: depth mismatch")
        if not np.array_equal(a.features, b.features):
            problems.append(f"scene {index} view {name}: feature mismatch")
        if not np.array_equal(a.hit_mask, b.hit_mask):
            problems.append(f"scene {index} view {name}: hit mask mismatch")
    for workers in workers_list:
        redo = render(cloud, rig, cfg, workers=workers)
        for (name, _), a, b in zip(rig, fast, redo):
            if not (
                np.array_equal(a.depth, b.depth)
                and np.array_equal(a.features, b.features)
            ):
                problems.append(
                    f"scene {index} view {name}: workers={workers} not deterministic"
                )
    return problems


def _verify_pack(rng: np.random.Generator, n_pairs: int) -> list[str]:
    problems = []
    depths = rng.uniform(0.0, 100.0, n_pairs).astype(np.float32)
    indices = rng.integers(0, 1 << 32, n_pairs, dtype=np.uint64)
    for i in range(0, n_pairs - 1, 2):
        a = pack(float(depths[i]), int(indices[i]))
        b = pack(float(depths[i + 1]), int(indices[i + 1]))
        lex = (depths[i], indices[i]) < (depths[i + 1], indices[i + 1])
        if (a.value < b.value) != bool(lex):
            problems.append(
                f"pack order mismatch: ({depths[i]}, {indices[i]}) vs "
                f"({depths[i + 1]}, {indices[i + 1]})"
            )
        key, idx = unpack(a.value)
        if idx != int(indices[i]) or np.uint32(key).view(np.float32) != depths[i]:
            problems.append(f"pack round-trip failed for ({depths[i]}, {indices[i]})")
    return problems


def _verify_fusion(rng: np.random.Generator) -> list[str]:
    # Bilinear fusion against a direct per-point loop.
    workspace = WorkspaceCube(np.zeros(3), 1.0)
    rig = make_rig(workspace, ("front", "top"), 32, 32, "orthographic")
    points = rng.uniform(-0.45, 0.45, size=(40, 3))
    maps = [Heatmap(rng.random((32, 32)), i) for i in range(len(rig))]
    scored = score_points(points, maps, rig)
    problems = []
    for i, p in enumerate(points):
        total, hit = 0.0, 0
        for hm, (_, cam) in zip(maps, rig):
            u, v, z = cam.project_continuous(p.reshape(1, 3))
            if not bool(cam.in_view(u, v, z)[0]):
                continue
            x0, y0 = int(np.floor(u[0])), int(np.floor(v[0]))
            fx, fy = u[0] - x0, v[0] - y0
            g = hm.values
            cl = lambda a, lo, hi: max(lo, min(hi, a))
            v00 = g[cl(y0, 0, 31), cl(x0, 0, 31)]
            v10 = g[cl(y0, 0, 31), cl(x0 + 1, 0, 31)]
            v01 = g[cl(y0 + 1, 0, 31), cl(x0, 0, 31)]
            v11 = g[cl(y0 + 1, 0, 31), cl(x0 + 1, 0, 31)]
            total += (
                v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy
            )
            hit += 1
        want = total / hit if hit else -np.inf
        got = scored.scores[i]
        if hit != scored.views_hit[i] or not (
            got == want or abs(got - want) <= 1e-9 * max(1.0, abs(want))
        ):
            problems.append(f"fusion mismatch at point {i}: {got} vs {want}")
    return problems


def _verify_upsample(rng: np.random.Generator) -> list[str]:
    grid = CoarseFeatureGrid(rng.random((3, 4, 2)))
    weights = normalize_to_convex(rng.normal(size=(6, 8, 9)))
    fine = convex_upsample(grid, weights, factor=2)
    problems = []
    gh, gw, _ = grid.values.shape
    for y in range(6):
        for x in range(8):
            for c in range(2):
                acc = 0.0
                for k in range(9):
                    dy, dx = k // 3 - 1, k % 3 - 1
                    ry = min(max(y // 2 + dy, 0), gh - 1)
                    rx = min(max(x // 2 + dx, 0), gw - 1)
                    acc += weights.values[y, x, k] * grid.values[ry, rx, c]
                if abs(fine[y, x, c] - acc) > 1e-12:
                    problems.append(f"upsample mismatch at ({y}, {x}, {c})")
    return problems


def _cmd_verify(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    problems = _verify_pack(rng, 2000)
    print(f"pack laws: {'ok' if not problems else 'FAILED'}")
    all_problems = list(problems)

    for i in range(args.scenes):
        scene_problems = _verify_scene(rng, i, [2, 8])
        status = "ok" if not scene_problems else "FAILED"
        print(f"scene {i + 1}/{args.scenes}: {status}")
        all_problems.extend(scene_problems)

    for label, fn in (("fusion", _verify_fusion), ("upsample", _verify_upsample)):
        probs = fn(rng)
        print(f"{label}: {'ok' if not probs else 'FAILED'}")
        all_problems.extend(probs)

    if all_problems:
        for p in all_problems:
            print(f"mismatch: {p}", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointstage",
        description="Virtual multi-view point cloud rendering and localization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene config to image files")
    p.add_argument("--scene", required=True, help="path to a key = value scene config")
    p.add_argument("--out", default="renders", help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument(
        "--save-features",
        action="store_true",
        help="also write per-view feature tensors",
    )
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("pipeline", help="run two-stage localization on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--target", required=True, help="world target as x,y,z")
    p.add_argument("--sigma", type=float, default=8.0, help="heatmap bump width in px")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_pipeline)

    p = sub.add_parser("keyframes", help="extract gripper keyframes from a log")
    p.add_argument("--log", required=True, help="path to a trajectory log")
    p.add_argument("--report", help="write a JSON report here")
    p.set_defaults(fn=_cmd_keyframes)

    p = sub.add_parser("bench", help="time the renderer on a random cloud")
    p.add_argument("--points", type=int, default=1_000_000)
    p.add_argument("--size", type=int, default=224, help="square image size in px")
    p.add_argument("--views", default="3", help="view count (3 or 5) or comma names")
    p.add_argument("--projection", choices=("orthographic", "pinhole"), default="orthographic")
    p.add_argument("--radius", type=float, default=0.0)
    p.add_argument("--max-px", type=int, default=5)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--oracle", action="store_true", help="also time the sequential oracle")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("verify", help="cross-check the renderer against its oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=6)
    p.set_defaults(fn=_cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.fn(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
