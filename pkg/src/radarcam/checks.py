"""Executable verification suites: oracle equivalence, gradient checks,
and pipeline invariants.

Every check is deterministic given its seed and returns a CheckResult; the
CLI ``check`` command prints them as a table, and the test suite asserts
them individually. All suites run at check precision (float64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from .camera import CameraConfig, frustum_cell_index, splat_to_bev
from .config import RunConfig, default_config_dict, _build
from .distill import blend, igfm_loss, ld_loss, soft_label_mask, swfd_loss, swrd_loss
from .fusion import FusionConfig, deform_attn_fuse
from .grids import BevGridSpec, VoxelSpec
from .head import Box3D, HeadOutput, depth_nll, det_loss
from .intensity import LidarPoint, lidar_intensity_bev
from .objective import LossWeights, finite_diff_grad, total_loss
from .pipeline import FusionModel
from .radar import RadarPoint, build_grid, embed_points
from .scene import generate_scene
from .tensor import (
    ParamStore,
    Tensor,
    affine,
    bilinear_sample,
    channel_max_pool,
    conv2d,
    outer_scale,
    precision,
    sigmoid,
    softmax,
)

SUITE_NAMES = ("oracles", "gradients", "invariants", "all")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _result(name: str, worst: float, bound: float, extra: str = "") -> CheckResult:
    passed = worst <= bound
    detail = f"worst {worst:.3e} vs bound {bound:.1e}"
    if extra:
        detail += f" ({extra})"
    return CheckResult(name=name, passed=passed, detail=detail)


def _max_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _grad_mismatch(analytic: np.ndarray, numeric: np.ndarray, rtol: float, atol: float) -> float:
    """Largest violation ratio of |a - n| <= atol + rtol * |n| (<= 1 passes)."""
    diff = np.abs(analytic - numeric)
    bound = atol + rtol * np.abs(numeric)
    return float(np.max(diff / bound)) if diff.size else 0.0


def small_run_config(
    rows: int = 8, img: int = 8, n_objects: int = 2, seed: int = 0
) -> RunConfig:
    doc = default_config_dict()
    doc["seed"] = seed
    doc["grid"]["rows"] = doc["grid"]["cols"] = rows
    doc["camera"]["img_h"] = doc["camera"]["img_w"] = img
    doc["n_objects"] = n_objects
    return _build(doc)


# -- oracle equivalence ------------------------------------------------------


def check_conv2d_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        c_in = int(rng.integers(1, 4))
        c_out = int(rng.integers(1, 4))
        kh = int(rng.choice([1, 3]))
        kw = int(rng.choice([1, 3]))
        h = int(rng.integers(1, 8))
        w = int(rng.integers(1, 8))
        x = rng.normal(size=(c_in, h, w))
        k = rng.normal(size=(c_out, c_in, kh, kw))
        b = rng.normal(size=c_out)
        got = conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        want = oracles.conv2d_loops(x, k, b)
        worst = max(worst, _max_abs_diff(got, want))
    return _result(f"conv2d vs quadruple-loop oracle ({n} instances)", worst, 1e-10)


def check_affine_outer_oracles(seed: int = 0, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        lead = int(rng.integers(1, 8))
        k_in = int(rng.integers(1, 8))
        k_out = int(rng.integers(1, 8))
        x = rng.normal(size=(lead, k_in))
        w = rng.normal(size=(k_in, k_out))
        b = rng.normal(size=k_out)
        worst = max(
            worst,
            _max_abs_diff(affine(Tensor(x), Tensor(w), Tensor(b)).data, oracles.affine_loops(x, w, b)),
        )
        c = rng.normal(size=int(rng.integers(1, 8)))
        p = rng.normal(size=int(rng.integers(1, 8)))
        worst = max(
            worst,
            _max_abs_diff(outer_scale(Tensor(c), Tensor(p)).data, oracles.outer_loops(c, p)),
        )
    return _result(f"affine/outer_scale vs naive loops ({n} instances)", worst, 1e-10)


def check_bilinear_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        c, h, w = 3, int(rng.integers(2, 7)), int(rng.integers(2, 7))
        fmap = rng.normal(size=(c, h, w))
        u = float(rng.uniform(-1.5, w + 0.5))
        v = float(rng.uniform(-1.5, h + 0.5))
        got = bilinear_sample(Tensor(fmap), u, v).data
        worst = max(worst, _max_abs_diff(got, oracles.bilinear_corners(fmap, u, v)))
    return _result(f"bilinear_sample vs 4-corner formula ({n} instances)", worst, 1e-12)


def _random_radar_points(rng: np.random.Generator, count: int, span: float = 9.0):
    pts = []
    for _ in range(count):
        pts.append(
            RadarPoint(
                x=float(rng.uniform(-span, span)),
                y=float(rng.uniform(-span, span)),
                z=float(rng.uniform(0.0, 2.0)),
                vx=float(rng.normal(0, 4)),
                vy=float(rng.normal(0, 4)),
                rcs=float(rng.uniform(-12, 32)),
            )
        )
    return pts


def _embedding_params(rng: np.random.Generator, c: int = 4) -> ParamStore:
    store = ParamStore()
    store.add("radar.embed.fc1.w", Tensor(rng.normal(size=(5, c))))
    store.add("radar.embed.fc1.b", Tensor(rng.normal(size=c)))
    store.add("radar.embed.fc2.w", Tensor(rng.normal(size=(c, c))))
    store.add("radar.embed.fc2.b", Tensor(rng.normal(size=c)))
    return store


def check_build_grid_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    grid = BevGridSpec(x_min=-8.0, x_max=8.0, y_min=-8.0, y_max=8.0, rows=8, cols=8)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        pts = _random_radar_points(rng, int(rng.integers(1, 30)))
        params = _embedding_params(rng)
        embs = embed_points(pts, params)
        got = build_grid(pts, embs, grid).features.data
        want = oracles.max_pool_grid_loops(
            [p.x for p in pts],
            [p.y for p in pts],
            np.stack([e.data for e in embs]),
            grid,
        )
        worst = max(worst, _max_abs_diff(got, want))
    return _result(f"build_grid vs brute-force max pool ({n} instances)", worst, 1e-10)


def check_lidar_intensity_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    grid = BevGridSpec(x_min=-4.0, x_max=4.0, y_min=-4.0, y_max=4.0, rows=8, cols=8)
    voxel = VoxelSpec(size_x=0.1, size_y=0.1, size_z=0.2, z_min=-5.0, z_max=3.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        pts = [
            LidarPoint(
                x=float(rng.uniform(-4.5, 4.5)),
                y=float(rng.uniform(-4.5, 4.5)),
                z=float(rng.uniform(-6.0, 4.0)),
                intensity=float(rng.uniform(0, 1)),
                t=0.0,
            )
            for _ in range(int(rng.integers(0, 60)))
        ]
        got = lidar_intensity_bev(pts, voxel, grid).data
        want = oracles.lidar_two_stage_mean(pts, voxel, grid)
        worst = max(worst, _max_abs_diff(got, want))
    return _result(f"lidar_intensity_bev vs two-stage mean oracle ({n} instances)", worst, 1e-12)


def check_splat_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n):
        cam = CameraConfig(
            n_views=2,
            img_h=int(rng.integers(2, 5)),
            img_w=int(rng.integers(2, 6)),
            depth_bins=int(rng.integers(2, 6)),
            d_min=1.0,
            d_max=float(rng.uniform(6, 14)),
            yaws=(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))),
            positions=((0.0, 0.0), (float(rng.uniform(-2, 2)), 0.0)),
        )
        grid = BevGridSpec(x_min=-6, x_max=6, y_min=-6, y_max=6, rows=6, cols=6)
        frustum = rng.normal(
            size=(cam.n_views, 3, cam.depth_bins, cam.img_h, cam.img_w)
        )
        got, stats = splat_to_bev(Tensor(frustum), cam, grid)
        want, dropped = oracles.splat_accumulate_loops(
            frustum, np.asarray(frustum_cell_index(cam, grid)), grid.rows, grid.cols
        )
        worst = max(worst, _max_abs_diff(got.data, want))
        worst = max(worst, abs(stats.dropped_mass - dropped))
    return _result(f"splat_to_bev vs point-list accumulation ({n} instances)", worst, 1e-10)


def check_attention_oracle(seed: int = 0, n: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n):
        c, rows, cols = 3, 4, 4
        p = int(rng.integers(1, 3))  # P <= 2
        cfg = FusionConfig(points=p, offset_scale=float(rng.uniform(0.5, 2.0)), residual=bool(trial % 2))
        store = ParamStore()
        ow = rng.normal(size=(c, 2 * p))
        ob = rng.uniform(-0.7, 0.7, size=2 * p)
        gw, gb = float(rng.normal(1, 0.4)), float(rng.normal(0, 0.3))
        store.add("fuse.offset.w", Tensor(ow))
        store.add("fuse.offset.b", Tensor(ob))
        store.add("fuse.gate.w", Tensor(np.array([[gw]])))
        store.add("fuse.gate.b", Tensor(np.array([gb])))
        fr = rng.normal(size=(c, rows, cols))
        fc = rng.normal(size=(c, rows, cols))
        ic = rng.uniform(0, 1, size=(1, rows, cols))
        ir = rng.uniform(0, 1, size=(1, rows, cols))
        got = deform_attn_fuse(Tensor(fr), Tensor(fc), Tensor(ic), Tensor(ir), cfg, store)
        want = oracles.deform_attention_loops(
            fr, fc, ic, ir, ow, ob, gw, gb, p, cfg.offset_scale, cfg.residual
        )
        worst = max(worst, _max_abs_diff(got.data, want))
    return _result(f"deform_attn_fuse vs per-query loop oracle ({n} instances)", worst, 1e-10)


def oracle_checks(seed: int = 0, n: int = 100) -> list[CheckResult]:
    with precision("f64"):
        return [
            check_conv2d_oracle(seed, n),
            check_affine_outer_oracles(seed, n),
            check_bilinear_oracle(seed, n),
            check_build_grid_oracle(seed, n),
            check_lidar_intensity_oracle(seed, n),
            check_splat_oracle(seed, n),
            check_attention_oracle(seed, n),
        ]


# -- gradient checks ---------------------------------------------------------


def _loss_fixture(seed: int):
    """4x4 grid, 3 channels: everything the individual losses consume."""
    rng = np.random.default_rng(seed)
    grid = BevGridSpec(x_min=-8, x_max=8, y_min=-8, y_max=8, rows=4, cols=4)
    f_radar = rng.normal(size=(3, 4, 4))
    f_lidar = rng.normal(size=(3, 4, 4))
    f_fused = rng.normal(size=(3, 4, 4))
    f_label = rng.normal(size=(3, 4, 4))
    i_lidar = rng.uniform(0.05, 0.95, size=(1, 4, 4))
    boxes = [
        Box3D(x=-3.0, y=-2.0, z=0.5, l=3.5, w=1.7, h=1.5, yaw=0.4, cls=0),
        Box3D(x=4.0, y=3.0, z=0.6, l=4.2, w=1.9, h=1.6, yaw=-1.2, cls=1),
    ]
    return rng, grid, f_radar, f_lidar, f_fused, f_label, i_lidar, boxes


def check_fd_quadratic() -> CheckResult:
    x = Tensor(np.array([3.0, -1.5, 0.25]))
    grad = finite_diff_grad(lambda t: (t * t).sum(), x, h=1e-5)
    worst = _max_abs_diff(grad.data, 2.0 * x.data)
    return _result("finite differences on sum of squares", worst, 1e-8)


def check_loss_gradients(seed: int = 0) -> CheckResult:
    """Analytic vs central-difference gradients for all six loss terms."""
    rng, grid, f_radar, f_lidar, f_fused, f_label, i_lidar, boxes = _loss_fixture(seed)
    h = 1e-5
    rtol, atol = 1e-5, 1e-9
    worst = 0.0
    details = []

    def fd_vs_analytic(name: str, build: Callable[[Tensor], Tensor], x0: np.ndarray):
        nonlocal worst
        t = Tensor(x0.copy(), requires_grad=True)
        loss = build(t)
        loss.backward()
        numeric = finite_diff_grad(lambda tt: build(tt).item(), Tensor(x0.copy()), h=h)
        miss = _grad_mismatch(t.grad, numeric.data, rtol, atol)
        details.append(f"{name} {miss:.2f}")
        worst = max(worst, miss)

    lam = Tensor(np.asarray(0.7), requires_grad=True)
    il_t = Tensor(i_lidar)
    fl_t = Tensor(f_lidar)

    def igfm_of_radar(fr: Tensor) -> Tensor:
        blended, _ = blend(fl_t, fr, il_t, lam)
        return igfm_loss(fr, fl_t, blended, alpha=0.5)

    fd_vs_analytic("igfm/Fr", igfm_of_radar, f_radar)

    def igfm_of_lambda(lt: Tensor) -> Tensor:
        blended, _ = blend(fl_t, Tensor(f_radar), il_t, lt)
        return igfm_loss(Tensor(f_radar), fl_t, blended, alpha=0.5)

    fd_vs_analytic("igfm/lambda", igfm_of_lambda, np.asarray(0.7))

    beta_params = ParamStore()
    beta_params.add("distill.beta.w", Tensor(np.eye(3).reshape(3, 3, 1, 1) + 0.1 * rng.normal(size=(3, 3, 1, 1))))
    beta_params.add("distill.beta.b", Tensor(0.1 * rng.normal(size=3)))

    fd_vs_analytic(
        "swfd/Ffused",
        lambda t: swfd_loss(fl_t, t, il_t, beta_params),
        f_fused,
    )
    fd_vs_analytic(
        "swfd/beta.w",
        lambda t: swfd_loss(
            fl_t,
            Tensor(f_fused),
            il_t,
            _store(
                {"distill.beta.w": t, "distill.beta.b": beta_params["distill.beta.b"].detach()}
            ),
        ),
        beta_params["distill.beta.w"].data.copy(),
    )

    teacher = HeadOutput(
        heatmap=Tensor(rng.uniform(0.05, 0.95, size=(2, 4, 4))),
        bbox=Tensor(rng.normal(size=(8, 4, 4))),
    )
    student_bbox = rng.normal(size=(8, 4, 4))
    student_heat_raw = rng.normal(size=(2, 4, 4))

    fd_vs_analytic(
        "swrd/heatmap",
        lambda t: swrd_loss(
            teacher, HeadOutput(heatmap=sigmoid(t), bbox=Tensor(student_bbox)), il_t
        ),
        student_heat_raw,
    )
    fd_vs_analytic(
        "swrd/bbox",
        lambda t: swrd_loss(
            teacher,
            HeadOutput(heatmap=sigmoid(Tensor(student_heat_raw)), bbox=t),
            il_t,
        ),
        student_bbox,
    )

    mask = soft_label_mask(boxes, grid)
    fd_vs_analytic("ld/Ffused", lambda t: ld_loss(Tensor(f_label), t, mask), f_fused)

    heat_raw = rng.normal(size=(3, 4, 4))
    bbox_raw = rng.normal(size=(8, 4, 4))
    fd_vs_analytic(
        "det/heatmap",
        lambda t: det_loss(
            HeadOutput(heatmap=sigmoid(t), bbox=Tensor(bbox_raw)), boxes, grid
        ),
        heat_raw,
    )
    fd_vs_analytic(
        "det/bbox",
        lambda t: det_loss(
            HeadOutput(heatmap=sigmoid(Tensor(heat_raw)), bbox=t), boxes, grid
        ),
        bbox_raw,
    )

    hits = [(0, 1, 2, 3), (0, 0, 1, 1), (1, 3, 2, 0), (0, 1, 2, 3)]
    logits = rng.normal(size=(2, 4, 4, 4))
    fd_vs_analytic(
        "depth/logits",
        lambda t: depth_nll(softmax(t, axis=1), hits),
        logits,
    )
    return _result("per-loss gradients vs finite differences", worst, 1.0, " ".join(details))


def _store(entries: dict[str, Tensor]) -> ParamStore:
    store = ParamStore()
    for name, value in entries.items():
        store.add(name, value)
    return store


def check_end_to_end_gradients(
    seed: int = 0, cap: int = 64, h: float = 1e-5
) -> CheckResult:
    """Analytic gradient of the total objective vs central differences.

    Every trainable tensor is probed: exhaustively when it has at most
    ``cap`` entries, otherwise on ``cap`` seeded entries plus a random
    directional derivative over the whole tensor.
    """
    rtol, atol = 1e-4, 1e-8
    with precision("f64"):
        cfg = small_run_config(seed=seed)
        model = FusionModel(cfg)
        scene = generate_scene(cfg.seed + 17, cfg.scene_config())
        statics = model.prepare(scene)
        state, grads = model.gradients(scene, statics)
        rng = np.random.default_rng(seed + 99)
        worst = 0.0
        worst_name = ""
        for name in model.params.trainable_names():
            tensor = model.params[name]
            analytic = grads.get(name)
            if analytic is None:
                analytic = np.zeros_like(tensor.data)
            base = tensor.data.copy()
            flat = tensor.data.reshape(-1)

            def evaluate() -> float:
                return model.forward(scene, statics).total.item()

            n = flat.size
            if n <= cap:
                entries = np.arange(n)
            else:
                entries = rng.choice(n, size=cap, replace=False)
            a_sel = analytic.reshape(-1)[entries]
            numeric = np.zeros(entries.size)
            for j, idx in enumerate(entries):
                saved = flat[idx]
                flat[idx] = saved + h
                up = evaluate()
                flat[idx] = saved - h
                down = evaluate()
                flat[idx] = saved
                numeric[j] = (up - down) / (2 * h)
            miss = _grad_mismatch(a_sel, numeric, rtol, atol)
            if n > cap:
                direction = rng.normal(size=n)
                direction /= np.linalg.norm(direction)
                tensor.data = (base.reshape(-1) + h * direction).reshape(base.shape)
                up = evaluate()
                tensor.data = (base.reshape(-1) - h * direction).reshape(base.shape)
                down = evaluate()
                tensor.data = base
                fd_dir = (up - down) / (2 * h)
                an_dir = float(analytic.reshape(-1) @ direction)
                miss = max(miss, _grad_mismatch(np.array([an_dir]), np.array([fd_dir]), rtol, atol))
            if miss > worst:
                worst, worst_name = miss, name
        return _result(
            "end-to-end gradients vs finite differences", worst, 1.0, f"worst at {worst_name}"
        )


def gradient_checks(seed: int = 0, cap: int = 64) -> list[CheckResult]:
    with precision("f64"):
        return [
            check_fd_quadratic(),
            check_loss_gradients(seed),
            check_end_to_end_gradients(seed, cap=cap),
        ]


# -- invariants --------------------------------------------------------------


def check_softmax_normalization(seed: int = 0, n: int = 1000) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(scale=rng.uniform(0.1, 30), size=8)
        y = softmax(Tensor(x), axis=0).data
        total = oracles.compensated_sum(y)
        worst = max(worst, abs(total - 1.0))
        if y.min() <= 0 or y.max() > 1:
            return CheckResult("softmax range", False, f"value outside (0,1]: {y.min()}, {y.max()}")
    return _result(f"softmax slice sums over {n} random vectors", worst, 1e-12)


def check_pipeline_normalization(seed: int = 0) -> CheckResult:
    cfg = small_run_config(seed=seed)
    model = FusionModel(cfg)
    scene = generate_scene(cfg.seed + 5, cfg.scene_config())
    statics = model.prepare(scene)
    state = model.forward(scene, statics)
    depth = state.tensors["depth"].data
    worst = float(np.max(np.abs(depth.sum(axis=1) - 1.0)))
    fused, weights = deform_attn_fuse(
        state.tensors["f_radar"].detach(),
        state.tensors["f_camera"].detach(),
        state.tensors["i_cam"].detach(),
        statics.i_radar,
        cfg.fusion,
        model.params,
        with_weights=True,
    )
    worst = max(worst, float(np.max(np.abs(weights.data.sum(axis=1) - 1.0))))
    for name in ("i_cam", "i_radar", "i_lidar"):
        data = state.tensors[name].data
        if data.min() < 0 or data.max() > 1:
            return CheckResult(
                "intensity map ranges", False, f"{name} outside [0,1]: {data.min()}, {data.max()}"
            )
    return _result("depth/attention normalization and intensity ranges", worst, 1e-6)


def check_blend_limits(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    fl = Tensor(rng.normal(size=(3, 5, 5)))
    fr = Tensor(rng.normal(size=(3, 5, 5)))
    il = Tensor(rng.uniform(0, 1, size=(1, 5, 5)))
    zero, _ = blend(fl, fr, il, Tensor(np.asarray(0.0)))
    ok_radar = zero.data.tobytes() == fr.data.tobytes()
    ones = Tensor(np.ones((1, 5, 5)))
    full, _ = blend(fl, fr, ones, Tensor(np.asarray(1.0)))
    ok_lidar = full.data.tobytes() == fl.data.tobytes()
    return CheckResult(
        "blend limits reproduce inputs bit-exactly",
        ok_radar and ok_lidar,
        f"lambda=0 radar: {ok_radar}, clamp=1 lidar: {ok_lidar}",
    )


def check_loss_identities(seed: int = 0) -> CheckResult:
    rng, grid, f_radar, f_lidar, _, _, i_lidar, boxes = _loss_fixture(seed)
    fr = Tensor(f_radar)
    il = Tensor(i_lidar)
    failures = []
    # alignment term alone: Fr == Fl
    if igfm_loss(fr, fr, Tensor(rng.normal(size=(3, 4, 4))), alpha=1.0).item() != 0.0:
        failures.append("align")
    # consistency term alone: blend == Fr
    if igfm_loss(fr, Tensor(f_lidar), fr, alpha=0.0).item() != 0.0:
        failures.append("consist")
    store = ParamStore()
    store.add("distill.beta.w", Tensor(np.eye(3).reshape(3, 3, 1, 1)))
    store.add("distill.beta.b", Tensor(np.zeros(3)))
    if swfd_loss(fr, fr, il, store).item() != 0.0:
        failures.append("swfd")
    mask = soft_label_mask(boxes, grid)
    if ld_loss(fr, fr, mask).item() != 0.0:
        failures.append("ld")
    # hard 0/1 heatmaps zero the cls terms exactly, isolating the bbox part
    hard = np.zeros((2, 4, 4))
    hard[0, 1, 2] = 1.0
    heat_hard = Tensor(hard)
    bbox = Tensor(rng.normal(size=(8, 4, 4)))
    identity = swrd_loss(
        HeadOutput(heatmap=heat_hard, bbox=bbox),
        HeadOutput(heatmap=heat_hard, bbox=bbox),
        il,
    )
    if identity.item() != 0.0:
        failures.append("swrd-bbox")
    zero_i = swrd_loss(
        HeadOutput(heatmap=Tensor(rng.uniform(0.1, 0.9, size=(2, 4, 4))), bbox=bbox),
        HeadOutput(heatmap=Tensor(rng.uniform(0.1, 0.9, size=(2, 4, 4))), bbox=bbox),
        Tensor(np.zeros((1, 4, 4))),
    )
    if zero_i.item() != 0.0:
        failures.append("swrd-zero-intensity")
    # hand-computed 2x2 blend of the guidance loss at alpha = 0.5
    fr2 = Tensor(rng.normal(size=(1, 2, 2)))
    fl2 = Tensor(rng.normal(size=(1, 2, 2)))
    ft2 = Tensor(rng.normal(size=(1, 2, 2)))
    got = igfm_loss(fr2, fl2, ft2, alpha=0.5).item()
    align = oracles.compensated_sum((fr2.data - fl2.data).reshape(-1) ** 2) / 4
    consist = oracles.compensated_sum((fr2.data - ft2.data).reshape(-1) ** 2) / 4
    want = 0.5 * align + 0.5 * consist
    if abs(got - want) > 1e-12:
        failures.append(f"igfm-2x2 ({abs(got - want):.2e})")
    return CheckResult(
        "loss identities evaluate to exact zero",
        not failures,
        "failed: " + ", ".join(failures) if failures else "all identities exact",
    )


def check_objective_linearity(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    weights = LossWeights()
    for _ in range(50):
        parts = {
            name: Tensor(np.asarray(float(rng.uniform(0, 3))))
            for name in ("det", "depth", "igfm", "swfd", "swrd", "ld")
        }
        lam3 = Tensor(np.asarray(weights.l3))
        total, down = total_loss(parts, weights, lam3)
        want = oracles.compensated_sum(
            [
                weights.l1 * parts["det"].item(),
                weights.l2 * parts["depth"].item(),
                weights.l3 * parts["igfm"].item(),
                weights.l4 * parts["swfd"].item(),
                weights.l5 * parts["swrd"].item(),
                weights.l6 * parts["ld"].item(),
            ]
        )
        worst = max(worst, abs(total.item() - want))
        # scaling one weight scales its contribution exactly
        boosted = LossWeights(l4=2 * weights.l4)
        total2, _ = total_loss(parts, boosted, lam3)
        delta = total2.item() - total.item()
        worst = max(worst, abs(delta - weights.l4 * parts["swfd"].item()))
    return _result("objective equals independently summed combination", worst, 1e-12)


def check_frozen_teacher(seed: int = 0, steps: int = 5) -> CheckResult:
    cfg = small_run_config(seed=seed)
    model = FusionModel(cfg)
    frozen = {
        n: model.params[n].data.copy()
        for n, p in model.params.items()
        if not p.trainable
    }
    scene = generate_scene(cfg.seed + 3, cfg.scene_config())
    model.run(scene, steps=steps, lr=cfg.lr)
    for name, before in frozen.items():
        if model.params[name].data.tobytes() != before.tobytes():
            return CheckResult("frozen teacher immutability", False, f"{name} changed")
    return CheckResult(
        "frozen teacher immutability",
        True,
        f"{len(frozen)} frozen tensors bit-identical after {steps} steps",
    )


def check_gate_behavior(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    c, rows, cols, p = 3, 4, 4, 2
    cfg = FusionConfig(points=p, offset_scale=1.5, residual=False)
    store = ParamStore()
    ow = rng.normal(size=(c, 2 * p))
    ob = rng.uniform(-0.7, 0.7, size=2 * p)
    store.add("fuse.offset.w", Tensor(ow))
    store.add("fuse.offset.b", Tensor(ob))
    # zero gate weights squash every confidence to exactly 0.5
    store.add("fuse.gate.w", Tensor(np.zeros((1, 1))))
    store.add("fuse.gate.b", Tensor(np.zeros(1)))
    fr = rng.normal(size=(c, rows, cols))
    fc = rng.normal(size=(c, rows, cols))
    ic = rng.uniform(0, 1, size=(1, rows, cols))
    ir = rng.uniform(0, 1, size=(1, rows, cols))
    got = deform_attn_fuse(Tensor(fr), Tensor(fc), Tensor(ic), Tensor(ir), cfg, store)
    want = oracles.deform_attention_loops(
        fr, fc, ic, ir, ow, ob, 0.0, 0.0, p, cfg.offset_scale, False
    )
    worst = _max_abs_diff(got.data, want)
    # monotonicity: raising one gate with positive similarity raises its weight
    sims = np.array([0.8, 0.3, -0.2])
    gates = np.array([0.5, 0.5, 0.5])
    w_before = oracles.softmax_loops(sims * gates)[0]
    gates2 = gates.copy()
    gates2[0] = 0.9
    w_after = oracles.softmax_loops(sims * gates2)[0]
    monotone = w_after > w_before
    detail = f"constant-gate match {worst:.2e}; weight {w_before:.4f} -> {w_after:.4f}"
    return CheckResult("gate behavior", worst <= 1e-10 and monotone, detail)


def check_grid_properties(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = BevGridSpec(x_min=-8, x_max=8, y_min=-8, y_max=8, rows=8, cols=8)
    pts = _random_radar_points(rng, 24)
    params = _embedding_params(rng)
    embs = embed_points(pts, params)
    base = build_grid(pts, embs, grid).features.data
    order = rng.permutation(len(pts))
    shuffled = build_grid(
        [pts[i] for i in order], [embs[i] for i in order], grid
    ).features.data
    if not np.array_equal(base, shuffled):
        return CheckResult("grid permutation invariance", False, "shuffle changed the grid")
    # dropping a strictly dominated point leaves the grid unchanged
    mat = np.stack([e.data for e in embs])
    cells = grid.cells_of(np.array([p.x for p in pts]), np.array([p.y for p in pts]))
    victim = None
    for i in range(len(pts)):
        same = [j for j in range(len(pts)) if j != i and cells[j] == cells[i] >= 0]
        if any((mat[j] > mat[i]).all() for j in same):
            victim = i
            break
    if victim is not None:
        keep = [j for j in range(len(pts)) if j != victim]
        reduced = build_grid([pts[j] for j in keep], [embs[j] for j in keep], grid).features.data
        if not np.array_equal(base, reduced):
            return CheckResult("grid non-max drop", False, "dropping a dominated point changed the grid")
    vecs = [Tensor(rng.normal(size=5)) for _ in range(6)]
    pooled = channel_max_pool(vecs)
    twice = channel_max_pool([pooled])
    if not np.array_equal(pooled.data, twice.data):
        return CheckResult("max pool idempotence", False, "pool(pool) differs")
    return CheckResult("grid pooling properties", True, "permutation, dominated-drop, idempotence hold")


def check_mass_conservation(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    cam = CameraConfig(img_h=6, img_w=6, depth_bins=8, d_max=20.0)
    grid = BevGridSpec(x_min=-10, x_max=10, y_min=-10, y_max=10, rows=6, cols=6)
    worst = 0.0
    for _ in range(20):
        frustum = rng.normal(size=(cam.n_views, 4, cam.depth_bins, cam.img_h, cam.img_w))
        out, stats = splat_to_bev(Tensor(frustum), cam, grid)
        total = float(out.data.sum()) + stats.dropped_mass
        worst = max(worst, abs(total - float(frustum.sum())))
    return _result("splat feature-mass conservation", worst, 1e-8)


def check_determinism(seed: int = 0) -> CheckResult:
    cfg = small_run_config(seed=seed)
    scenes = [generate_scene(cfg.seed, cfg.scene_config()) for _ in range(2)]
    if scenes[0].camera_input.data.tobytes() != scenes[1].camera_input.data.tobytes():
        return CheckResult("scene determinism", False, "camera input differs between reruns")
    if [
        (p.x, p.y, p.z, p.vx, p.vy, p.rcs) for p in scenes[0].radar
    ] != [(p.x, p.y, p.z, p.vx, p.vy, p.rcs) for p in scenes[1].radar]:
        return CheckResult("scene determinism", False, "radar points differ between reruns")
    outs = []
    for _ in range(2):
        model = FusionModel(cfg)
        state = model.forward(scenes[0])
        outs.append(state.tensors["f_fused"].data.tobytes())
    if outs[0] != outs[1]:
        return CheckResult("pipeline determinism", False, "fused features differ between reruns")
    return CheckResult("determinism under fixed seed", True, "scene and forward bit-identical")


def check_training_descent(seed: int = 0) -> CheckResult:
    cfg = _build(default_config_dict())
    model = FusionModel(cfg)
    scene = generate_scene(cfg.seed, cfg.scene_config())
    records = model.run(scene, steps=cfg.steps, lr=cfg.lr)
    first, last = records[0].total, records[-1].total
    ratio = last / first if first else math.inf
    return CheckResult(
        "200-step training descent",
        ratio <= 0.5,
        f"total {first:.4f} -> {last:.4f} (ratio {ratio:.3f})",
    )


def invariant_checks(seed: int = 0) -> list[CheckResult]:
    with precision("f64"):
        results = [
            check_softmax_normalization(seed),
            check_pipeline_normalization(seed),
            check_blend_limits(seed),
            check_loss_identities(seed),
            check_objective_linearity(seed),
            check_frozen_teacher(seed),
            check_gate_behavior(seed),
            check_grid_properties(seed),
            check_mass_conservation(seed),
            check_determinism(seed),
        ]
    with precision("f32"):
        results.append(check_training_descent(seed))
    return results


def run_suite(name: str, seed: int = 0) -> list[CheckResult]:
    if name == "oracles":
        return oracle_checks(seed)
    if name == "gradients":
        return gradient_checks(seed)
    if name == "invariants":
        return invariant_checks(seed)
    if name == "all":
        return oracle_checks(seed) + gradient_checks(seed) + invariant_checks(seed)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITE_NAMES}")
