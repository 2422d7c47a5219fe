"""End-to-end wiring: parameter initialization, forward pass, train loop.

Scene-derived constants (intensity maps, teacher outputs, label features,
supervision targets) are computed once per scene and reused across steps
and finite-difference probes; only the parameter-dependent graph is
rebuilt each forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import SplatStats, context_and_depth, lift_to_frustum, splat_to_bev
from .config import RunConfig
from .distill import (
    SoftLabelMask,
    blend,
    igfm_loss,
    label_encode,
    ld_loss,
    soft_label_mask,
    swfd_loss,
    swrd_loss,
)
from .fusion import deform_attn_fuse
from .head import (
    HeadOutput,
    REGRESSION_CHANNELS,
    box_regression_targets,
    depth_nll,
    depth_supervision,
    det_loss_from_targets,
    head_forward,
    target_heatmap,
)
from .intensity import camera_intensity, lidar_intensity_bev, radar_intensity_bev
from .objective import LossBreakdown, total_loss, train_step
from .radar import RadarGrid, embed_matrix, encode_radar, grid_from_matrix
from .scene import SceneSample
from .teacher import TeacherBundle, teacher_forward
from .tensor import ParamStore, Tensor


@dataclass
class SceneStatics:
    """Per-scene constants that never depend on trainable parameters."""

    i_radar: Tensor
    i_lidar: Tensor
    teacher: TeacherBundle
    f_label: Tensor
    mask: SoftLabelMask
    radar_cells: np.ndarray
    depth_hits: list
    heat_target: np.ndarray
    reg_cells: list
    reg_targets: np.ndarray
    n_boxes: int


@dataclass
class PipelineState:
    """One forward pass: named tensors, head outputs, loss breakdown."""

    tensors: dict[str, Tensor]
    student_head: HeadOutput
    splat: SplatStats
    components: dict[str, Tensor]
    total: Tensor
    breakdown: LossBreakdown


def _conv_init(rng: np.random.Generator, c_out: int, c_in: int, kh: int, kw: int):
    scale = 1.0 / np.sqrt(c_in * kh * kw)
    return rng.normal(0.0, scale, size=(c_out, c_in, kh, kw)), np.zeros(c_out)


def _affine_init(rng: np.random.Generator, k_in: int, k_out: int):
    return rng.normal(0.0, 1.0 / np.sqrt(k_in), size=(k_in, k_out)), np.zeros(k_out)


def init_params(cfg: RunConfig) -> ParamStore:
    """Student, teacher, and label-encoder parameters in one store.

    Teacher and label entries are frozen. Streams for the student and the
    teacher are spawned separately from the config seed so neither shifts
    the other's draws.
    """
    student_seq, teacher_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(student_seq)
    trng = np.random.default_rng(teacher_seq)
    c = cfg.camera.channels
    c_in = cfg.camera.in_channels
    d = cfg.camera.depth_bins
    k = cfg.n_classes
    p = cfg.fusion.points
    store = ParamStore()

    def add_conv(name, c_out, c_inn, kh, kw, gen=rng, trainable=True, bias_fill=None):
        w, b = _conv_init(gen, c_out, c_inn, kh, kw)
        if bias_fill is not None:
            b = np.full(c_out, bias_fill)
        store.add(f"{name}.w", Tensor(w), trainable)
        store.add(f"{name}.b", Tensor(b), trainable)

    def add_affine(name, k_in, k_out, gen=rng, trainable=True):
        w, b = _affine_init(gen, k_in, k_out)
        store.add(f"{name}.w", Tensor(w), trainable)
        store.add(f"{name}.b", Tensor(b), trainable)

    add_conv("cam.context.conv1", c, c_in, 3, 3)
    add_conv("cam.context.conv2", c, c, 3, 3)
    add_conv("cam.depth.conv1", c, c_in, 3, 3)
    add_conv("cam.depth.conv2", d, c, 3, 3)
    add_conv("cam.intensity.conv", 1, c, 3, 3)
    add_affine("radar.embed.fc1", 5, c)
    add_affine("radar.embed.fc2", c, c)
    for block in ("block1", "block2"):
        add_conv(f"radar.enc.{block}.conv1", c, c, 3, 3)
        add_conv(f"radar.enc.{block}.conv2", c, c, 3, 3)
    add_affine("fuse.offset", c, 2 * p)
    # fractional sampling positions at init keep the interpolation smooth
    store.entry("fuse.offset.b").value.data = rng.uniform(-0.6, 0.6, size=2 * p)
    store.add("fuse.gate.w", Tensor(np.ones((1, 1))), True)
    store.add("fuse.gate.b", Tensor(np.zeros(1)), True)
    beta_w = np.eye(c).reshape(c, c, 1, 1) + rng.normal(0.0, 0.05, size=(c, c, 1, 1))
    store.add("distill.beta.w", Tensor(beta_w), True)
    store.add("distill.beta.b", Tensor(np.zeros(c)), True)
    add_conv("head.heat.conv1", c, c, 3, 3)
    add_conv("head.heat.conv2", k, c, 1, 1, bias_fill=-2.0)
    add_conv("head.box.conv1", c, c, 3, 3)
    add_conv("head.box.conv2", REGRESSION_CHANNELS, c, 1, 1)
    store.add("loss.lambda3", Tensor(np.asarray(cfg.weights.l3)), True)
    store.add("loss.lambda_blend", Tensor(np.asarray(cfg.weights.lambda_blend)), True)

    add_conv("teacher.enc.conv1", c, 2, 3, 3, gen=trng, trainable=False)
    add_conv("teacher.enc.conv2", c, c, 3, 3, gen=trng, trainable=False)
    add_conv("teacher.head.heat.conv1", c, c, 3, 3, gen=trng, trainable=False)
    add_conv("teacher.head.heat.conv2", k, c, 1, 1, gen=trng, trainable=False, bias_fill=-2.0)
    add_conv("teacher.head.box.conv1", c, c, 3, 3, gen=trng, trainable=False)
    add_conv("teacher.head.box.conv2", REGRESSION_CHANNELS, c, 1, 1, gen=trng, trainable=False)
    add_conv("label.conv", c, k + 5, 3, 3, gen=trng, trainable=False)
    return store


class FusionModel:
    """Holds the parameter store and runs the full training pipeline."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.params = init_params(cfg)

    def prepare(self, scene: SceneSample, teacher_features: Tensor | None = None) -> SceneStatics:
        cfg = self.cfg
        if teacher_features is not None:
            features = teacher_features.detach()
            th = head_forward(features, self.params, prefix="teacher.head")
            teacher = TeacherBundle(
                features=features,
                head=HeadOutput(heatmap=th.heatmap.detach(), bbox=th.bbox.detach()),
            )
        else:
            teacher = teacher_forward(scene.lidar, cfg.grid, self.params, cfg.voxel)
        cells, regs = box_regression_targets(scene.boxes, cfg.grid)
        return SceneStatics(
            i_radar=radar_intensity_bev(scene.radar, cfg.coeffs, cfg.grid, cfg.rcs_range),
            i_lidar=lidar_intensity_bev(scene.lidar, cfg.voxel, cfg.grid),
            teacher=teacher,
            f_label=label_encode(scene.boxes, cfg.grid, self.params, cfg.n_classes),
            mask=soft_label_mask(scene.boxes, cfg.grid),
            radar_cells=cfg.grid.cells_of(
                np.array([p.x for p in scene.radar]), np.array([p.y for p in scene.radar])
            )
            if scene.radar
            else np.zeros(0, dtype=np.int64),
            depth_hits=depth_supervision(scene.lidar, cfg.camera),
            heat_target=target_heatmap(scene.boxes, cfg.grid, cfg.n_classes),
            reg_cells=cells,
            reg_targets=regs,
            n_boxes=len(scene.boxes),
        )

    def forward(self, scene: SceneSample, statics: SceneStatics | None = None) -> PipelineState:
        cfg = self.cfg
        if statics is None:
            statics = self.prepare(scene)
        context, depth = context_and_depth(scene.camera_input, self.params, cfg.camera)
        frustum = lift_to_frustum(context, depth)
        f_camera, splat = splat_to_bev(frustum, cfg.camera, cfg.grid)
        embeddings = embed_matrix(scene.radar, self.params, cfg.rcs_range)
        rgrid: RadarGrid = grid_from_matrix(statics.radar_cells, embeddings, cfg.grid)
        f_radar = encode_radar(rgrid, self.params)
        i_cam = camera_intensity(f_camera, self.params)
        f_fused = deform_attn_fuse(
            f_radar, f_camera, i_cam, statics.i_radar, cfg.fusion, self.params
        )
        f_blend, _weights = blend(
            statics.teacher.features, f_radar, statics.i_lidar, self.params["loss.lambda_blend"]
        )
        student_head = head_forward(f_fused, self.params)
        components = {
            "det": det_loss_from_targets(
                student_head,
                statics.heat_target,
                statics.reg_cells,
                statics.reg_targets,
                statics.n_boxes,
            ),
            "depth": depth_nll(depth, statics.depth_hits),
            "igfm": igfm_loss(
                f_radar, statics.teacher.features, f_blend, cfg.weights.alpha_igfm
            ),
            "swfd": swfd_loss(statics.teacher.features, f_fused, statics.i_lidar, self.params),
            "swrd": swrd_loss(statics.teacher.head, student_head, statics.i_lidar),
            "ld": ld_loss(statics.f_label, f_fused, statics.mask),
        }
        total, breakdown = total_loss(components, cfg.weights, self.params["loss.lambda3"])
        tensors = {
            "f_camera": f_camera,
            "f_radar": f_radar,
            "f_fused": f_fused,
            "f_blend": f_blend,
            "f_lidar": statics.teacher.features,
            "f_label": statics.f_label,
            "i_cam": i_cam,
            "i_radar": statics.i_radar,
            "i_lidar": statics.i_lidar,
            "depth": depth,
        }
        return PipelineState(
            tensors=tensors,
            student_head=student_head,
            splat=splat,
            components=components,
            total=total,
            breakdown=breakdown,
        )

    def gradients(self, scene: SceneSample, statics: SceneStatics | None = None):
        """One forward/backward; returns (state, gradients dict)."""
        state = self.forward(scene, statics)
        self.params.zero_grads()
        state.total.backward()
        return state, self.params.gradients()

    def run(
        self,
        scene: SceneSample,
        steps: int,
        lr: float,
        teacher_features: Tensor | None = None,
    ) -> list[LossBreakdown]:
        """Evaluate, record, update, ``steps`` times; record once more at the end.

        The returned list holds ``steps + 1`` records: entry 0 is the
        untouched model, entry ``steps`` reflects all updates.
        """
        statics = self.prepare(scene, teacher_features)
        records: list[LossBreakdown] = []
        for step in range(steps + 1):
            state = self.forward(scene, statics)
            records.append(state.breakdown)
            if step < steps:
                self.params.zero_grads()
                state.total.backward()
                train_step(self.params, self.params.gradients(), lr)
        return records
