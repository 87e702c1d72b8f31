#!/usr/bin/env python3
"""
Обучение SCM-кодека и денойзера, DDIM-сэмплирование.

Протокол денойзера: 8 видов на пример, M ∈ {1, 3, 7} источников. Источники I
подаются чистыми (t = 0); целевые I, а также S и P всех видов зашумляются.
Варп целевых видов строится из ground-truth SCM источников.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
import torch

from core.camera import CameraView
from core.config import CodecConfig, DiffusionConfig
from core.errors import InvalidInputError, TrainingDivergedError
from core.maps import SceneCoordMap, ViewMaps
from core.palette import CategoryPalette, default_palette
from core.raster import depth_to_scm, rasterize_layout
from core.rng import make_rng, torch_generator
from core.synth import SynthScene, render_gt
from core.warp import GlobalPointCloud, insert_scm, splat
from models.codec import SCMCodec, SceneNormalization, decode, encode, scm_tensor
from models.denoiser import MultiViewDenoiser
from models.latents import (
    LatentLayout,
    grid_to_tokens,
    latent_to_rgb,
    latent_to_semantic,
    normalized_plucker,
    rgb_to_latent,
    semantic_to_latent,
    tokens_to_grid,
    view_condition,
)
from models.losses import loss_grad, loss_rec
from models.schedule import alpha_sigma, ddim_step, schedule, time_grid

logger = structlog.get_logger(__name__)

CODEC_LOG_HEADER = ("step", "loss_rec", "loss_grad", "total")
DENOISER_LOG_HEADER = ("step", "sources", "loss")


def _optimizer(params, lr: float, weight_decay: float, steps: int, decay_at: float, decay_factor: float):
    optimizer = torch.optim.AdamW(params, lr=lr, weight_decay=weight_decay)
    milestone = max(1, int(math.floor(decay_at * steps)))
    scheduler = torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones=[milestone], gamma=decay_factor)
    return optimizer, scheduler


def build_codec(config: CodecConfig) -> SCMCodec:
    """Кодек с детерминированной инициализацией по config.seed и замороженным энкодером."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        codec = SCMCodec(config)
    codec.freeze_encoder()
    return codec


# --- SCM codec ---------------------------------------------------------------


def train_codec(
    scms: Sequence[torch.Tensor],
    masks: Sequence[torch.Tensor],
    config: Optional[CodecConfig] = None,
    codec: Optional[SCMCodec] = None,
    steps: Optional[int] = None,
) -> Tuple[SCMCodec, List[Tuple[int, float, float, float]]]:
    """
    Дообучение декодера на фиксированном микро-батче нормированных SCM (3, H, W).

    Энкодер заморожен и побитово не меняется. NaN/inf в потере → TrainingDivergedError.
    """
    config = config or CodecConfig()
    steps = config.steps if steps is None else steps
    codec = codec or build_codec(config)
    if not codec.encoder_frozen:
        raise InvalidInputError("encoder must be frozen before codec training")
    if not scms:
        raise InvalidInputError("codec training needs at least one SCM")
    target = torch.stack(list(scms))
    mask = torch.stack(list(masks)).bool()
    optimizer, scheduler = _optimizer(
        [p for p in codec.decoder.parameters()],
        config.lr,
        config.weight_decay,
        steps,
        config.lr_decay_at,
        config.lr_decay_factor,
    )
    with torch.no_grad():
        latent = encode(codec, target)

    log: List[Tuple[int, float, float, float]] = []
    codec.train()
    for step in range(steps):
        optimizer.zero_grad()
        p_hat, confidence = decode(codec, latent)
        rec = loss_rec(p_hat, target, confidence, mask, config.alpha)
        grad = loss_grad(p_hat, target)
        total = rec + config.lambda1 * grad
        if not torch.isfinite(total):
            raise TrainingDivergedError(step, f"codec loss became {float(total)}")
        total.backward()
        optimizer.step()
        scheduler.step()
        log.append((step, float(rec), float(grad), float(total)))
        if step % 50 == 0:
            logger.debug("codec.step", step=step, total=float(total))
    codec.eval()
    logger.info("codec.trained", steps=steps, final=log[-1][3] if log else None)
    return codec, log


def reconstruction_error(codec: SCMCodec, scm: torch.Tensor, mask: torch.Tensor) -> float:
    """Средняя евклидова ошибка decode(encode(P)) на валидных пикселях."""
    with torch.no_grad():
        p_hat, _ = decode(codec, encode(codec, scm.unsqueeze(0)))
    error = torch.linalg.vector_norm(p_hat[0] - scm, dim=0)
    return float(error[mask.bool()].mean())


# --- diffusion data ----------------------------------------------------------


@dataclass
class SceneViews:
    """Ground truth и условия всех видов одной сцены, подготовленные для батчей."""

    views: List[CameraView]
    maps: List[ViewMaps]
    layout_semantic: List[np.ndarray]
    layout_scm: List[np.ndarray]
    plucker: List[np.ndarray]
    latents: List[torch.Tensor]
    norm: SceneNormalization

    def __len__(self) -> int:
        return len(self.views)


@dataclass
class ViewBatch:
    """Примеры батча: x0 трёх модальностей (B, V, L, C), условия (B, V, L, Cc), маска источников (B, V)."""

    x0: List[torch.Tensor]
    cond: torch.Tensor
    source_mask: torch.Tensor

    @property
    def sources(self) -> int:
        return int(self.source_mask[0].sum())

    @classmethod
    def stack(cls, batches: Sequence["ViewBatch"]) -> "ViewBatch":
        """Склеивает примеры по оси B; наборы источников у примеров могут различаться."""
        if not batches:
            raise InvalidInputError("nothing to stack")
        return cls(
            x0=[torch.cat(parts) for parts in zip(*(b.x0 for b in batches))],
            cond=torch.cat([b.cond for b in batches]),
            source_mask=torch.cat([b.source_mask for b in batches]),
        )


def layout_condition_maps(scene_layout, view: CameraView, norm: SceneNormalization) -> Tuple[np.ndarray, np.ndarray]:
    semantic, depth = rasterize_layout(scene_layout, view)
    scm = depth_to_scm(depth, view)
    return semantic, np.where(scm.mask[..., None], norm.normalize(scm.points), 0.0)


def prepare_scene(
    scene: SynthScene,
    views: Sequence[CameraView],
    codec: SCMCodec,
    latent_layout: LatentLayout,
) -> SceneViews:
    norm = SceneNormalization.from_layout(scene.layout)
    maps = [render_gt(scene, view) for view in views]
    layout_sem, layout_scm, pluckers = [], [], []
    for view in views:
        sem, scm = layout_condition_maps(scene.layout, view, norm)
        layout_sem.append(sem)
        layout_scm.append(scm)
        pluckers.append(normalized_plucker(view, norm))
    latents = view_latents(maps, codec, latent_layout, norm)
    return SceneViews(list(views), maps, layout_sem, layout_scm, pluckers, latents, norm)


def view_latents(
    maps: Sequence[ViewMaps],
    codec: SCMCodec,
    latent_layout: LatentLayout,
    norm: SceneNormalization,
) -> List[torch.Tensor]:
    """x0 для I, S, P по всем видам: список из трёх (V, L, C)."""
    p = latent_layout.patch
    rgb = torch.stack([torch.from_numpy(m.color.transpose(2, 0, 1).copy()).float() for m in maps])
    sem = torch.stack([torch.from_numpy(m.semantic) for m in maps])
    scm = torch.cat([scm_tensor(m.scm, norm) for m in maps])
    with torch.no_grad():
        p_latent = grid_to_tokens(encode(codec, scm))
    return [rgb_to_latent(rgb, p), semantic_to_latent(sem, latent_layout.classes, p), p_latent]


def source_cloud(scene_views: SceneViews, sources: Sequence[int], confidence: float = 2.0) -> GlobalPointCloud:
    cloud = GlobalPointCloud.empty()
    for idx in sources:
        maps = scene_views.maps[idx]
        cloud = insert_scm(cloud, maps.with_confidence(np.full(maps.shape, confidence)), idx)
    return cloud


def build_batch(
    scene_views: SceneViews,
    sources: Sequence[int],
    latent_layout: LatentLayout,
    radius_px: float = 1.0,
    use_layout: bool = True,
) -> ViewBatch:
    """Батч из одного примера; варпы целевых видов: из ground-truth SCM источников."""
    source_set = set(int(s) for s in sources)
    cloud = source_cloud(scene_views, sorted(source_set))
    cond = []
    for idx, view in enumerate(scene_views.views):
        is_source = idx in source_set
        warp = None if is_source else splat(cloud, view, radius_px)
        cond.append(
            view_condition(
                latent_layout,
                scene_views.layout_semantic[idx],
                scene_views.layout_scm[idx],
                scene_views.plucker[idx],
                is_source,
                warp.color if warp else None,
                warp.coverage if warp else None,
                use_layout,
            )
        )
    mask = torch.tensor([idx in source_set for idx in range(len(scene_views))])
    return ViewBatch(
        x0=[x.unsqueeze(0) for x in scene_views.latents],
        cond=torch.stack(cond).unsqueeze(0),
        source_mask=mask.unsqueeze(0),
    )


def sample_sources(rng: np.random.Generator, views_total: int, source_counts: Sequence[int]) -> List[int]:
    m = int(source_counts[int(rng.integers(0, len(source_counts)))])
    if not 0 < m < views_total:
        raise InvalidInputError(f"cannot pick {m} sources out of {views_total} views")
    return sorted(int(i) for i in rng.choice(views_total, size=m, replace=False))


# --- diffusion training ------------------------------------------------------


def _stream_times(t: torch.Tensor, source_mask: torch.Tensor) -> torch.Tensor:
    """(B,) → (B, V, 3); поток I источников получает t = 0."""
    b, v = source_mask.shape
    times = t[:, None, None].expand(b, v, 3).clone()
    times[..., 0] = torch.where(source_mask, torch.zeros_like(times[..., 0]), times[..., 0])
    return times


def stratified_times(b: int, generator: torch.Generator) -> torch.Tensor:
    """t_i = (i + u_i) / b: по одному t на каждую из b равных долей [0, 1)."""
    return (torch.arange(b, dtype=torch.float32) + torch.rand(b, generator=generator)) / b


def diffusion_loss(
    model: MultiViewDenoiser,
    batch: ViewBatch,
    generator: torch.Generator,
) -> torch.Tensor:
    """Среднеквадратичная ошибка v: целевые I + S, P всех видов."""
    b, v = batch.source_mask.shape
    t = stratified_times(b, generator)
    times = _stream_times(t, batch.source_mask)
    noisy, targets = [], []
    for m, x0 in enumerate(batch.x0):
        eps = torch.randn(x0.shape, generator=generator)
        alpha, sigma = alpha_sigma(times[..., m])
        alpha, sigma = alpha[..., None, None], sigma[..., None, None]
        noisy.append(alpha * x0 + sigma * eps)
        targets.append(alpha * eps - sigma * x0)
    prediction = model(noisy, batch.cond, times)
    target_views = (~batch.source_mask).float()[..., None, None]
    squared = [(p - y) ** 2 for p, y in zip(prediction, targets)]
    numerator = (squared[0] * target_views).sum() + squared[1].sum() + squared[2].sum()
    denominator = (
        target_views.sum() * squared[0].shape[2] * squared[0].shape[3]
        + squared[1].numel()
        + squared[2].numel()
    )
    return numerator / denominator


def train_step(
    model: MultiViewDenoiser,
    optimizer: torch.optim.Optimizer,
    batch: ViewBatch,
    generator: torch.Generator,
    step: int = 0,
) -> float:
    optimizer.zero_grad()
    loss = diffusion_loss(model, batch, generator)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(step, f"diffusion loss became {float(loss)} with {batch.sources} sources")
    loss.backward()
    optimizer.step()
    return float(loss)


def build_denoiser(config: DiffusionConfig, latent_layout: LatentLayout) -> MultiViewDenoiser:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        return MultiViewDenoiser(config, latent_layout)


def train_denoiser(
    scenes: Sequence[SceneViews],
    config: DiffusionConfig,
    latent_layout: LatentLayout,
    model: Optional[MultiViewDenoiser] = None,
    steps: Optional[int] = None,
    radius_px: float = 1.0,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> Tuple[MultiViewDenoiser, List[Tuple[int, int, float]]]:
    """Цикл обучения; порядок сцен и выбор источников детерминированы config.seed."""
    if not scenes:
        raise InvalidInputError("diffusion training needs at least one scene")
    for scene_views in scenes:
        if len(scene_views) != config.views_total:
            raise InvalidInputError(f"every scene must provide {config.views_total} views, got {len(scene_views)}")
    steps = config.steps if steps is None else steps
    model = model or build_denoiser(config, latent_layout)
    optimizer, scheduler = _optimizer(
        model.parameters(), config.lr, config.weight_decay, steps, config.lr_decay_at, config.lr_decay_factor
    )
    rng = make_rng(config.seed, 21)
    generator = torch_generator(config.seed, 22)
    log: List[Tuple[int, int, float]] = []
    model.train()
    for step in range(steps):
        scene_views = scenes[int(rng.integers(0, len(scenes)))]
        examples = []
        for _ in range(config.batch_examples):
            sources = sample_sources(rng, config.views_total, config.source_counts)
            examples.append(build_batch(scene_views, sources, latent_layout, radius_px, config.use_layout))
        batch = ViewBatch.stack(examples)
        loss = train_step(model, optimizer, batch, generator, step)
        scheduler.step()
        log.append((step, batch.sources, loss))
        if on_step:
            on_step(step, loss)
    model.eval()
    logger.info("diffusion.trained", steps=steps, final=log[-1][2] if log else None)
    return model, log


# --- sampling ----------------------------------------------------------------


@torch.no_grad()
def sample(
    model: MultiViewDenoiser,
    batch: ViewBatch,
    steps: int,
    generator: torch.Generator,
) -> List[torch.Tensor]:
    """
    DDIM (eta = 0) по сетке t = 1 → 0. Источники I остаются чистыми условиями;
    возвращаются латенты I (с подставленными источниками), S и P всех видов.
    """
    grid = time_grid(steps)
    source = batch.source_mask[..., None, None]
    x = [torch.randn(x0.shape, generator=generator) for x0 in batch.x0]
    x[0] = torch.where(source, batch.x0[0], x[0])
    for current_t, next_t in zip(grid[:-1], grid[1:]):
        current, target = schedule(current_t), schedule(next_t)
        t = torch.full((batch.source_mask.shape[0],), current_t)
        times = _stream_times(t, batch.source_mask)
        v = model(x, batch.cond, times)
        x = [ddim_step(xm, vm, current, target) for xm, vm in zip(x, v)]
        x[0] = torch.where(source, batch.x0[0], x[0])
    return x


def decode_views(
    latents: Sequence[torch.Tensor],
    codec: SCMCodec,
    latent_layout: LatentLayout,
    norm: SceneNormalization,
    masks: Sequence[np.ndarray],
) -> List[Tuple[np.ndarray, np.ndarray, SceneCoordMap, np.ndarray]]:
    """Латенты одного примера → (цвет, семантика, SCM, уверенность) для каждого вида."""
    p, grid = latent_layout.patch, latent_layout.grid
    rgb = latent_to_rgb(latents[0][0], p, grid)
    sem = latent_to_semantic(latents[1][0], latent_layout.classes, p, grid)
    with torch.no_grad():
        scm, confidence = decode(codec, tokens_to_grid(latents[2][0], grid))
    out = []
    for idx in range(rgb.shape[0]):
        mask = np.asarray(masks[idx], dtype=bool)
        points = norm.denormalize(scm[idx].double().numpy().transpose(1, 2, 0))
        out.append(
            (
                rgb[idx].double().numpy().transpose(1, 2, 0),
                sem[idx].numpy().astype(np.int64),
                SceneCoordMap(points, mask),
                confidence[idx].double().numpy(),
            )
        )
    return out


def latent_layout_for(config: DiffusionConfig, codec_config: CodecConfig, palette: Optional[CategoryPalette] = None) -> LatentLayout:
    palette = palette or default_palette()
    return LatentLayout(config.image_size, config.patch, len(palette), codec_config.latent_channels)


__all__ = [
    "CODEC_LOG_HEADER",
    "DENOISER_LOG_HEADER",
    "SceneViews",
    "ViewBatch",
    "build_batch",
    "build_codec",
    "build_denoiser",
    "decode_views",
    "diffusion_loss",
    "latent_layout_for",
    "prepare_scene",
    "reconstruction_error",
    "sample",
    "sample_sources",
    "stratified_times",
    "train_codec",
    "train_denoiser",
    "train_step",
]
