#!/usr/bin/env python3
"""
Командная строка spatialgen: одна точка входа для всех модулей toolkit'а.

Коды выхода: 0: успех, 1: доменная ошибка, 2: ошибка использования.
Каждая команда пишет manifest.json (RunConfig) рядом со своими результатами.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click
import numpy as np
import structlog
import torch
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from core.backends import BackendFactory, BackendType, source_images_for
from core.camera import pano_split, pano_to_persp
from core.config import PACKAGE_VERSION, RunConfig, SpatialGenConfig, TrajectoryParams, load_config
from core.curation import curate
from core.errors import FormatError, InvalidInputError, SpatialGenError
from core.formats import (
    read_color_png,
    read_ply,
    write_color_png,
    write_depth_png,
    write_log_csv,
    write_metrics_csv,
    write_ply,
    write_scm,
    write_semantic_png,
    write_summary_json,
)
from core.fusion import fuse
from core.layout import filter_objects, load_layout, save_layout
from core.logging_setup import configure_logging
from core.metrics import chamfer, psnr, ssim
from core.parallel import set_threads
from core.pipeline import plan_iterations, run_sync
from core.raster import depth_to_scm, rasterize_layout
from core.rng import torch_generator
from core.synth import Difficulty, SynthScene, gen_scene, render_gt
from core.trajectory import Trajectory, TrajectoryPattern, gen_trajectory
from core.warp import GlobalPointCloud, insert_scm
from models.checkpoint import load_codec, load_denoiser, save_models
from models.codec import SceneNormalization, scm_tensor
from models.training import (
    CODEC_LOG_HEADER,
    DENOISER_LOG_HEADER,
    build_batch,
    build_codec,
    decode_views,
    latent_layout_for,
    prepare_scene,
    reconstruction_error,
    sample,
    train_codec,
    train_denoiser,
)

logger = structlog.get_logger(__name__)


class SpatialGenGroup(click.Group):
    """Группа команд, переводящая доменные ошибки в exit code 1."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            try:
                return super().invoke(ctx)
            except OSError as exc:
                raise FormatError(exc.strerror or str(exc), str(exc.filename or "")) from exc
        except SpatialGenError as exc:
            if (ctx.obj or {}).get("json_errors"):
                click.echo(json.dumps(exc.to_dict(), sort_keys=True), err=True)
            else:
                click.echo(f"error: {exc.message}", err=True)
            logger.debug("cli.failed", code=exc.code)
            ctx.exit(1)


def _settings(ctx: click.Context) -> SpatialGenConfig:
    return ctx.obj["config"]


def _manifest(ctx: click.Context, location: Path, params: Dict[str, Any], seeds: Dict[str, int], outputs: Sequence[Path]) -> Path:
    """manifest.json в каталоге результата; для файлового результата: <имя>.manifest.json рядом."""
    config = RunConfig(
        command=ctx.command_path.split(" ", 1)[-1],
        params={k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        seeds=seeds,
        threads=ctx.obj["threads"],
        version=PACKAGE_VERSION,
        outputs=[str(p) for p in outputs],
    )
    if location.suffix:
        return config.write(location.parent, f"{location.stem}.manifest.json")
    return config.write(location)


def _read_text(path: Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_scene(path: Path) -> SynthScene:
    return SynthScene.from_layout(load_layout(_read_text(path)))


def _scene_files(path: Path) -> List[Path]:
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    files = [f for f in files if not f.name.endswith("manifest.json")]
    if not files:
        raise InvalidInputError(f"no scene documents under {path}")
    return files


def _scene_trajectory(scene: SynthScene, count: int, size: int, seed: int, pattern: str) -> Trajectory:
    params = TrajectoryParams(count=count, image_size=(size, size), seed=seed)
    return gen_trajectory(scene.layout, TrajectoryPattern(pattern), params)


def _write_view(directory: Path, view_id: int, maps, palette=None) -> List[Path]:
    stem = directory / f"view_{view_id:03d}"
    written = []
    if maps.color is not None:
        write_color_png(Path(f"{stem}_color.png"), maps.color)
        written.append(Path(f"{stem}_color.png"))
    write_semantic_png(Path(f"{stem}_semantic.png"), maps.semantic, palette)
    write_depth_png(Path(f"{stem}_depth.png"), maps.depth)
    write_scm(Path(f"{stem}.scm"), maps.scm)
    return written + [Path(f"{stem}_semantic.png"), Path(f"{stem}_depth.png"), Path(f"{stem}.scm")]


@click.group(cls=SpatialGenGroup)
@click.option("--threads", type=click.IntRange(min=1), envvar="SPATIALGEN_THREADS", default=None, help="Лимит потоков")
@click.option("--json-errors", is_flag=True, help="Ошибки в виде JSON в stderr")
@click.option("--log-level", default="WARNING", show_default=True)
@click.option("--log-json", is_flag=True, help="JSON-рендер логов")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None)
@click.version_option(PACKAGE_VERSION, prog_name="spatialgen")
@click.pass_context
def cli(ctx: click.Context, threads, json_errors, log_level, log_json, config_file):
    """Layout-guided синтез 3D-сцен: геометрия, диффузия, итеративный пайплайн."""
    configure_logging(log_level, log_json)
    ctx.ensure_object(dict)
    ctx.obj["json_errors"] = json_errors
    ctx.obj["threads"] = set_threads(threads)
    ctx.obj["config"] = load_config(config_file)


# --- layout / dataset --------------------------------------------------------


@cli.group()
def layout():
    """Проверка и фильтрация layout-JSON."""


@layout.command("validate")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def layout_validate(ctx, file: Path):
    try:
        scene_layout = load_layout(_read_text(file))
    except SpatialGenError as exc:
        click.echo(f"invalid: {exc.message}")
        ctx.exit(1)
    click.echo(f"valid: {len(scene_layout.rooms)} rooms, {len(scene_layout.boxes)} boxes, {len(scene_layout.arch)} arch quads")


@layout.command("filter")
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
def layout_filter(ctx, file: Path, out: Optional[Path]):
    thresholds = _settings(ctx).curation
    source = load_layout(_read_text(file))
    filtered = filter_objects(source, thresholds.min_edge, thresholds.max_edge)
    text = save_layout(filtered)
    removed = len(source.boxes) - len(filtered.boxes)
    if out is None:
        click.echo(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    _manifest(ctx, out, {"file": file, "min_edge": thresholds.min_edge, "max_edge": thresholds.max_edge}, {}, [out])
    click.echo(f"kept {len(filtered.boxes)} boxes, removed {removed}")


@cli.group()
def dataset():
    """Отбор сцен датасета."""


@dataset.command("curate")
@click.argument("directory", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--panorama-count", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="JSON с решениями")
@click.pass_context
def dataset_curate(ctx, directory: Path, panorama_count: int, out: Optional[Path]):
    """Решение accept/reject для каждого *.json; exit 1, если отклонена хотя бы одна сцена."""
    thresholds = _settings(ctx).curation
    table = Table(title="curation")
    table.add_column("scene")
    table.add_column("decision")
    table.add_column("reasons")
    decisions: Dict[str, Any] = {}
    for path in _scene_files(directory):
        try:
            scene_layout = filter_objects(load_layout(_read_text(path)), thresholds.min_edge, thresholds.max_edge)
            result = curate(scene_layout, panorama_count, thresholds)
            decisions[path.name] = result.to_dict()
        except SpatialGenError as exc:
            decisions[path.name] = {"accepted": False, "reasons": [exc.message]}
        entry = decisions[path.name]
        table.add_row(path.name, "accept" if entry["accepted"] else "reject", "; ".join(entry["reasons"]))
    Console().print(table)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(decisions, indent=2, sort_keys=True), encoding="utf-8")
        _manifest(ctx, out, {"directory": directory, "panorama_count": panorama_count}, {}, [out])
    if not all(entry["accepted"] for entry in decisions.values()):
        ctx.exit(1)


# --- synth / traj / raster / pano --------------------------------------------


@cli.group()
def synth():
    """Процедурные синтетические сцены."""


@synth.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--difficulty", type=click.Choice([d.value for d in Difficulty]), default="sparse", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
def synth_gen(ctx, seed: int, difficulty: str, out: Path):
    scene = gen_scene(seed, Difficulty(difficulty))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(scene.to_json(), encoding="utf-8")
    _manifest(ctx, out, {"difficulty": difficulty}, {"scene": seed}, [out])
    click.echo(f"scene with {len(scene.layout.boxes)} boxes written to {out}")


@cli.group()
def traj():
    """Траектории камер."""


@traj.command("gen")
@click.option("--layout", "layout_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--pattern", type=click.Choice([p.value for p in TrajectoryPattern]), required=True)
@click.option("--count", type=click.IntRange(min=2), default=8, show_default=True)
@click.option("--spacing", type=float, default=None)
@click.option("--clearance", type=float, default=None)
@click.option("--size", type=click.IntRange(min=1), default=None, help="Сторона кадра в пикселях")
@click.option("--fov", type=float, default=None, help="Горизонтальный FOV в градусах")
@click.option("--room", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.pass_context
def traj_gen(ctx, layout_file, pattern, count, spacing, clearance, size, fov, room, seed, out):
    base = _settings(ctx).trajectory
    updates: Dict[str, Any] = {"count": count, "seed": seed}
    if spacing is not None:
        updates["spacing"] = spacing
    if clearance is not None:
        updates["clearance"] = clearance
    if size is not None:
        updates["image_size"] = (size, size)
    if fov is not None:
        updates["fov"] = math.radians(fov)
    params = TrajectoryParams.model_validate({**base.model_dump(), **updates})
    trajectory = gen_trajectory(load_layout(_read_text(layout_file)), TrajectoryPattern(pattern), params, room)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(trajectory.to_json(), encoding="utf-8")
    _manifest(ctx, out, {"layout": layout_file, "pattern": pattern, "room": room, **params.model_dump()}, {"trajectory": seed}, [out])
    click.echo(f"{len(trajectory)} views written to {out}")


@cli.command("raster")
@click.option("--layout", "layout_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--traj", "traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def raster(ctx, layout_file: Path, traj_file: Path, out: Path):
    """Семантика, глубина и SCM layout'а для каждого вида траектории."""
    scene_layout = load_layout(_read_text(layout_file))
    trajectory = Trajectory.from_json(_read_text(traj_file))
    out.mkdir(parents=True, exist_ok=True)
    config = _settings(ctx).raster
    outputs: List[Path] = []
    for idx, view in enumerate(trajectory.views):
        semantic, depth = rasterize_layout(scene_layout, view, config, ctx.obj["threads"])
        stem = out / f"view_{idx:03d}"
        write_semantic_png(Path(f"{stem}_semantic.png"), semantic)
        write_depth_png(Path(f"{stem}_depth.png"), depth)
        write_scm(Path(f"{stem}.scm"), depth_to_scm(depth, view))
        outputs += [Path(f"{stem}_semantic.png"), Path(f"{stem}_depth.png"), Path(f"{stem}.scm")]
    _manifest(ctx, out, {"layout": layout_file, "traj": traj_file, **config.model_dump()}, {}, outputs)
    click.echo(f"{len(trajectory)} views rasterized into {out}")


@cli.command("pano2persp")
@click.option("--in", "input_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--yaw", type=float, default=0.0, show_default=True, help="Градусы")
@click.option("--pitch", type=float, default=0.0, show_default=True, help="Градусы")
@click.option("--fov", type=float, default=90.0, show_default=True, help="Градусы")
@click.option("--size", type=click.IntRange(min=1), default=256, show_default=True)
@click.option("--split", type=click.IntRange(min=1), default=None, help="Разрезать на N кадров по yaw")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def pano2persp(ctx, input_file: Path, yaw: float, pitch: float, fov: float, size: int, split: Optional[int], out: Path):
    """Перспективный кадр (или --split N кадров) из эквиректангулярной панорамы."""
    equirect = read_color_png(input_file)
    params = {"in": input_file, "yaw": yaw, "pitch": pitch, "fov": fov, "size": size, "split": split}
    if split:
        out.mkdir(parents=True, exist_ok=True)
        crops = pano_split(equirect, split, math.radians(fov), size, math.radians(pitch))
        outputs = []
        for k, crop in enumerate(crops):
            path = out / f"persp_{k:02d}.png"
            write_color_png(path, crop)
            outputs.append(path)
        _manifest(ctx, out, params, {}, outputs)
        click.echo(f"{split} views written to {out}")
        return
    image = pano_to_persp(equirect, math.radians(yaw), math.radians(pitch), math.radians(fov), size)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_color_png(out, image)
    _manifest(ctx, out, params, {}, [out])
    click.echo(f"view written to {out}")


# --- codec -------------------------------------------------------------------


def _codec_data(data: Path, views: int, size: int, seed: int, pattern: str):
    scms, masks = [], []
    for path in _scene_files(data):
        scene = _load_scene(path)
        norm = SceneNormalization.from_layout(scene.layout)
        for view in _scene_trajectory(scene, views, size, seed, pattern).views:
            scm = render_gt(scene, view).scm
            scms.append(scm_tensor(scm, norm)[0])
            masks.append(torch.from_numpy(scm.mask))
    return scms, masks


@cli.group()
def codec():
    """SCM-кодек: дообучение декодера и оценка реконструкции."""


@codec.command("train")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True, help="Сцена или каталог сцен")
@click.option("--steps", type=click.IntRange(min=1), default=None)
@click.option("--lambda1", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--views", type=click.IntRange(min=2), default=8, show_default=True)
@click.option("--size", type=click.IntRange(min=4), default=64, show_default=True)
@click.option("--pattern", type=click.Choice([p.value for p in TrajectoryPattern]), default="inward_orbit", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def codec_train(ctx, data, steps, lambda1, seed, views, size, pattern, out):
    updates = {k: v for k, v in {"steps": steps, "lambda1": lambda1, "seed": seed}.items() if v is not None}
    config = _settings(ctx).codec.model_copy(update=updates)
    scms, masks = _codec_data(data, views, size, config.seed, pattern)
    model, log = train_codec(scms, masks, config)
    out.mkdir(parents=True, exist_ok=True)
    save_models(out / "codec.sgck", codec=model)
    write_log_csv(out / "codec_log.csv", CODEC_LOG_HEADER, log)
    _manifest(
        ctx,
        out,
        {"data": data, "views": views, "size": size, "pattern": pattern, **config.model_dump()},
        {"codec": config.seed, "trajectory": config.seed},
        [out / "codec.sgck", out / "codec_log.csv"],
    )
    click.echo(f"codec trained for {config.steps} steps: total loss {log[0][3]:.4f} -> {log[-1][3]:.4f}")


@codec.command("eval")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--views", type=click.IntRange(min=2), default=8, show_default=True)
@click.option("--size", type=click.IntRange(min=4), default=64, show_default=True)
@click.option("--pattern", type=click.Choice([p.value for p in TrajectoryPattern]), default="inward_orbit", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.pass_context
def codec_eval(ctx, data, checkpoint, seed, views, size, pattern, out):
    model = load_codec(checkpoint)
    scms, masks = _codec_data(data, views, size, seed, pattern)
    errors = [reconstruction_error(model, scm, mask) for scm, mask in zip(scms, masks)]
    summary = {"views": len(errors), "mean_error": float(np.mean(errors)), "max_error": float(np.max(errors))}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_summary_json(out / "codec_eval.json", summary)
        _manifest(ctx, out, {"data": data, "checkpoint": checkpoint, "views": views, "size": size}, {"trajectory": seed}, [out / "codec_eval.json"])
    click.echo(f"mean reconstruction error {summary['mean_error']:.5f} (normalized units) over {len(errors)} views")


# --- diffusion ---------------------------------------------------------------


def _diffusion_scenes(ctx, scenes: Path, codec_model, seed: int, pattern: str):
    settings = _settings(ctx)
    latent = latent_layout_for(settings.diffusion, codec_model.config)
    prepared, loaded = [], []
    for path in _scene_files(scenes):
        scene = _load_scene(path)
        trajectory = _scene_trajectory(scene, settings.diffusion.views_total, settings.diffusion.image_size, seed, pattern)
        prepared.append(prepare_scene(scene, trajectory.views, codec_model, latent))
        loaded.append(scene)
    return latent, prepared, loaded


@cli.group()
def diffusion():
    """Многовидовой многомодальный денойзер."""


@diffusion.command("train")
@click.option("--scenes", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--steps", type=click.IntRange(min=1), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--codec", "codec_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--no-layout", is_flag=True, help="Абляция: без условий layout'а")
@click.option("--pattern", type=click.Choice([p.value for p in TrajectoryPattern]), default="inward_orbit", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def diffusion_train(ctx, scenes, steps, seed, codec_file, no_layout, pattern, out):
    settings = _settings(ctx)
    updates: Dict[str, Any] = {"use_layout": not no_layout}
    if steps is not None:
        updates["steps"] = steps
    if seed is not None:
        updates["seed"] = seed
    config = settings.diffusion.model_copy(update=updates)
    codec_model = load_codec(codec_file) if codec_file else build_codec(settings.codec)
    latent, prepared, _ = _diffusion_scenes(ctx, scenes, codec_model, config.seed, pattern)
    model, log = train_denoiser(prepared, config, latent, radius_px=settings.warp.radius_px)
    out.mkdir(parents=True, exist_ok=True)
    save_models(out / "model.sgck", codec=codec_model, denoiser=model)
    write_log_csv(out / "diffusion_log.csv", DENOISER_LOG_HEADER, log)
    _manifest(
        ctx,
        out,
        {"scenes": scenes, "codec": codec_file, "pattern": pattern, **config.model_dump()},
        {"diffusion": config.seed, "trajectory": config.seed},
        [out / "model.sgck", out / "diffusion_log.csv"],
    )
    click.echo(f"denoiser trained for {config.steps} steps: loss {log[0][2]:.4f} -> {log[-1][2]:.4f}")


@diffusion.command("sample")
@click.option("--scenes", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--sources", type=click.Choice(["1", "3", "7"]), default="1", show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=None, help="Шаги DDIM")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--pattern", type=click.Choice([p.value for p in TrajectoryPattern]), default="inward_orbit", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def diffusion_sample(ctx, scenes, checkpoint, sources, steps, seed, pattern, out):
    """Сэмплирует все виды первой сцены; первые M видов: источники."""
    settings = _settings(ctx)
    codec_model = load_codec(checkpoint)
    model = load_denoiser(checkpoint)
    steps = steps or settings.diffusion.sample_steps
    m = int(sources)
    latent, prepared, loaded = _diffusion_scenes(ctx, scenes, codec_model, seed, pattern)
    scene_views = prepared[0]
    batch = build_batch(scene_views, list(range(m)), latent, settings.warp.radius_px, model.config.use_layout)
    latents = sample(model, batch, steps, torch_generator(seed, 41))
    masks = [maps.scm.mask for maps in scene_views.maps]
    decoded = decode_views(latents, codec_model, latent, scene_views.norm, masks)
    out.mkdir(parents=True, exist_ok=True)
    rows, outputs = [], []
    for idx, (color, _, _, _) in enumerate(decoded):
        path = out / f"view_{idx:03d}_color.png"
        write_color_png(path, color)
        outputs.append(path)
        if idx >= m:
            reference = scene_views.maps[idx].color
            rows.append((idx, psnr(color, reference), ssim(color, reference)))
    write_metrics_csv(out / "metrics.csv", rows)
    _manifest(
        ctx,
        out,
        {"scenes": scenes, "checkpoint": checkpoint, "sources": m, "steps": steps, "pattern": pattern},
        {"sample": seed, "trajectory": seed},
        outputs + [out / "metrics.csv"],
    )
    mean_psnr = float(np.mean([r[1] for r in rows])) if rows else float("nan")
    click.echo(f"sampled {len(decoded)} views; mean target PSNR {mean_psnr:.2f} dB")


# --- pipeline / eval ---------------------------------------------------------


def _ground_truth_cloud(scene: SynthScene, views) -> GlobalPointCloud:
    cloud = GlobalPointCloud.empty()
    for idx, view in enumerate(views):
        cloud = insert_scm(cloud, render_gt(scene, view), idx, default_confidence=2.0)
    return cloud


@cli.group()
def pipeline():
    """Итеративная генерация плотных видов."""


@pipeline.command("run")
@click.option("--layout", "layout_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--traj", "traj_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--sources", "--sources-count", "sources", type=click.Choice(["1", "3", "7"]), default=None)
@click.option("--backend", type=click.Choice([b.value for b in BackendType]), default="oracle", show_default=True)
@click.option("--tau", type=float, default=None)
@click.option("--voxel", type=float, default=None)
@click.option("--radius", type=float, default=None, help="Радиус сплэта в пикселях")
@click.option("--batch-size", type=click.IntRange(min=1), default=None)
@click.option("--noise", type=float, default=None, help="σ шума глубины оракула, м")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def pipeline_run(ctx, layout_file, traj_file, sources, backend, tau, voxel, radius, batch_size, noise, checkpoint, seed, out):
    """Источники: ground-truth рендеры первых M видов синтетической сцены."""
    base = _settings(ctx).pipeline
    updates = {
        "sources": int(sources) if sources else None,
        "tau": tau,
        "voxel": voxel,
        "radius_px": radius,
        "batch_size": batch_size,
        "oracle_noise": noise,
        "seed": seed,
    }
    config = base.model_validate({**base.model_dump(), **{k: v for k, v in updates.items() if v is not None}})
    scene = _load_scene(layout_file)
    trajectory = Trajectory.from_json(_read_text(traj_file))
    plan = plan_iterations(trajectory, config.sources, config.batch_size)

    if backend == BackendType.TOY.value:
        if checkpoint is None:
            raise InvalidInputError("toy backend needs --checkpoint")
        generator = BackendFactory.create(
            BackendType.TOY,
            codec=load_codec(checkpoint),
            denoiser=load_denoiser(checkpoint),
            sample_steps=_settings(ctx).diffusion.sample_steps,
            seed=config.seed,
        )
    else:
        generator = BackendFactory.create(
            BackendType.ORACLE,
            scene=scene,
            noise=config.oracle_noise,
            confidence=config.oracle_confidence,
            seed=config.seed,
        )

    source_views = [trajectory.views[idx] for idx in plan.sources]
    state = run_sync(
        plan,
        trajectory,
        scene.layout,
        source_images_for(scene, source_views),
        generator,
        tau=config.tau,
        radius_px=config.radius_px,
        checkpoint_dir=out / "checkpoints",
    )

    views_dir = out / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    outputs: List[Path] = []
    rows = []
    for idx in plan.order():
        maps = state.outputs[idx]
        outputs += _write_view(views_dir, idx, maps)
        if idx in plan.targets():
            reference = render_gt(scene, trajectory.views[idx]).color
            rows.append((idx, psnr(maps.color, reference), ssim(maps.color, reference)))
    fused = fuse(state.cloud, config.voxel)
    write_ply(out / "cloud.ply", fused.cloud)
    write_metrics_csv(out / "metrics.csv", rows)
    reference_cloud = _ground_truth_cloud(scene, [trajectory.views[idx] for idx in plan.order()])
    summary = {
        "backend": backend,
        "iterations": plan.iterations,
        "points": len(state.cloud),
        "fused_points": len(fused.cloud),
        "chamfer": chamfer(fused.cloud, reference_cloud, seed=config.seed),
        "mean_psnr": float(np.mean([r[1] for r in rows])) if rows else float("nan"),
        "mean_ssim": float(np.mean([r[2] for r in rows])) if rows else float("nan"),
    }
    write_summary_json(out / "summary.json", summary)
    (out / "run_state.json").write_text(json.dumps(state.manifest, indent=2, sort_keys=True), encoding="utf-8")
    outputs += [out / "cloud.ply", out / "metrics.csv", out / "summary.json", out / "run_state.json"]
    _manifest(
        ctx,
        out,
        {"layout": layout_file, "traj": traj_file, "backend": backend, "checkpoint": checkpoint, "plan": plan.to_dict(), **config.model_dump()},
        {"pipeline": config.seed},
        outputs,
    )

    table = Table(title="pipeline")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key, value in summary.items():
        table.add_row(key, str(value))
    Console().print(table)


@cli.command("eval")
@click.option("--generated", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--reference", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.pass_context
def evaluate(ctx, generated: Path, reference: Path, seed: int, out: Path):
    """PSNR/SSIM по одноимённым *_color.png и Chamfer по cloud.ply (если есть в обоих каталогах)."""
    rows = []
    for path in sorted(generated.rglob("*_color.png")):
        match = reference / path.relative_to(generated)
        if not match.exists():
            logger.warning("eval.missing_reference", view=str(path.relative_to(generated)))
            continue
        image, target = read_color_png(path), read_color_png(match)
        rows.append((str(path.relative_to(generated)), psnr(image, target), ssim(image, target)))
    if not rows:
        raise InvalidInputError("no matching *_color.png pairs between generated and reference")
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", rows)
    summary: Dict[str, Any] = {
        "views": len(rows),
        "mean_psnr": float(np.mean([r[1] for r in rows])),
        "mean_ssim": float(np.mean([r[2] for r in rows])),
    }
    if (generated / "cloud.ply").exists() and (reference / "cloud.ply").exists():
        summary["chamfer"] = chamfer(read_ply(generated / "cloud.ply"), read_ply(reference / "cloud.ply"), seed=seed)
    write_summary_json(out / "summary.json", summary)
    _manifest(ctx, out, {"generated": generated, "reference": reference}, {"chamfer": seed}, [out / "metrics.csv", out / "summary.json"])
    click.echo(f"{len(rows)} views: mean PSNR {summary['mean_psnr']:.2f} dB, mean SSIM {summary['mean_ssim']:.4f}")


def main():
    load_dotenv()
    cli(prog_name="spatialgen")


if __name__ == "__main__":
    sys.exit(main())
