"""
Deterministic renderer of tooth-like ordinal stage figures.

Stages 0-5 grow the crown from its cusp tips down to the cervical line;
stages 6-9 grow two roots and close their apices. Geometry is defined on the
unit square and rasterised as filled polygons at 4x supersampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

SUPERSAMPLE = 4

CROWN_INTENSITY = 0.9
ROOT_INTENSITY = 0.7
CANAL_INTENSITY = 0.35

CROWN_WIDTH = 0.46
CROWN_HEIGHT = 0.36
CROWN_TOP = 0.12
CUSP_DEPTH = 0.035
CROWN_TAPER = 0.15

ROOT_LENGTH = 0.42
ROOT_HALF_WIDTH = 0.06
ROOT_OFFSET = 0.11
ROOT_SPLAY = 0.08
CANAL_WIDTH = 0.3

CONTROL_POINTS = 9

# Piecewise-linear root growth (fraction of full length) and apex closure
# (tip width relative to root width) over continuous progress 5..9
_ROOT_PROGRESS = [5.0, 6.0, 7.0, 8.0, 9.0]
_ROOT_LENGTH_FRACTION = [0.0, 0.35, 0.6, 0.85, 1.0]
_TIP_RATIO = [1.0, 0.9, 0.85, 0.7, 0.55]

SEX_OFFSETS = {"A": {"crown_width": 0.0, "splay": 0.0}, "B": {"crown_width": 0.03, "splay": 0.05}}


@dataclass
class MorphParams:
    """Per-sample morphology perturbations; all zero gives the stage prototype"""

    crown_width: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    progress_shift: float = 0.0
    splay: float = 0.0
    root_length: float = 0.0
    contour: np.ndarray = field(default_factory=lambda: np.zeros(CONTROL_POINTS))

    @classmethod
    def draw(cls, rng: np.random.Generator, variability: float, sex: str = "A") -> "MorphParams":
        """Random perturbations of amplitude `variability`, shifted by sex"""
        v = variability
        params = cls(
            crown_width=v * rng.normal(0.0, 0.08),
            dx=v * rng.normal(0.0, 0.03),
            dy=v * rng.normal(0.0, 0.03),
            progress_shift=v * rng.normal(0.0, 0.6),
            splay=v * rng.normal(0.0, 0.06),
            root_length=v * rng.normal(0.0, 0.1),
            contour=v * rng.normal(0.0, 0.01, size=CONTROL_POINTS),
        )
        offsets = SEX_OFFSETS[sex]
        params.crown_width += offsets["crown_width"]
        params.splay += offsets["splay"]
        return params


def stage_progress(stage: int, num_stages: int = 10) -> float:
    """Map a stage index onto the 0..9 developmental scale"""
    return stage * 9.0 / (num_stages - 1)


def crown_height(progress: float) -> float:
    return CROWN_HEIGHT * float(np.clip((progress + 1.0) / 6.0, 0.0, 1.0))


def root_length_fraction(progress: float) -> float:
    return float(np.interp(progress, _ROOT_PROGRESS, _ROOT_LENGTH_FRACTION))


def tip_ratio(progress: float) -> float:
    return float(np.interp(progress, _ROOT_PROGRESS, _TIP_RATIO))


def crown_polygon(progress: float, morph: MorphParams) -> list[tuple[float, float]]:
    width = CROWN_WIDTH * (1.0 + morph.crown_width)
    left = 0.5 + morph.dx - width / 2.0
    top = CROWN_TOP + morph.dy
    height = crown_height(progress)
    bottom = top + CUSP_DEPTH + height
    taper = CROWN_TAPER * width * height / CROWN_HEIGHT

    u = np.linspace(0.0, 1.0, 33)
    jitter = np.interp(u, np.linspace(0.0, 1.0, CONTROL_POINTS), morph.contour)
    # two cusps at u = 0.25 and 0.75
    edge_y = top + CUSP_DEPTH * np.cos(2.0 * np.pi * u) ** 2 + jitter
    edge_y = np.minimum(edge_y, bottom)
    points = [(left + ui * width, yi) for ui, yi in zip(u, edge_y)]
    points.append((left + width - taper, bottom))
    points.append((left + taper, bottom))
    return points


def root_polygons(
    progress: float, morph: MorphParams
) -> list[tuple[list[tuple[float, float]], list[tuple[float, float]]]]:
    """(root outline, canal outline) for each of the two roots; empty before root onset"""
    length = ROOT_LENGTH * root_length_fraction(progress) * (1.0 + morph.root_length)
    if length <= 0.0:
        return []
    top_y = CROWN_TOP + morph.dy + CUSP_DEPTH + crown_height(progress) - 0.01
    ratio = tip_ratio(progress)
    roots = []
    for side in (-1.0, 1.0):
        angle = side * (ROOT_SPLAY + morph.splay)
        direction = np.array([np.sin(angle), np.cos(angle)])
        across = np.array([np.cos(angle), -np.sin(angle)])
        start = np.array([0.5 + morph.dx + side * ROOT_OFFSET, top_y])
        tip = start + direction * length

        def outline(half_top: float, half_tip: float, end: np.ndarray):
            return [
                tuple(start - across * half_top),
                tuple(start + across * half_top),
                tuple(end + across * half_tip),
                tuple(end - across * half_tip),
            ]

        root = outline(ROOT_HALF_WIDTH, ROOT_HALF_WIDTH * ratio, tip)
        canal = outline(
            ROOT_HALF_WIDTH * CANAL_WIDTH,
            ROOT_HALF_WIDTH * CANAL_WIDTH * ratio,
            start + direction * length * 0.92,
        )
        roots.append((root, canal))
    return roots


def _to_pixels(points, size: int) -> list[tuple[float, float]]:
    return [(x * size, y * size) for x, y in points]


def _level(intensity: float) -> int:
    return int(round(intensity * 255))


def render_stage_image(
    stage: int,
    morph: MorphParams,
    image_size: int,
    num_stages: int = 10,
) -> np.ndarray:
    """Render one (image_size, image_size) figure with values in [0, 1]"""
    progress = stage_progress(stage, num_stages) + morph.progress_shift
    big = image_size * SUPERSAMPLE
    canvas = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(canvas)

    for root, canal in root_polygons(progress, morph):
        draw.polygon(_to_pixels(root, big), fill=_level(ROOT_INTENSITY))
        draw.polygon(_to_pixels(canal, big), fill=_level(CANAL_INTENSITY))
    draw.polygon(_to_pixels(crown_polygon(progress, morph), big), fill=_level(CROWN_INTENSITY))

    pixels = np.asarray(canvas, dtype=np.float64) / 255.0
    blocks = pixels.reshape(image_size, SUPERSAMPLE, image_size, SUPERSAMPLE)
    return blocks.mean(axis=(1, 3))


def root_extent(stage: int, morph: MorphParams, num_stages: int = 10) -> float:
    """Geometric root length of the figure, in unit-square units"""
    progress = stage_progress(stage, num_stages) + morph.progress_shift
    return ROOT_LENGTH * root_length_fraction(progress) * (1.0 + morph.root_length)
