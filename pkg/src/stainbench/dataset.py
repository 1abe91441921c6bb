"""Dataset tooling: manifest ingestion, grayscale variants, ground-truth
mask preparation, and a synthetic drip-droplet generator.

The generator renders one elliptical stain per frame, with the standard
width/length = sin(impact angle) elongation, over a white or textured
background. It returns the exact rendered mask, which makes generated
corpora usable as oracles for the segmentation pipelines.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import pngio
from .imaging import adaptive_threshold, largest_component, median_filter, to_grayscale

log = logging.getLogger(__name__)

ANGLES_DEG = (10, 20, 30, 40, 50, 60, 70, 80, 90)
MANIFEST_HEADER = ("image_id", "image_path", "mask_path", "angle_deg", "colorspace", "split")

DEFAULT_GT_WINDOW = 31
DEFAULT_GT_OFFSET = 10
DEFAULT_GT_MEDIAN_RADIUS = 1


class ManifestError(ValueError):
    """One or more manifest rows failed validation."""


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: Path
    mask_path: Path | None
    angle_deg: int
    colorspace: str  # "RGB" | "gray"
    split: str  # "train" | "test"


@dataclass(frozen=True)
class WhiteBackground:
    pass


@dataclass(frozen=True)
class TexturedBackground:
    """Seeded value noise standing in for fabric-like backgrounds.

    The field mixes a smooth coarse layer with per-pixel grain; amplitude
    is the peak intensity excursion around the base level.
    """

    seed: int
    noise_amplitude: int = 70


Background = Union[WhiteBackground, TexturedBackground]


@dataclass(frozen=True)
class SyntheticSpec:
    angle_deg: int
    rng_seed: int
    background: Background = WhiteBackground()
    droplet_length_px: int = 24
    stain_intensity: int = 60
    width: int = 96
    height: int = 96


def load_manifest(path: str | Path, check_files: bool = True) -> list[ManifestEntry]:
    """Read and validate a manifest CSV.

    Paths resolve relative to the manifest's directory. Every invalid row
    is reported with its row number (header = row 1) in one error.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    problems: list[str] = []
    seen_ids: set[str] = set()

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file, expected header {','.join(MANIFEST_HEADER)}")
        if tuple(header) != MANIFEST_HEADER:
            raise ManifestError(f"{path}: bad header {header!r}, expected {list(MANIFEST_HEADER)}")

        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                problems.append(f"row {row_no}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
                continue
            image_id, image_rel, mask_rel, angle_raw, colorspace, split = (c.strip() for c in row)

            row_problems = []
            if not image_id:
                row_problems.append("empty image_id")
            elif image_id in seen_ids:
                row_problems.append(f"duplicate image_id {image_id!r}")
            try:
                angle = int(angle_raw)
            except ValueError:
                angle = -1
            if angle not in ANGLES_DEG:
                row_problems.append(f"angle_deg {angle_raw!r} not in {list(ANGLES_DEG)}")
            if colorspace not in ("RGB", "gray"):
                row_problems.append(f"colorspace {colorspace!r} must be RGB or gray")
            if split not in ("train", "test"):
                row_problems.append(f"split {split!r} must be train or test")

            image_path = (base / image_rel).resolve()
            mask_path = (base / mask_rel).resolve() if mask_rel else None
            if check_files and not row_problems:
                if not image_path.is_file():
                    row_problems.append(f"missing image file {image_rel}")
                if mask_path is not None and not mask_path.is_file():
                    row_problems.append(f"missing mask file {mask_rel}")
                if not row_problems and mask_path is not None:
                    img_size = pngio.image_size(image_path)
                    mask_size = pngio.image_size(mask_path)
                    if img_size != mask_size:
                        row_problems.append(
                            f"image {img_size[0]}x{img_size[1]} vs mask {mask_size[0]}x{mask_size[1]}"
                        )

            if row_problems:
                problems.append(f"row {row_no}: " + "; ".join(row_problems))
                continue
            seen_ids.add(image_id)
            entries.append(
                ManifestEntry(
                    image_id=image_id,
                    image_path=image_path,
                    mask_path=mask_path,
                    angle_deg=angle,
                    colorspace=colorspace,
                    split=split,
                )
            )

    if problems:
        raise ManifestError(f"{path}: " + " | ".join(problems))
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path: str | Path) -> Path:
    """Write entries as a manifest CSV with paths relative to its directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            writer.writerow(
                [
                    e.image_id,
                    _relativize(e.image_path, base),
                    _relativize(e.mask_path, base) if e.mask_path else "",
                    e.angle_deg,
                    e.colorspace,
                    e.split,
                ]
            )
    return path


def _relativize(p: Path, base: Path) -> str:
    try:
        return Path(p).resolve().relative_to(base).as_posix()
    except ValueError:
        return str(p)


def grayscale_variants(entries: Sequence[ManifestEntry], out_dir: str | Path) -> list[ManifestEntry]:
    """Write grayscale copies of RGB entries and return their new entries.

    Ids gain a "-gray" suffix; masks, angles, and splits carry over
    untouched. Entries already gray are skipped with a warning so a rerun
    cannot duplicate them.
    """
    out_dir = Path(out_dir)
    variants: list[ManifestEntry] = []
    for entry in entries:
        if entry.colorspace != "RGB":
            log.warning("skipping %s: already %s", entry.image_id, entry.colorspace)
            continue
        img = pngio.load_image(entry.image_path)
        gray = to_grayscale(img) if img.ndim == 3 else img
        gray_path = out_dir / f"{entry.image_id}-gray.png"
        pngio.save_image(gray_path, gray)
        variants.append(
            ManifestEntry(
                image_id=f"{entry.image_id}-gray",
                image_path=gray_path.resolve(),
                mask_path=entry.mask_path,
                angle_deg=entry.angle_deg,
                colorspace="gray",
                split=entry.split,
            )
        )
    return variants


def prepare_ground_truth(
    img: np.ndarray,
    window: int = DEFAULT_GT_WINDOW,
    offset: int = DEFAULT_GT_OFFSET,
    median_radius: int = DEFAULT_GT_MEDIAN_RADIUS,
) -> np.ndarray:
    """Derive a ground-truth mask from a frame.

    Pipeline: adaptive local-mean threshold, then a median vote over the
    binary mask to drop speckle, then keep the largest component. Fully
    deterministic; RGB input is converted to grayscale first.
    """
    gray = to_grayscale(img) if img.ndim == 3 else img
    mask = adaptive_threshold(gray, window, offset)
    voted = median_filter(np.where(mask, 255, 0).astype(np.uint8), median_radius) > 127
    return largest_component(voted, connectivity=8)


def _stain_width_px(length_px: int, angle_deg: int) -> int:
    return max(1, int(math.floor(length_px * math.sin(math.radians(angle_deg)) + 0.5)))


def _render_background(spec: SyntheticSpec) -> np.ndarray:
    h, w = spec.height, spec.width
    bg = spec.background
    if isinstance(bg, WhiteBackground):
        return np.full((h, w), 255, dtype=np.uint8)
    if not isinstance(bg, TexturedBackground):
        raise TypeError(f"unknown background {bg!r}")

    rng = np.random.default_rng(bg.seed)
    cell = 8
    coarse = rng.uniform(-1.0, 1.0, (h // cell + 2, w // cell + 2))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    smooth = c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx + c10 * fy * (1 - fx) + c11 * fy * fx
    grain = rng.uniform(-1.0, 1.0, (h, w))
    field = 200.0 + bg.noise_amplitude * (0.5 * smooth + 0.5 * grain)
    return np.clip(np.floor(field + 0.5), 0, 255).astype(np.uint8)


def generate_droplet(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Render one droplet frame plus its exact mask, deterministically.

    The stain is an axis-aligned filled ellipse, length along x and width
    = round(length * sin(angle)) along y, placed at a seeded random
    position with at least a 2 px margin. No anti-aliasing: a pixel is
    stained iff its center lies inside the ellipse. Returns an RGB image
    (equal channels) and the bool mask.
    """
    if spec.angle_deg not in ANGLES_DEG:
        raise ValueError(f"angle_deg {spec.angle_deg} not in {list(ANGLES_DEG)}")
    if not 0 <= spec.stain_intensity <= 255:
        raise ValueError(f"stain_intensity {spec.stain_intensity} outside [0, 255]")
    length = int(spec.droplet_length_px)
    if length < 3:
        raise ValueError(f"droplet_length_px must be >= 3, got {length}")
    width_px = _stain_width_px(length, spec.angle_deg)
    min_w = length + 4
    min_h = width_px + 4
    if spec.width < min_w or spec.height < min_h:
        raise ValueError(
            f"droplet {length}x{width_px} cannot fit in {spec.width}x{spec.height} "
            f"with a 2 px margin; needs at least {min_w}x{min_h}"
        )

    rng = np.random.default_rng(spec.rng_seed)
    x_anchor = int(rng.integers(2, spec.width - length - 1))
    y_anchor = int(rng.integers(2, spec.height - width_px - 1))

    mask = np.zeros((spec.height, spec.width), dtype=bool)
    cx = x_anchor + length / 2.0
    a = length / 2.0
    b = width_px / 2.0
    for j in range(width_px):
        dy = (j + 0.5 - b) / b
        t = 1.0 - dy * dy
        if t <= 0:
            continue
        half = a * math.sqrt(t)
        x_min = math.ceil(cx - half - 0.5)
        x_max = math.floor(cx + half - 0.5)
        if x_max >= x_min:
            mask[y_anchor + j, x_min : x_max + 1] = True

    gray = _render_background(spec)
    gray[mask] = spec.stain_intensity
    img = np.repeat(gray[:, :, None], 3, axis=2)
    return img, mask


def synthetic_image_id(spec: SyntheticSpec) -> str:
    return f"a{spec.angle_deg:02d}-s{spec.rng_seed}"


def write_dataset(specs: Sequence[SyntheticSpec], out_dir: str | Path, split: str = "test") -> Path:
    """Render specs to out_dir/{images,masks} plus a manifest CSV.

    Rerunning with the same specs rewrites byte-identical files. Returns
    the manifest path.
    """
    out_dir = Path(out_dir)
    ids = [synthetic_image_id(s) for s in specs]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise ValueError(f"specs produce duplicate ids: {sorted(dupes)}")

    entries = []
    for spec, image_id in zip(specs, ids):
        img, mask = generate_droplet(spec)
        image_path = out_dir / "images" / f"{image_id}.png"
        mask_path = out_dir / "masks" / f"{image_id}.png"
        pngio.save_image(image_path, img)
        pngio.save_mask(mask_path, mask)
        entries.append(
            ManifestEntry(
                image_id=image_id,
                image_path=image_path.resolve(),
                mask_path=mask_path.resolve(),
                angle_deg=spec.angle_deg,
                colorspace="RGB",
                split=split,
            )
        )
    return write_manifest(entries, out_dir / "manifest.csv")
