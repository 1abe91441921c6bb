"""Command-line orchestrator.

Subcommands: gen-synth (synthetic droplet corpora), prepare-gt
(ground-truth masks from frames), gray-variants (grayscale copies of an
RGB manifest), and bench (the full backend x mode evaluation matrix with
CSV and markdown reports). Set STAINBENCH_LOG to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import queue
import re
import shlex
import sys
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import pngio
from .bridge import (
    MODE_AUTO,
    MODE_BOX,
    MODE_POINT,
    RECORD_MODES,
    BackendSession,
    ProtocolError,
    evaluate_entry,
    evaluate_entry_broken,
    spawn_backend,
)
from .dataset import (
    ANGLES_DEG,
    ManifestEntry,
    ManifestError,
    SyntheticSpec,
    TexturedBackground,
    WhiteBackground,
    grayscale_variants,
    load_manifest,
    prepare_ground_truth,
    synthetic_image_id,
    write_dataset,
    write_manifest,
    DEFAULT_GT_OFFSET,
    DEFAULT_GT_WINDOW,
)
from .metrics import DEFAULT_TAU, EvalRecord, aggregate_accuracy, comparison_table, timing_stats
from .prompting import AutoGridPrompt, DEFAULT_POINTS_PER_SIDE, Prompt, center_point, full_image_box
from .reports import write_accuracy_table, write_comparison_table, write_records_csv, write_timing_table

log = logging.getLogger(__name__)

_ANGLE_PREFIX = re.compile(r"^a(\d{2})\b")


@dataclass(frozen=True)
class BackendSpec:
    label: str
    command: tuple[str, ...]
    modes: Optional[tuple[str, ...]] = None  # None = run every advertised mode


@dataclass
class RunConfig:
    manifest: Path
    backends: list[BackendSpec] = field(default_factory=list)
    tau: float = DEFAULT_TAU
    points_per_side: int = DEFAULT_POINTS_PER_SIDE
    jobs: int = max(1, os.cpu_count() or 1)
    seed: int = 0
    out: Path = Path("reports")
    request_timeout: float = 120.0

    def validate(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        labels = [b.label for b in self.backends]
        if len(labels) != len(set(labels)):
            raise ValueError(f"backend labels must be unique, got {labels}")


def default_classical_backend() -> BackendSpec:
    return BackendSpec(label="classical", command=(sys.executable, "-m", "stainbench.backends.classical"))


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional TOML config with flags; flags win."""
    data: dict = {}
    if args.config:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)

    backends = []
    for item in data.get("backends", []):
        backends.append(
            BackendSpec(
                label=str(item["label"]),
                command=tuple(str(c) for c in item["command"]),
                modes=tuple(str(m) for m in item["modes"]) if "modes" in item else None,
            )
        )
    for spec in args.backend or []:
        label, _, command = spec.partition("=")
        if not label or not command:
            raise ValueError(f"--backend expects label=command, got {spec!r}")
        backends = [b for b in backends if b.label != label]
        backends.append(BackendSpec(label=label, command=tuple(shlex.split(command))))
    if not backends:
        backends = [default_classical_backend()]

    manifest = args.manifest or data.get("manifest")
    if not manifest:
        raise ValueError("a manifest is required (--manifest or config file)")

    config = RunConfig(manifest=Path(manifest), backends=backends)
    for key in ("tau", "points_per_side", "jobs", "seed", "request_timeout"):
        if key in data:
            setattr(config, key, type(getattr(config, key))(data[key]))
    if "out" in data:
        config.out = Path(data["out"])

    if args.tau is not None:
        config.tau = args.tau
    if args.points_per_side is not None:
        config.points_per_side = args.points_per_side
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = Path(args.out)
    if args.timeout is not None:
        config.request_timeout = args.timeout
    config.validate()
    return config


def _prompt_for_entry(mode: str, entry: ManifestEntry, points_per_side: int, dims_cache: dict) -> Optional[Prompt]:
    if mode not in (MODE_AUTO, MODE_BOX, MODE_POINT):
        return None
    dims = dims_cache.get(entry.image_path)
    if dims is None:
        dims = pngio.image_size(entry.image_path)
        dims_cache[entry.image_path] = dims
    width, height = dims
    if mode == MODE_AUTO:
        return AutoGridPrompt(points_per_side=points_per_side)
    if mode == MODE_BOX:
        return full_image_box(width, height)
    return center_point(width, height)


def _run_pair(
    backend: BackendSpec,
    mode: str,
    entries: Sequence[ManifestEntry],
    prompts: Sequence[Optional[Prompt]],
    config: RunConfig,
) -> tuple[list[EvalRecord], Optional[str]]:
    """Evaluate one (backend, mode) pair over the manifest.

    Returns the records in manifest order plus None when the pair
    completed, or a reason string when it did not (spawn failure or a
    session that died mid-run).
    """
    record_mode = RECORD_MODES.get(mode, mode)
    jobs = max(1, min(config.jobs, len(entries)))

    sessions: list[BackendSession] = []
    spawn_error: Optional[str] = None
    for _ in range(jobs):
        try:
            sessions.append(spawn_backend(backend.command, request_timeout=config.request_timeout))
        except ProtocolError as exc:
            spawn_error = str(exc)
            break
    if not sessions:
        note = f"backend spawn failed: {spawn_error}"
        return [evaluate_entry_broken(e, record_mode, backend.label, note) for e in entries], note
    if spawn_error:
        log.warning("backend %s: only %d of %d sessions spawned (%s)", backend.label, len(sessions), jobs, spawn_error)

    work: queue.Queue[int] = queue.Queue()
    for i in range(len(entries)):
        work.put(i)
    results: list[Optional[EvalRecord]] = [None] * len(entries)

    def worker(session: BackendSession) -> None:
        while True:
            try:
                i = work.get_nowait()
            except queue.Empty:
                return
            if session.broken:
                work.put(i)
                return
            results[i] = evaluate_entry(
                session, entries[i], mode, backend.label, prompts[i], tau=config.tau
            )

    threads = [threading.Thread(target=worker, args=(s,)) for s in sessions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    leftover = []
    while True:
        try:
            leftover.append(work.get_nowait())
        except queue.Empty:
            break
    for i in leftover:
        results[i] = evaluate_entry_broken(entries[i], record_mode, backend.label, "all backend sessions broken")

    broken = [s for s in sessions if s.broken]
    for s in sessions:
        s.close()

    failure: Optional[str] = None
    if leftover:
        failure = f"{len(leftover)} entries unserved: all sessions broke"
    elif broken:
        failure = f"{len(broken)} session(s) broke during the batch"
    records = [r for r in results if r is not None]
    return records, failure


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    entries = load_manifest(config.manifest)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    all_records: list[EvalRecord] = []
    incomplete: list[str] = []
    dims_cache: dict = {}

    for backend in config.backends:
        try:
            with spawn_backend(backend.command, request_timeout=config.request_timeout) as probe:
                advertised = probe.handshake.modes
        except ProtocolError as exc:
            incomplete.append(f"INCOMPLETE: backend {backend.label!r} failed to start: {exc}")
            log.error("backend %s failed to start: %s", backend.label, exc)
            continue

        modes = backend.modes if backend.modes is not None else advertised
        unknown = [m for m in modes if m not in advertised]
        if unknown:
            incomplete.append(f"INCOMPLETE: backend {backend.label!r} does not advertise modes {unknown}")
            modes = tuple(m for m in modes if m in advertised)

        for mode in modes:
            prompts = [_prompt_for_entry(mode, e, config.points_per_side, dims_cache) for e in entries]
            records, failure = _run_pair(backend, mode, entries, prompts, config)
            all_records.extend(records)
            if failure:
                incomplete.append(f"INCOMPLETE: backend {backend.label!r} mode {mode!r}: {failure}")
            log.info("backend %s mode %s: %d records", backend.label, mode, len(records))

    write_records_csv(all_records, out_dir / "records.csv")
    footers = list(incomplete)
    write_accuracy_table(aggregate_accuracy(all_records), out_dir / "table1.md", footers)
    write_timing_table(timing_stats(all_records), all_records, out_dir / "table2.md", footers)
    write_comparison_table(comparison_table(all_records), out_dir / "table4.md", footers)

    print(f"wrote {out_dir / 'records.csv'}")
    for name in ("table1.md", "table2.md", "table4.md"):
        print(f"wrote {out_dir / name}")
    for line in incomplete:
        print(line, file=sys.stderr)
    return 1 if incomplete else 0


# ---------------------------------------------------------------------------
# gen-synth
# ---------------------------------------------------------------------------

def _parse_angles(raw: str) -> list[int]:
    angles = [int(a) for a in raw.split(",") if a.strip()]
    bad = [a for a in angles if a not in ANGLES_DEG]
    if bad:
        raise ValueError(f"angles {bad} not in {list(ANGLES_DEG)}")
    return angles


def build_synth_specs(
    angles: Sequence[int],
    seeds_per_angle: int,
    background: str,
    base_seed: int,
    width: int,
    height: int,
    length: int,
    intensity: int,
    noise_amplitude: int,
) -> list[SyntheticSpec]:
    if not 0 <= seeds_per_angle <= 1000:
        raise ValueError("seeds_per_angle must be in [0, 1000]")
    specs = []
    for angle in angles:
        for k in range(seeds_per_angle):
            seed = base_seed + 1000 * angle + k
            if background == "white":
                bg = WhiteBackground()
            elif background == "textured":
                bg = TexturedBackground(seed=seed + 1, noise_amplitude=noise_amplitude)
            else:
                raise ValueError(f"background must be white or textured, got {background!r}")
            specs.append(
                SyntheticSpec(
                    angle_deg=angle,
                    rng_seed=seed,
                    background=bg,
                    droplet_length_px=length,
                    stain_intensity=intensity,
                    width=width,
                    height=height,
                )
            )
    return specs


def cmd_gen_synth(args: argparse.Namespace) -> int:
    specs = build_synth_specs(
        angles=_parse_angles(args.angles),
        seeds_per_angle=args.seeds_per_angle,
        background=args.background,
        base_seed=args.seed,
        width=args.width,
        height=args.height,
        length=args.length,
        intensity=args.intensity,
        noise_amplitude=args.noise_amplitude,
    )
    out_dir = Path(args.out)
    manifest_path = write_dataset(specs, out_dir)
    if args.gray_variants:
        entries = load_manifest(manifest_path)
        variants = grayscale_variants(entries, out_dir / "images")
        manifest_path = write_manifest(list(entries) + variants, manifest_path)
    print(manifest_path)
    return 0


# ---------------------------------------------------------------------------
# prepare-gt
# ---------------------------------------------------------------------------

def cmd_prepare_gt(args: argparse.Namespace) -> int:
    images_dir = Path(args.images)
    out_dir = Path(args.out)
    files = sorted(images_dir.glob("*.png"))
    if not files:
        log.warning("no PNG files in %s", images_dir)

    entries = []
    failures = []
    for path in files:
        try:
            img = pngio.load_image(path)
            mask = prepare_ground_truth(img, window=args.window, offset=args.offset, median_radius=args.median_radius)
            mask_path = out_dir / "masks" / path.name
            pngio.save_mask(mask_path, mask)
        except Exception as exc:
            failures.append(f"{path.name}: {exc}")
            continue
        match = _ANGLE_PREFIX.match(path.stem)
        angle = int(match.group(1)) if match and int(match.group(1)) in ANGLES_DEG else args.angle
        entries.append(
            ManifestEntry(
                image_id=path.stem,
                image_path=path.resolve(),
                mask_path=mask_path.resolve(),
                angle_deg=angle,
                colorspace="RGB" if pngio.load_image(path).ndim == 3 else "gray",
                split=args.split,
            )
        )

    manifest_path = write_manifest(entries, out_dir / "manifest.csv")
    print(manifest_path)
    if failures:
        print("failed files:", file=sys.stderr)
        for line in failures:
            print(f"  {line}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# gray-variants
# ---------------------------------------------------------------------------

def cmd_gray_variants(args: argparse.Namespace) -> int:
    entries = load_manifest(args.manifest)
    out_dir = Path(args.out)
    variants = grayscale_variants(entries, out_dir / "images")
    manifest_path = write_manifest(list(entries) + variants, out_dir / "manifest.csv")
    print(manifest_path)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stainbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic droplet corpus with exact masks")
    p.add_argument("--out", required=True, help="output directory (images/, masks/, manifest.csv)")
    p.add_argument("--angles", default=",".join(str(a) for a in ANGLES_DEG))
    p.add_argument("--seeds-per-angle", type=int, default=10)
    p.add_argument("--background", choices=["white", "textured"], default="white")
    p.add_argument("--noise-amplitude", type=int, default=70)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--length", type=int, default=24, help="droplet major-axis length in pixels")
    p.add_argument("--intensity", type=int, default=60, help="stain intensity, 0..255")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gray-variants", action="store_true", help="also write grayscale copies of every image")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("prepare-gt", help="derive ground-truth masks for a directory of frames")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=DEFAULT_GT_WINDOW)
    p.add_argument("--offset", type=int, default=DEFAULT_GT_OFFSET)
    p.add_argument("--median-radius", type=int, default=1)
    p.add_argument("--angle", type=int, default=90, choices=ANGLES_DEG,
                   help="angle for files without an aNN- name prefix")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.set_defaults(func=cmd_prepare_gt)

    p = sub.add_parser("gray-variants", help="write grayscale variants of an RGB manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gray_variants)

    p = sub.add_parser("bench", help="run the backend x mode matrix and emit reports")
    p.add_argument("--config", help="TOML run config; flags override file values")
    p.add_argument("--manifest")
    p.add_argument("--backend", action="append", metavar="LABEL=COMMAND",
                   help="backend child command, e.g. classical='python -m stainbench.backends.classical'")
    p.add_argument("--tau", type=float, default=None, help="IoU pass threshold (default 0.5)")
    p.add_argument("--points-per-side", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--timeout", type=float, default=None, help="per-request timeout in seconds")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("STAINBENCH_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
