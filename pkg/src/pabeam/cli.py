"""Command-line front end: ``pabeam {simulate,beamform,profile,compare}``."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import dataio
from .beamform import DEFAULT_DYNAMIC_RANGE_DB, METHODS, MethodSpec, reconstruct
from .core import ImageGrid, PabeamError, Phantom, build_linear_array
from .forward import (
    DEFAULT_C,
    DEFAULT_F0,
    DEFAULT_FBW,
    DEFAULT_FS,
    DEFAULT_NUM_SAMPLES,
    PRESETS,
    NoiseSpec,
    PulseSpec,
    add_gaussian_noise,
    preset_phantom,
    simulate_frame,
)
from .metrics import analyze_profile, lateral_profile

DEFAULT_PITCH = 20e-3 / 128
PRESET_SNR_DB = {"fig1": 50.0, "fig3": 10.0}
# metrics need the unclamped sidelobe/valley floor, display does not
ANALYSIS_DYNAMIC_RANGE_DB = 200.0
DELTA_METRICS = ("valley_db", "sidelobe_level_db", "mean_fwhm_mm")


class CliError(Exception):
    pass


@dataclass
class ExperimentConfig:
    geometry: dict = field(default_factory=lambda: {"num_elements": 128, "pitch": DEFAULT_PITCH, "center_x": 0.0})
    pulse: dict = field(default_factory=lambda: {"center_frequency_hz": DEFAULT_F0, "fractional_bandwidth": DEFAULT_FBW})
    phantom: str | list = "fig1"
    fs: float = DEFAULT_FS
    c: float = DEFAULT_C
    num_samples: int = DEFAULT_NUM_SAMPLES
    snr_db: float | None = None
    seed: int = 0
    grid: dict = field(default_factory=lambda: {
        "x_min": -10e-3, "x_max": 10e-3, "z_min": 0.0, "z_max": 60e-3, "dx": 0.1e-3, "dz": 0.1e-3,
    })
    methods: list = field(default_factory=lambda: list(METHODS))
    dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise CliError(f"config file {path} must hold a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls()
        for key in ("geometry", "pulse", "grid"):
            if key in data:
                data[key] = {**getattr(cfg, key), **data[key]}
        return replace(cfg, **data)

    def resolve_phantom(self) -> Phantom:
        if isinstance(self.phantom, str):
            return preset_phantom(self.phantom)
        return Phantom.from_list(self.phantom)

    def resolve_grid(self) -> ImageGrid:
        return ImageGrid(**self.grid)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _method_list(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    if not names:
        raise argparse.ArgumentTypeError("empty method list")
    return names


def _base_config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()


def _apply_grid_flags(cfg: ExperimentConfig, args) -> ImageGrid:
    grid = dict(cfg.grid)
    for key in ("x_min", "x_max", "z_min", "z_max", "dx", "dz"):
        val = getattr(args, f"{key}_mm")
        if val is not None:
            grid[key] = val * 1e-3
    return ImageGrid(**grid)


def cmd_simulate(args) -> None:
    cfg = _base_config(args)
    if args.preset:
        cfg.phantom = args.preset
        if cfg.snr_db is None:
            cfg.snr_db = PRESET_SNR_DB[args.preset]
    if args.snr_db is not None:
        cfg.snr_db = args.snr_db
    if args.seed is not None:
        cfg.seed = args.seed
    geometry = build_linear_array(**cfg.geometry)
    pulse = PulseSpec(**cfg.pulse)
    phantom = cfg.resolve_phantom()
    frame = simulate_frame(phantom, geometry, cfg.fs, cfg.c, cfg.num_samples, pulse)
    noise = None
    if cfg.snr_db is not None:
        noise = NoiseSpec(cfg.snr_db, cfg.seed)
        frame = add_gaussian_noise(frame, noise)
    dataio.write_dataset(args.out, frame, geometry, dataio.DatasetMetadata(pulse, phantom, noise))


def cmd_beamform(args) -> None:
    cfg = _base_config(args)
    grid = _apply_grid_flags(cfg, args)
    dr = args.dr if args.dr is not None else cfg.dynamic_range_db
    frame, geometry, _ = dataio.read_dataset(args.data)
    image = reconstruct(frame, geometry, grid, MethodSpec.parse(args.method), dr, threads=args.threads)
    dataio.write_image(args.out, image, grid, {"method": args.method})


def cmd_profile(args) -> None:
    image, grid, _ = dataio.read_image(args.image)
    profile = lateral_profile(image, grid, args.depth_mm * 1e-3)
    dataio.write_profile_csv(profile, args.out)


def compare_rows(reports: dict, methods: list[str], depths_mm: list[float]) -> list[tuple[str, float]]:
    """Flatten per-(method, depth) reports plus pairwise deltas into metric rows."""
    rows = []
    for d in depths_mm:
        for m in methods:
            rows += [(f"{m}@{d:g}mm.{k}", v) for k, v in reports[m, d].as_rows()]
    for d in depths_mm:
        values = {m: dict(reports[m, d].as_rows()) for m in methods}
        for base, other in itertools.combinations(methods, 2):
            for k in DELTA_METRICS:
                rows.append((f"delta.{other}-{base}@{d:g}mm.{k}", values[other][k] - values[base][k]))
    return rows


def cmd_compare(args) -> None:
    cfg = _base_config(args)
    grid = _apply_grid_flags(cfg, args)
    dr = args.dr if args.dr is not None else ANALYSIS_DYNAMIC_RANGE_DB
    methods = args.methods if args.methods is not None else cfg.methods
    if not methods:
        raise CliError("empty methods list")
    try:
        frame, geometry, _ = dataio.read_dataset(args.data)
    except PabeamError as exc:
        raise CliError(f"stage read-dataset failed: {exc}")
    reports = {}
    for m in methods:
        try:
            image = reconstruct(frame, geometry, grid, MethodSpec.parse(m), dr, threads=args.threads)
        except PabeamError as exc:
            raise CliError(f"stage beamform({m}) failed: {exc}")
        for d in args.depths_mm:
            try:
                reports[m, d] = analyze_profile(lateral_profile(image, grid, d * 1e-3), expected=2)
            except PabeamError as exc:
                raise CliError(f"stage metrics({m} @ {d:g} mm) failed: {exc}")
    dataio.write_profile_csv(compare_rows(reports, methods, args.depths_mm), args.report)


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("image grid (mm)")
    for key in ("x-min", "x-max", "z-min", "z-max", "dx", "dz"):
        g.add_argument(f"--{key}-mm", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pabeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize an RF dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON experiment config")
    src.add_argument("--preset", choices=PRESETS)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="dataset path prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("beamform", help="reconstruct a dB image")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--config", default=None)
    p.add_argument("--dr", type=float, default=None, help="display dynamic range in dB")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="image path prefix")
    _add_grid_flags(p)
    p.set_defaults(func=cmd_beamform)

    p = sub.add_parser("profile", help="extract a lateral profile")
    p.add_argument("--image", required=True)
    p.add_argument("--depth-mm", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("compare", help="profile metrics per method and depth")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", type=_method_list, default=None)
    p.add_argument("--depths-mm", type=_float_list, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--dr", type=float, default=None, help="analysis dynamic range in dB")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report", required=True)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, PabeamError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"pabeam {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
