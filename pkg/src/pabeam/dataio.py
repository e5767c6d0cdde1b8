"""On-disk formats.

Dataset ``PREFIX``::

    PREFIX.rf.json   UTF-8 JSON header
    PREFIX.rf.f32    little-endian float32 samples, channel-major

Image ``PREFIX``::

    PREFIX.pgm       binary PGM, axial down / lateral right
    PREFIX.img.json  grid, stage and dynamic range
    PREFIX.img.f32   little-endian float32 values, row-major (iz, ix)

Every writer stages to temporary files and renames them into place only after
all of them are written, so a failed write leaves nothing behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ArrayGeometry, BeamformedImage, ImageGrid, InvalidArgumentError, PabeamError, Phantom, RfFrame
from .forward import NoiseSpec, PulseSpec
from .metrics import LateralProfile, ProfileReport

FORMAT_VERSION = 1
DATASET_HEADER_SUFFIX = ".rf.json"
DATASET_PAYLOAD_SUFFIX = ".rf.f32"
IMAGE_HEADER_SUFFIX = ".img.json"
IMAGE_PAYLOAD_SUFFIX = ".img.f32"
PGM_SUFFIX = ".pgm"

_F32 = np.dtype("<f4")


class DatasetFormatError(PabeamError):
    pass


@dataclass(frozen=True)
class DatasetMetadata:
    pulse: PulseSpec | None = None
    phantom: Phantom | None = None
    noise: NoiseSpec | None = None


def _file_mode() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def _staged_write(files: dict[Path, bytes]) -> None:
    mode = _file_mode()
    staged = []
    try:
        for path, data in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged.append((tmp, path))
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.chmod(tmp, mode)
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def dataset_paths(prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + DATASET_HEADER_SUFFIX), Path(prefix + DATASET_PAYLOAD_SUFFIX)


def write_dataset(prefix, frame: RfFrame, geometry: ArrayGeometry, metadata: DatasetMetadata = DatasetMetadata()) -> None:
    if frame.num_channels != geometry.num_elements:
        raise InvalidArgumentError("frame channel count does not match geometry")
    header = {
        "format_version": FORMAT_VERSION,
        "num_channels": frame.num_channels,
        "num_samples": frame.num_samples,
        "sampling_frequency_hz": frame.sampling_frequency_hz,
        "speed_of_sound_m_s": frame.speed_of_sound_m_s,
        "element_positions": geometry.element_positions.tolist(),
        "pitch": geometry.pitch,
        "aperture_center_x": geometry.aperture_center_x,
        "sample_format": "float32-le",
        "layout": "channel-major",
        "pulse": metadata.pulse.to_dict() if metadata.pulse else None,
        "phantom": metadata.phantom.to_list() if metadata.phantom is not None else None,
        "noise": metadata.noise.to_dict() if metadata.noise else None,
    }
    head, payload = dataset_paths(prefix)
    _staged_write({
        head: _json_bytes(header),
        payload: np.ascontiguousarray(frame.samples, dtype=_F32).tobytes(),
    })


def read_dataset(prefix) -> tuple[RfFrame, ArrayGeometry, DatasetMetadata]:
    head, payload = dataset_paths(prefix)
    try:
        header = json.loads(head.read_text(encoding="utf-8"))
        raw = payload.read_bytes()
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"missing dataset file {exc.filename}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{head}: malformed header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{head}: unknown format_version {version!r}")
    m, n = int(header["num_channels"]), int(header["num_samples"])
    if len(raw) != m * n * _F32.itemsize:
        raise DatasetFormatError(
            f"{payload}: payload is {len(raw)} bytes, header implies {m} x {n} float32 = {m * n * 4}"
        )
    positions = header["element_positions"]
    if len(positions) != m:
        raise DatasetFormatError(f"{head}: {len(positions)} element positions for {m} channels")
    samples = np.frombuffer(raw, dtype=_F32).reshape(m, n).astype(np.float64)
    frame = RfFrame(samples, header["sampling_frequency_hz"], header["speed_of_sound_m_s"])
    geometry = ArrayGeometry(np.array(positions), header["pitch"], header["aperture_center_x"])
    meta = DatasetMetadata(
        pulse=PulseSpec(**header["pulse"]) if header.get("pulse") else None,
        phantom=Phantom.from_list(header["phantom"]) if header.get("phantom") is not None else None,
        noise=NoiseSpec(**header["noise"]) if header.get("noise") else None,
    )
    return frame, geometry, meta


def pgm_bytes(image: BeamformedImage, dynamic_range_db: float | None = None) -> bytes:
    """8-bit grayscale: ``round_half_up(255 (v + DR) / DR)`` clamped to [0, 255]."""
    if image.stage != "db":
        raise InvalidArgumentError(f"PGM output expects a dB image, got {image.stage}")
    dr = image.dynamic_range_db if dynamic_range_db is None else dynamic_range_db
    if not dr > 0:
        raise InvalidArgumentError("dynamic range must be positive")
    v = image.values
    if v.ndim != 2:
        raise InvalidArgumentError("PGM output needs a 2-D image")
    pix = np.clip(np.floor(255.0 * (v + dr) / dr + 0.5), 0, 255).astype(np.uint8)
    height, width = pix.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(image: BeamformedImage, path, dynamic_range_db: float | None = None) -> None:
    _staged_write({Path(path): pgm_bytes(image, dynamic_range_db)})


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, width, height, maxval = data.split(maxsplit=4)[:4]
    if magic != b"P5" or maxval != b"255":
        raise DatasetFormatError(f"{path}: not an 8-bit binary PGM")
    width, height = int(width), int(height)
    return np.frombuffer(data[-width * height:], dtype=np.uint8).reshape(height, width)


def image_paths(prefix) -> tuple[Path, Path, Path]:
    prefix = str(prefix)
    return Path(prefix + PGM_SUFFIX), Path(prefix + IMAGE_HEADER_SUFFIX), Path(prefix + IMAGE_PAYLOAD_SUFFIX)


def write_image(prefix, image: BeamformedImage, grid: ImageGrid, extra: dict | None = None) -> None:
    """PGM plus a float32 dump of the dB values with its grid header."""
    if image.values.shape != grid.shape:
        raise InvalidArgumentError("image shape does not match grid")
    pgm, head, payload = image_paths(prefix)
    header = {
        "format_version": FORMAT_VERSION,
        "grid": grid.to_dict(),
        "shape": list(grid.shape),
        "stage": image.stage,
        "dynamic_range_db": image.dynamic_range_db,
        "sample_format": "float32-le",
        "layout": "row-major (iz, ix)",
        **(extra or {}),
    }
    _staged_write({
        pgm: pgm_bytes(image),
        head: _json_bytes(header),
        payload: np.ascontiguousarray(image.values, dtype=_F32).tobytes(),
    })


def read_image(prefix) -> tuple[BeamformedImage, ImageGrid, dict]:
    _, head, payload = image_paths(prefix)
    try:
        header = json.loads(head.read_text(encoding="utf-8"))
        raw = payload.read_bytes()
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"missing image file {exc.filename}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{head}: unknown format_version {header.get('format_version')!r}")
    grid = ImageGrid(**header["grid"])
    if len(raw) != grid.nx * grid.nz * _F32.itemsize:
        raise DatasetFormatError(f"{payload}: payload size does not match grid {grid.shape}")
    values = np.frombuffer(raw, dtype=_F32).reshape(grid.shape).astype(np.float64)
    if header["stage"] == "db":
        # float32 rounding can step past a clamp floor that is not float32-representable
        values = np.clip(values, -header["dynamic_range_db"], 0.0)
    image = BeamformedImage(values, header["stage"], header["dynamic_range_db"])
    return image, grid, header


def _fmt(v: float) -> str:
    # shortest string that parses back to the same double
    return repr(float(v))


def profile_csv_text(obj) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(obj, LateralProfile):
        w.writerow(["lateral_mm", "amplitude_db"])
        for x, v in zip(obj.lateral_positions, obj.values_db):
            w.writerow([_fmt(x * 1e3), _fmt(v)])
    elif isinstance(obj, ProfileReport):
        w.writerow(["metric", "value"])
        for k, v in obj.as_rows():
            w.writerow([k, _fmt(v)])
    else:
        w.writerow(["metric", "value"])
        for k, v in obj:
            w.writerow([k, _fmt(v)])
    return buf.getvalue()


def write_profile_csv(obj, path) -> None:
    """Write a profile (``lateral_mm,amplitude_db``) or a report / ``(metric, value)`` rows."""
    _staged_write({Path(path): profile_csv_text(obj).encode("utf-8")})


def read_profile_csv(path) -> LateralProfile:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["lateral_mm", "amplitude_db"]:
        raise DatasetFormatError(f"{path}: not a profile CSV")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return LateralProfile(data[:, 0] * 1e-3, data[:, 1])


def read_metric_csv(path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["metric", "value"]:
        raise DatasetFormatError(f"{path}: not a metric CSV")
    return {k: float(v) for k, v in rows[1:]}
