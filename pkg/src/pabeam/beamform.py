"""Receive beamforming: delays, sample alignment, DAS / DMAS / two-stage DMAS kernels.

All kernels reduce over the last axis, so the same code serves a single
pixel (shape ``(M,)``) and a block of pixels (shape ``(P, M)``).

The DMAS family relies on one identity. With ``y = sign(a) * sqrt(|a|)``::

    sign(a_i a_j) * sqrt(|a_i a_j|) == y_i * y_j

so the pairwise sum over ``i < j`` is ``((sum y)^2 - sum y^2) / 2`` and the
bracket terms of the expansion, ``b_i = sum_{j>i} y_i y_j``, are ``y_i``
times a suffix sum. Both kernels are therefore O(M) per pixel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .core import (
    AlignedSamples,
    ArrayGeometry,
    BeamformedImage,
    ImageGrid,
    InvalidArgumentError,
    PabeamError,
    RfFrame,
    validate_frame,
)

KERNELS = ("das", "dmas", "mdmas")
METHODS = ("das", "das-cf", "dmas", "dmas-cf", "mdmas", "mdmas-cf")
DEFAULT_DYNAMIC_RANGE_DB = 60.0

# fixed so that output never depends on the worker count
PIXEL_BLOCK = 4096


class DegenerateImageError(PabeamError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    kernel: str = "das"
    cf_weighting: bool = False

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")

    @classmethod
    def parse(cls, name: str) -> "MethodSpec":
        """``"dmas-cf"`` -> ``MethodSpec("dmas", True)``."""
        if name not in METHODS:
            raise InvalidArgumentError(f"unknown method {name!r}; expected one of {METHODS}")
        kernel, _, suffix = name.partition("-")
        return cls(kernel, suffix == "cf")

    @property
    def name(self) -> str:
        return self.kernel + ("-cf" if self.cf_weighting else "")


def _values(a) -> np.ndarray:
    if isinstance(a, AlignedSamples):
        return a.values
    return np.asarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# delays and alignment

def time_of_flight(pixel, element, c: float) -> float:
    """One-way propagation time between a pixel and an element."""
    if not c > 0:
        raise InvalidArgumentError("speed of sound must be positive")
    return math.hypot(pixel[0] - element[0], pixel[1] - element[1]) / c


def _interp_rows(samples: np.ndarray, rows: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``samples[rows, pos]`` at fractional ``pos`` (>= 0).

    Positions past the last sample read as 0.
    """
    n = samples.shape[1]
    k0 = np.floor(pos).astype(np.intp)
    inside = pos <= n - 1
    k0 = np.minimum(k0, n - 1)
    k1 = np.minimum(k0 + 1, n - 1)
    w = pos - k0
    out = (1.0 - w) * samples[rows, k0] + w * samples[rows, k1]
    return np.where(inside, out, 0.0)


def sample_at(frame: RfFrame, channel: int, t: float) -> float:
    """Value of ``channel`` at time ``t`` by linear interpolation; 0 past the trace."""
    if t < 0:
        raise InvalidArgumentError(f"sample time must be >= 0, got {t}")
    pos = np.array([t * frame.sampling_frequency_hz])
    return float(_interp_rows(frame.samples, np.array([channel]), pos)[0])


def _gather_block(samples, fs, c, elem_x, px, pz) -> np.ndarray:
    """Aligned samples for a block of pixels, shape ``(P, M)``."""
    dist = np.hypot(px[:, None] - elem_x[None, :], pz[:, None])
    rows = np.broadcast_to(np.arange(elem_x.shape[0]), dist.shape)
    return _interp_rows(samples, rows, dist / c * fs)


def gather_delayed(frame: RfFrame, geometry: ArrayGeometry, pixel, c: float | None = None) -> AlignedSamples:
    c = frame.speed_of_sound_m_s if c is None else c
    if not c > 0:
        raise InvalidArgumentError("speed of sound must be positive")
    if pixel[1] < 0:
        raise InvalidArgumentError("pixel must lie at z >= 0")
    vals = _gather_block(
        frame.samples, frame.sampling_frequency_hz, c, geometry.x,
        np.array([float(pixel[0])]), np.array([float(pixel[1])]),
    )
    return AlignedSamples(vals[0])


# ---------------------------------------------------------------------------
# kernels

def signed_sqrt(v):
    """``sign(v) * sqrt(|v|)``, elementwise."""
    out = np.sign(v) * np.sqrt(np.abs(v))
    return out if np.ndim(out) else float(out)


def das(a: np.ndarray) -> np.ndarray:
    return np.sum(a, axis=-1)


def coherence(a: np.ndarray) -> np.ndarray:
    m = a.shape[-1]
    coherent = np.square(np.sum(a, axis=-1))
    power = m * np.sum(np.square(a), axis=-1)
    safe = np.where(power > 0, power, 1.0)
    return np.where(power > 0, coherent / safe, 0.0)


def _pair_sum(y: np.ndarray) -> np.ndarray:
    # sum_{i<j} y_i y_j
    s = np.sum(y, axis=-1)
    return 0.5 * (s * s - np.sum(y * y, axis=-1))


def dmas(a: np.ndarray) -> np.ndarray:
    if a.shape[-1] < 2:
        raise InvalidArgumentError("DMAS needs at least 2 channels")
    if a.shape[-1] == 2:
        # lone pair: evaluate directly so the result is exact
        return signed_sqrt(a[..., 0] * a[..., 1])
    return _pair_sum(signed_sqrt(a))


def bracket_terms(a: np.ndarray) -> np.ndarray:
    """``b_i = sum_{j>i} sign(a_i a_j) sqrt|a_i a_j|`` for ``i = 0..M-2``."""
    y = signed_sqrt(a)
    suffix = np.cumsum(y[..., ::-1], axis=-1)[..., ::-1]
    return y[..., :-1] * (suffix[..., 1:])


def mdmas(a: np.ndarray) -> np.ndarray:
    """DMAS applied to the bracket terms of the DMAS expansion."""
    if a.shape[-1] < 3:
        raise InvalidArgumentError("two-stage DMAS needs at least 3 channels")
    return _pair_sum(signed_sqrt(bracket_terms(a)))


_KERNEL_FUNCS = {"das": das, "dmas": dmas, "mdmas": mdmas}


def das_pixel(a) -> float:
    return float(das(_values(a)))


def coherence_factor(a) -> float:
    """``|sum a|^2 / (M sum a^2)``, or 0 for an all-zero input."""
    return float(coherence(_values(a)))


def dmas_pixel(a) -> float:
    return float(dmas(_values(a)))


def mdmas_pixel(a) -> float:
    return float(mdmas(_values(a)))


def apply_method(a: np.ndarray, method: MethodSpec) -> np.ndarray:
    """Kernel output, CF-weighted when requested, for aligned samples ``a``."""
    out = _KERNEL_FUNCS[method.kernel](a)
    if method.cf_weighting:
        out = out * coherence(a)
    return out


# ---------------------------------------------------------------------------
# images

def _check_channels(method: MethodSpec, m: int) -> None:
    need = 3 if method.kernel == "mdmas" else 2 if method.kernel == "dmas" else 1
    if m < need:
        raise InvalidArgumentError(f"{method.kernel} needs at least {need} channels, got {m}")


def beamform_samples(
    samples: np.ndarray,
    elem_x: np.ndarray,
    fs: float,
    c: float,
    grid: ImageGrid,
    method: MethodSpec,
    threads: int = 1,
) -> np.ndarray:
    """Raw beamformed values, shape ``grid.shape``, from bare arrays.

    Channel order matters only to ``mdmas``, whose bracket terms follow the
    order of ``elem_x``.
    """
    _check_channels(method, samples.shape[0])
    zz, xx = np.meshgrid(grid.z, grid.x, indexing="ij")
    px, pz = xx.ravel(), zz.ravel()
    out = np.empty(px.shape[0])
    starts = range(0, px.shape[0], PIXEL_BLOCK)

    def work(start):
        sl = slice(start, start + PIXEL_BLOCK)
        out[sl] = apply_method(_gather_block(samples, fs, c, elem_x, px[sl], pz[sl]), method)

    if threads <= 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return out.reshape(grid.shape)


def beamform_image(
    frame: RfFrame,
    geometry: ArrayGeometry,
    grid: ImageGrid,
    method: MethodSpec | str,
    c: float | None = None,
    threads: int = 1,
) -> BeamformedImage:
    """Beamform every pixel of ``grid``; returns a ``raw`` image ``values[iz, ix]``."""
    if isinstance(method, str):
        method = MethodSpec.parse(method)
    validate_frame(frame, geometry).raise_if_failed()
    c = frame.speed_of_sound_m_s if c is None else c
    if not c > 0:
        raise InvalidArgumentError("speed of sound must be positive")
    if grid.z_min < 0:
        raise InvalidArgumentError("grid must lie at z >= 0")
    vals = beamform_samples(
        frame.samples, geometry.x, frame.sampling_frequency_hz, c, grid, method, threads
    )
    return BeamformedImage(vals, "raw")


def envelope(image: BeamformedImage) -> BeamformedImage:
    """Analytic-signal magnitude along each axial line."""
    if image.stage != "raw":
        raise InvalidArgumentError(f"envelope expects a raw image, got {image.stage}")
    v = image.values
    if v.shape[0] < 2:
        return BeamformedImage(np.abs(v), "envelope")
    return BeamformedImage(np.abs(hilbert(v, axis=0)), "envelope")


def log_compress(image: BeamformedImage, dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB) -> BeamformedImage:
    """``20 log10(v / max)`` clamped to ``[-dynamic_range_db, 0]``."""
    if image.stage != "envelope":
        raise InvalidArgumentError(f"log compression expects an envelope image, got {image.stage}")
    if not dynamic_range_db > 0:
        raise InvalidArgumentError("dynamic_range_db must be positive")
    v = image.values
    peak = v.max() if v.size else 0.0
    if not peak > 0:
        raise DegenerateImageError("cannot log-compress an all-zero envelope")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(v / peak)
    return BeamformedImage(np.clip(db, -dynamic_range_db, 0.0), "db", dynamic_range_db)


def reconstruct(
    frame: RfFrame,
    geometry: ArrayGeometry,
    grid: ImageGrid,
    method: MethodSpec | str,
    dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB,
    threads: int = 1,
) -> BeamformedImage:
    """Beamform, envelope-detect and log-compress in one call."""
    raw = beamform_image(frame, geometry, grid, method, threads=threads)
    return log_compress(envelope(raw), dynamic_range_db)
