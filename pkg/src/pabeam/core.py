"""Domain types shared by simulation, beamforming, metrics and I/O.

Coordinates are 2-D: ``x`` is lateral, ``z`` is axial (depth below the array
line at ``z = 0``). All lengths are meters, times seconds, frequencies Hz.
Image arrays are stored ``values[iz, ix]`` so rows run axially downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

POSITION_TOL = 1e-12


class PabeamError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(PabeamError, ValueError):
    pass


class FrameValidationError(PabeamError, ValueError):
    """Raised when a frame does not match its geometry; carries the report."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in report.violations))


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArrayGeometry:
    """Collinear, uniformly spaced receive elements on the line ``z = 0``.

    Parameters
    ----------
    element_positions : array_like, shape (M, 2)
        ``(x, z)`` per element, strictly increasing in ``x``.
    pitch : float
        Element spacing in meters.
    aperture_center_x : float
        Lateral center of the aperture.
    """

    element_positions: np.ndarray
    pitch: float
    aperture_center_x: float

    def __post_init__(self):
        pos = np.array(self.element_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise InvalidArgumentError(f"element_positions must be (M, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise InvalidArgumentError("an array needs at least 2 elements")
        if not (self.pitch > 0 and math.isfinite(self.pitch)):
            raise InvalidArgumentError(f"pitch must be positive, got {self.pitch}")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("element positions must be finite")
        if np.any(np.abs(pos[:, 1]) > POSITION_TOL):
            raise InvalidArgumentError("elements must lie on z = 0")
        steps = np.diff(pos[:, 0])
        if np.any(steps <= 0):
            raise InvalidArgumentError("element x positions must be strictly increasing")
        if np.any(np.abs(steps - self.pitch) > POSITION_TOL):
            raise InvalidArgumentError("element spacing must equal pitch")
        object.__setattr__(self, "element_positions", _readonly(pos))
        object.__setattr__(self, "pitch", float(self.pitch))
        object.__setattr__(self, "aperture_center_x", float(self.aperture_center_x))

    @property
    def num_elements(self) -> int:
        return self.element_positions.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.element_positions[:, 0]

    @property
    def aperture_width(self) -> float:
        return float(self.x[-1] - self.x[0])


@dataclass(frozen=True)
class RfFrame:
    """Received traces, one row per channel.

    Finiteness is not enforced here so that :func:`validate_frame` can report
    it; beamforming entry points validate before use.
    """

    samples: np.ndarray
    sampling_frequency_hz: float
    speed_of_sound_m_s: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] < 1:
            raise InvalidArgumentError(f"samples must be (M, N) with N >= 1, got {s.shape}")
        if not self.sampling_frequency_hz > 0:
            raise InvalidArgumentError("sampling_frequency_hz must be positive")
        if not self.speed_of_sound_m_s > 0:
            raise InvalidArgumentError("speed_of_sound_m_s must be positive")
        object.__setattr__(self, "samples", _readonly(s))
        object.__setattr__(self, "sampling_frequency_hz", float(self.sampling_frequency_hz))
        object.__setattr__(self, "speed_of_sound_m_s", float(self.speed_of_sound_m_s))

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Absorber:
    x: float
    z: float
    amplitude: float = 1.0
    radius_m: float = 0.0

    def __post_init__(self):
        if not self.z > 0:
            raise InvalidArgumentError(f"absorber must lie below the array (z > 0), got z={self.z}")
        if not self.amplitude > 0:
            raise InvalidArgumentError(f"absorber amplitude must be positive, got {self.amplitude}")
        if not self.radius_m >= 0:
            raise InvalidArgumentError(f"absorber radius must be >= 0, got {self.radius_m}")


@dataclass(frozen=True)
class Phantom:
    absorbers: tuple[Absorber, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "absorbers", tuple(self.absorbers))

    def __len__(self) -> int:
        return len(self.absorbers)

    def __add__(self, other: "Phantom") -> "Phantom":
        return Phantom(self.absorbers + other.absorbers)

    def to_list(self) -> list[dict]:
        return [
            {"x": a.x, "z": a.z, "amplitude": a.amplitude, "radius_m": a.radius_m}
            for a in self.absorbers
        ]

    @classmethod
    def from_list(cls, items) -> "Phantom":
        return cls(tuple(Absorber(**item) for item in items))


def _axis_count(lo: float, hi: float, step: float) -> int:
    # guard against (hi - lo) / step landing a hair below an integer
    return int(math.floor((hi - lo) / step + 1e-9)) + 1


@dataclass(frozen=True)
class ImageGrid:
    """Rectangular pixel lattice. Pixel ``(ix, iz)`` sits at ``(x_min + ix*dx, z_min + iz*dz)``."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    dx: float
    dz: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise InvalidArgumentError("x_min must be < x_max")
        if not self.z_min < self.z_max:
            raise InvalidArgumentError("z_min must be < z_max")
        if not (self.dx > 0 and self.dz > 0):
            raise InvalidArgumentError("grid steps must be positive")

    @property
    def nx(self) -> int:
        return _axis_count(self.x_min, self.x_max, self.dx)

    @property
    def nz(self) -> int:
        return _axis_count(self.z_min, self.z_max, self.dz)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(nz, nx)``."""
        return (self.nz, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx) * self.dx

    @property
    def z(self) -> np.ndarray:
        return self.z_min + np.arange(self.nz) * self.dz

    def coord(self, ix: int, iz: int) -> tuple[float, float]:
        return (self.x_min + ix * self.dx, self.z_min + iz * self.dz)

    def index(self, x: float, z: float) -> tuple[int, int]:
        """Nearest pixel index to ``(x, z)``; exact inverse of :meth:`coord`."""
        return (int(round((x - self.x_min) / self.dx)), int(round((z - self.z_min) / self.dz)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("x_min", "x_max", "z_min", "z_max", "dx", "dz")}


Stage = Literal["raw", "envelope", "db"]


@dataclass(frozen=True)
class BeamformedImage:
    values: np.ndarray
    stage: Stage = "raw"
    dynamic_range_db: float = 60.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if self.stage not in ("raw", "envelope", "db"):
            raise InvalidArgumentError(f"unknown image stage {self.stage!r}")
        if not self.dynamic_range_db > 0:
            raise InvalidArgumentError("dynamic_range_db must be positive")
        if self.stage == "envelope" and np.any(v < 0):
            raise InvalidArgumentError("envelope image has negative values")
        if self.stage == "db" and v.size and (
            v.max() != 0.0 or v.min() < -self.dynamic_range_db
        ):
            raise InvalidArgumentError("dB image must have max 0 and min >= -dynamic_range_db")
        object.__setattr__(self, "values", _readonly(v))


@dataclass(frozen=True)
class AlignedSamples:
    """Delayed channel samples ``x_i(k - delay_i)`` for one pixel."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("aligned samples must be finite")
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self) -> int:
        return self.values.shape[0]


def build_linear_array(num_elements: int, pitch: float, center_x: float = 0.0) -> ArrayGeometry:
    """Uniform linear array of ``num_elements`` elements centered at ``center_x``."""
    if int(num_elements) != num_elements or num_elements < 2:
        raise InvalidArgumentError(f"num_elements must be an integer >= 2, got {num_elements}")
    if not pitch > 0:
        raise InvalidArgumentError(f"pitch must be positive, got {pitch}")
    num_elements = int(num_elements)
    offsets = (np.arange(num_elements) - (num_elements - 1) / 2.0) * pitch
    pos = np.column_stack([center_x + offsets, np.zeros(num_elements)])
    return ArrayGeometry(pos, pitch, center_x)


def build_grid(x_min: float, x_max: float, z_min: float, z_max: float, dx: float, dz: float) -> ImageGrid:
    return ImageGrid(x_min, x_max, z_min, z_max, dx, dz)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_failed(self) -> None:
        if not self.ok:
            raise FrameValidationError(self)


def validate_frame(frame: RfFrame, geometry: ArrayGeometry) -> ValidationReport:
    """Check ``frame`` against ``geometry``; never raises for data problems."""
    found = []
    if frame.num_channels != geometry.num_elements:
        found.append(Violation(
            "channel-count",
            f"frame has {frame.num_channels} channels, geometry has {geometry.num_elements} elements",
        ))
    bad = ~np.isfinite(frame.samples)
    if bad.any():
        ch, k = np.argwhere(bad)[0]
        found.append(Violation(
            "non-finite",
            f"{int(bad.sum())} non-finite samples, first at channel {ch} sample {k}",
        ))
    return ValidationReport(tuple(found))
