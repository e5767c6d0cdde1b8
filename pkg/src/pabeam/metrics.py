"""Lateral-profile analysis of dB images: peaks, valley depth, sidelobes, FWHM, image SNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BeamformedImage, ImageGrid, InvalidArgumentError, PabeamError

FWHM_DROP_DB = 6.0


class MetricError(PabeamError):
    pass


class DetectionError(MetricError):
    pass


@dataclass(frozen=True)
class LateralProfile:
    lateral_positions: np.ndarray
    values_db: np.ndarray
    depth: float = 0.0

    def __post_init__(self):
        x = np.array(self.lateral_positions, dtype=np.float64).reshape(-1)
        v = np.array(self.values_db, dtype=np.float64).reshape(-1)
        if x.shape != v.shape:
            raise InvalidArgumentError("positions and values differ in length")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("lateral positions must be strictly increasing")
        object.__setattr__(self, "lateral_positions", x)
        object.__setattr__(self, "values_db", v)

    def __len__(self) -> int:
        return self.values_db.shape[0]

    def index_of(self, position: float) -> int:
        return int(np.argmin(np.abs(self.lateral_positions - position)))


@dataclass(frozen=True)
class Peak:
    index: int
    position: float
    value_db: float


@dataclass(frozen=True)
class ProfileReport:
    peak_positions: tuple[float, ...]
    peak_values_db: tuple[float, ...]
    valley_db: float | None
    sidelobe_level_db: float
    fwhm_m: tuple[float, ...]
    depth: float = 0.0

    def as_rows(self) -> list[tuple[str, float]]:
        """Flat ``(metric, value)`` pairs, lengths in mm."""
        rows = [("depth_mm", self.depth * 1e3)]
        for n, (p, v, w) in enumerate(zip(self.peak_positions, self.peak_values_db, self.fwhm_m), 1):
            rows += [(f"peak{n}_mm", p * 1e3), (f"peak{n}_db", v), (f"fwhm{n}_mm", w * 1e3)]
        if self.valley_db is not None:
            rows.append(("valley_db", self.valley_db))
        rows.append(("sidelobe_level_db", self.sidelobe_level_db))
        rows.append(("mean_fwhm_mm", float(np.mean(self.fwhm_m)) * 1e3))
        return rows


def lateral_profile(image: BeamformedImage, grid: ImageGrid, depth: float) -> LateralProfile:
    """Row of ``image`` nearest ``depth``, shifted so its maximum is 0 dB.

    A depth exactly halfway between rows picks the shallower row.
    """
    if image.stage != "db":
        raise InvalidArgumentError(f"lateral_profile expects a dB image, got {image.stage}")
    if image.values.shape != grid.shape:
        raise InvalidArgumentError(f"image shape {image.values.shape} != grid shape {grid.shape}")
    z = grid.z
    if not z[0] - 1e-12 <= depth <= z[-1] + 1e-12:
        raise InvalidArgumentError(
            f"depth {depth * 1e3:g} mm is outside the grid [{z[0] * 1e3:g}, {z[-1] * 1e3:g}] mm"
        )
    # argmin returns the first, i.e. shallower, row on ties
    row = int(np.argmin(np.round(np.abs(z - depth), 12)))
    vals = image.values[row]
    return LateralProfile(grid.x, vals - vals.max(), float(z[row]))


def _local_maxima(v: np.ndarray) -> np.ndarray:
    return np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])) + 1


def find_peaks(profile: LateralProfile, expected: int = 2) -> list[Peak]:
    """The ``expected`` highest strict local maxima, ordered by position."""
    if expected < 1:
        raise InvalidArgumentError("expected must be >= 1")
    v = profile.values_db
    idx = _local_maxima(v)
    if idx.size < expected:
        raise DetectionError(f"found {idx.size} local maxima, expected {expected}")
    # stable sort on -value keeps smaller positions first among ties
    best = idx[np.argsort(-v[idx], kind="stable")[:expected]]
    return [Peak(int(i), float(profile.lateral_positions[i]), float(v[i])) for i in np.sort(best)]


def valley_depth(profile: LateralProfile, p1: Peak, p2: Peak) -> float:
    """Drop from the lower of two peaks to the deepest point strictly between them."""
    if not p1.index < p2.index:
        raise InvalidArgumentError("p1 must lie left of p2")
    between = profile.values_db[p1.index + 1 : p2.index]
    if between.size == 0:
        raise MetricError("no samples strictly between the peaks")
    return float(min(p1.value_db, p2.value_db) - between.min())


def main_lobe_extents(profile: LateralProfile, peaks) -> list[tuple[int, int]]:
    """Inclusive index span from each peak outward to the first local minimum on each side."""
    v = profile.values_db
    spans = []
    for p in peaks:
        lo = p.index
        while lo > 0 and v[lo - 1] < v[lo]:
            lo -= 1
        hi = p.index
        while hi < v.size - 1 and v[hi + 1] < v[hi]:
            hi += 1
        spans.append((lo, hi))
    return spans


def sidelobe_level(profile: LateralProfile, main_lobe_extents) -> float:
    """Highest value outside the union of main lobes, relative to the profile maximum."""
    v = profile.values_db
    outside = np.ones(v.size, dtype=bool)
    for lo, hi in main_lobe_extents:
        outside[lo : hi + 1] = False
    if not outside.any():
        raise MetricError("main lobes cover the whole profile; sidelobe level undefined")
    return float(v[outside].max() - v.max())


def _crossing(x0, v0, x1, v1, level):
    return x0 + (level - v0) * (x1 - x0) / (v1 - v0)


def fwhm(profile: LateralProfile, peak: Peak, drop_db: float = FWHM_DROP_DB) -> float:
    """Width of the contiguous region around ``peak`` within ``drop_db`` of it."""
    x, v = profile.lateral_positions, profile.values_db
    level = peak.value_db - drop_db
    lo = peak.index
    while lo > 0 and v[lo - 1] >= level:
        lo -= 1
    hi = peak.index
    while hi < v.size - 1 and v[hi + 1] >= level:
        hi += 1
    if lo == 0 or hi == v.size - 1:
        raise MetricError(f"-{drop_db:g} dB crossing not found around peak at {peak.position}")
    left = _crossing(x[lo - 1], v[lo - 1], x[lo], v[lo], level)
    right = _crossing(x[hi], v[hi], x[hi + 1], v[hi + 1], level)
    return float(right - left)


def analyze_profile(profile: LateralProfile, expected: int = 2) -> ProfileReport:
    peaks = find_peaks(profile, expected)
    valley = valley_depth(profile, peaks[0], peaks[1]) if expected >= 2 else None
    return ProfileReport(
        peak_positions=tuple(p.position for p in peaks),
        peak_values_db=tuple(p.value_db for p in peaks),
        valley_db=valley,
        sidelobe_level_db=sidelobe_level(profile, main_lobe_extents(profile, peaks)),
        fwhm_m=tuple(fwhm(profile, p) for p in peaks),
        depth=profile.depth,
    )


@dataclass(frozen=True)
class Region:
    """Axis-aligned box in meters, bounds inclusive."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def mask(self, grid: ImageGrid) -> np.ndarray:
        eps = 1e-12
        zz, xx = np.meshgrid(grid.z, grid.x, indexing="ij")
        return (
            (xx >= self.x_min - eps) & (xx <= self.x_max + eps)
            & (zz >= self.z_min - eps) & (zz <= self.z_max + eps)
        )

    @classmethod
    def around(cls, x: float, z: float, half_width: float) -> "Region":
        return cls(x - half_width, x + half_width, z - half_width, z + half_width)


def image_snr(image: BeamformedImage, grid: ImageGrid, target_regions, background_region: Region) -> float:
    """Peak dB over the targets minus mean dB over the background."""
    if image.stage != "db":
        raise InvalidArgumentError(f"image_snr expects a dB image, got {image.stage}")
    targets = np.zeros(grid.shape, dtype=bool)
    for r in target_regions:
        targets |= r.mask(grid)
    background = background_region.mask(grid)
    if not targets.any() or not background.any():
        raise MetricError("target and background regions must both contain pixels")
    if (targets & background).any():
        raise MetricError("target and background regions overlap")
    return float(image.values[targets].max() - image.values[background].mean())
