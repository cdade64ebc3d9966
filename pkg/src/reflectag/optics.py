"""Virtual detection rig: beam footprint, photoresistor ring, swipe traces.

The rig shines a collimated beam of finite diameter onto the tag while the
tag slides underneath along X.  Each sensor frame mixes the reflected
curve patterns of whichever regions the beam footprint currently covers,
weighted by footprint area fraction.  Raised material on the region
boundaries scatters the beam instead of reflecting it coherently: inside a
disruption radius around each boundary the specular patterns vanish and
only a weak uniform diffuse level remains, which is what lets the decoder
separate adjacent regions.

Sensor model: a photoresistor's resistance falls with illumination,
R(L) = R_dark / (1 + kappa L); a 1 kOhm divider against 3.3 V is read by a
12-bit converter.  R_dark and kappa are simulator conventions (chosen so
dark and fully lit frames span about half the converter range), not
measured device values.

Stochastic channels, all driven by one seed: additive Gaussian noise on
converter counts, and a small alignment jitter of the reflected patterns
(re-drawn once per region crossing) modelling hand/rig wobble during the
swipe.  Both default to realistic small values; set them to zero for exact
reproducibility checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .gcode import TagLayout
from .geometry import (
    DetectionGeometry,
    IlluminationPattern,
    MicrostructureAngle,
    fixed_point,
    sample_pattern,
)

R_DARK_OHMS = 100_000.0  # simulator convention, not a datasheet value
KAPPA = 99.0
R_FIXED_OHMS = 1_000.0
SUPPLY_VOLTS = 3.3
ADC_MAX = 4095

_FOOTPRINT_X_OFFSETS = 9
# 3-point Gauss-Legendre nodes scaled to the footprint radius
_FOOTPRINT_DEPTH_NODES = (-0.7745966692414834, 0.0, 0.7745966692414834)


@dataclass(frozen=True)
class BeamProfile:
    """Collimated beam with a uniform-intensity disk footprint."""

    diameter: float = 5.0

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError("beam diameter must be positive")


@dataclass(frozen=True)
class SensorRing:
    """Sensors spread uniformly on the detection circle around the fixed point.

    aperture_sigma is the spatial spread (mm) of each sensor's response to
    nearby illumination.
    """

    geometry: DetectionGeometry
    aperture_sigma: float = 2.0

    def __post_init__(self):
        if self.aperture_sigma <= 0:
            raise ValueError("aperture sigma must be positive")

    @cached_property
    def positions(self) -> np.ndarray:
        """(N, 2) sensor centres; sensor 0 sits at polar angle 0."""
        n = self.geometry.sensor_count
        ang = 2 * math.pi * np.arange(n) / n
        fp = fixed_point(self.geometry)
        return fp[None, :] + self.geometry.circle_radius * np.stack(
            [np.cos(ang), np.sin(ang)], axis=1
        )

    def rotated_positions(self, rotation: float) -> np.ndarray:
        """Sensor centres rotated about the fixed point by `rotation` radians."""
        if rotation == 0.0:
            return self.positions
        n = self.geometry.sensor_count
        ang = 2 * math.pi * np.arange(n) / n + rotation
        fp = fixed_point(self.geometry)
        return fp[None, :] + self.geometry.circle_radius * np.stack(
            [np.cos(ang), np.sin(ang)], axis=1
        )


@dataclass(frozen=True, eq=False)
class SensorFrame:
    """One quantized voltage snapshot of the whole ring."""

    values: np.ndarray  # (N,) ints in [0, ADC_MAX]
    index: int = 0


@dataclass(frozen=True)
class SwipeScenario:
    """Everything needed to produce a deterministic swipe trace.

    state_angles holds the bead angles of all 2^m codec states so that
    reference frames can be generated from the same scenario.
    """

    layout: TagLayout
    beam: BeamProfile
    ring: SensorRing
    state_angles: tuple[float, ...]
    step: float = 0.5
    noise_sigma: float = 8.0
    jitter_sigma_deg: float = 1.5
    ambient: float = 0.0
    borderline_width: float = 1.0
    disruption_radius: float = 1.5
    diffuse_level: float = 0.05
    seed: int = 0
    pattern_samples: int = 2048

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("swipe step must be positive")
        if self.noise_sigma < 0 or self.jitter_sigma_deg < 0:
            raise ValueError("noise levels must be nonnegative")


def sensor_response(pattern: IlluminationPattern, ring: SensorRing) -> np.ndarray:
    """Relative illumination per sensor from one reflected curve.

    Gaussian falloff of the distance from each sensor centre to the nearest
    pattern sample; requires a densely sampled pattern.
    """
    if len(pattern.samples) < 512:
        raise ValueError("pattern must carry at least 512 samples")
    return _point_set_response(pattern.samples, ring.positions, ring.aperture_sigma)


def _point_set_response(
    points: np.ndarray, sensor_positions: np.ndarray, sigma: float
) -> np.ndarray:
    d2 = ((sensor_positions[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2.min(axis=1) / (2.0 * sigma * sigma))


def beam_footprint_points(
    geom: DetectionGeometry,
    angle: MicrostructureAngle,
    beam: BeamProfile,
    n_samples: int = 2048,
) -> np.ndarray:
    """Union of curve samples swept over the beam footprint.

    The footprint displaces the reflection point across the beam disk:
    offsets along the swipe axis shift the curve in u, offsets along the
    beam's travel direction effectively shift the background-plane distance.
    Both are sampled (9 swipe offsets x 3 depth quadrature nodes), turning
    the ideal curve into the band a real finite spot would paint.
    """
    radius = beam.diameter / 2.0
    x_offsets = np.linspace(-radius, radius, _FOOTPRINT_X_OFFSETS)
    pts = []
    for node in _FOOTPRINT_DEPTH_NODES:
        d_shift = geom.d + node * radius
        shifted = DetectionGeometry(
            geom.alpha, d_shift, geom.circle_radius, geom.sensor_count
        )
        samples = sample_pattern(shifted, angle, n_samples).samples
        for off in x_offsets:
            pts.append(samples + np.array([off, 0.0]))
    return np.concatenate(pts)


def _near_ring(points: np.ndarray, ring: SensorRing) -> np.ndarray:
    """Drop band points too far from the detection circle to matter.

    Points farther than 10 sigma from the circle contribute responses below
    double-precision visibility after quantization; removing them keeps the
    distance computations small.  The full set is returned if the cut would
    empty it.
    """
    fp = fixed_point(ring.geometry)
    r = np.hypot(points[:, 0] - fp[0], points[:, 1] - fp[1])
    margin = max(10.0 * ring.aperture_sigma, 10.0)
    keep = np.abs(r - ring.geometry.circle_radius) <= margin
    return points[keep] if np.any(keep) else points


def swept_response(
    geom: DetectionGeometry,
    angle: MicrostructureAngle,
    beam: BeamProfile,
    ring: SensorRing,
    rotation: float = 0.0,
    n_samples: int = 2048,
) -> np.ndarray:
    """Per-sensor response to the beam-swept band of one bead angle.

    rotation turns the sensor ring about the fixed point (alignment jitter).
    """
    pts = _near_ring(beam_footprint_points(geom, angle, beam, n_samples), ring)
    return _point_set_response(pts, ring.rotated_positions(rotation), ring.aperture_sigma)


def illumination_to_volts(illum: np.ndarray) -> np.ndarray:
    """Divider voltage of each photoresistor at relative illumination in [0, 1]."""
    r_photo = R_DARK_OHMS / (1.0 + KAPPA * np.asarray(illum, dtype=float))
    return SUPPLY_VOLTS * R_FIXED_OHMS / (R_FIXED_OHMS + r_photo)


def frame_from_illumination(
    illum: np.ndarray,
    index: int = 0,
    ambient: float = 0.0,
    noise: np.ndarray | None = None,
) -> SensorFrame:
    """Quantize an illumination vector to a 12-bit sensor frame.

    counts = round(V / 3.3 * 4095) + ambient + noise, clamped to the
    converter range.  Higher illumination never yields a lower count
    (before noise).
    """
    illum = np.asarray(illum, dtype=float)
    if np.any(illum < -1e-12) or np.any(illum > 1.0 + 1e-12):
        raise ValueError("illumination components must lie in [0, 1]")
    counts = np.rint(illumination_to_volts(illum) / SUPPLY_VOLTS * ADC_MAX) + ambient
    if noise is not None:
        counts = np.rint(counts + noise)
    counts = np.clip(counts, 0, ADC_MAX).astype(np.int64)
    return SensorFrame(values=counts, index=index)


class _ResponseBank:
    """Caches annulus-filtered band points and unrotated responses per angle."""

    def __init__(self, scenario: SwipeScenario):
        self.scenario = scenario
        self._points: dict[float, np.ndarray] = {}
        self._resp0: dict[float, np.ndarray] = {}

    def _key(self, delta: float) -> float:
        return round(float(delta), 9)

    def points(self, delta: float) -> np.ndarray:
        key = self._key(delta)
        if key not in self._points:
            sc = self.scenario
            pts = beam_footprint_points(
                sc.ring.geometry,
                MicrostructureAngle.from_delta(key),
                sc.beam,
                sc.pattern_samples,
            )
            self._points[key] = _near_ring(pts, sc.ring)
        return self._points[key]

    def response(self, delta: float, rotation: float = 0.0) -> np.ndarray:
        key = self._key(delta)
        if rotation == 0.0:
            if key not in self._resp0:
                self._resp0[key] = _point_set_response(
                    self.points(key),
                    self.scenario.ring.positions,
                    self.scenario.ring.aperture_sigma,
                )
            return self._resp0[key]
        return _point_set_response(
            self.points(key),
            self.scenario.ring.rotated_positions(rotation),
            self.scenario.ring.aperture_sigma,
        )


def _disk_cdf(t: np.ndarray) -> np.ndarray:
    """Fraction of a unit disk's area left of the vertical line x = t."""
    t = np.clip(t, -1.0, 1.0)
    return 0.5 + (t * np.sqrt(1.0 - t * t) + np.arcsin(t)) / math.pi


def _disk_interval_fraction(center: float, radius: float, lo: float, hi: float) -> float:
    """Area fraction of a disk lying inside the vertical strip [lo, hi]."""
    if hi <= lo:
        return 0.0
    frac = _disk_cdf(np.array((hi - center) / radius)) - _disk_cdf(
        np.array((lo - center) / radius)
    )
    return max(0.0, float(frac))


def beam_positions(scenario: SwipeScenario) -> np.ndarray:
    """Beam centre X positions of the swipe, entering and leaving the tag."""
    radius = scenario.beam.diameter / 2.0
    start, stop = -radius, scenario.layout.width + radius
    n = int(math.floor((stop - start) / scenario.step + 1e-9)) + 1
    return start + scenario.step * np.arange(n)


def simulate_swipe(scenario: SwipeScenario, bank: _ResponseBank | None = None) -> list[SensorFrame]:
    """Trace of sensor frames as the beam crosses the tag.

    Per frame: footprint area fractions over region interiors and boundary
    zones; specular patterns mix linearly by fraction unless the beam
    centre is within the disruption radius of a boundary, where raised
    boundary material scatters the spot and only the diffuse level remains.
    Alignment jitter rotates each region's pattern by an angle drawn once
    per region from the scenario seed.
    """
    sc = scenario
    bank = bank or _ResponseBank(sc)
    layout = sc.layout
    radius = sc.beam.diameter / 2.0
    inner = layout.boundaries[1:-1]
    wb = sc.borderline_width
    rng = np.random.default_rng(sc.seed)
    n_regions = len(layout.regions)
    if sc.jitter_sigma_deg > 0:
        jitters = np.radians(rng.normal(0.0, sc.jitter_sigma_deg, n_regions))
    else:
        jitters = np.zeros(n_regions)

    region_resp = np.stack(
        [
            bank.response(layout.regions[i].angle.delta, float(jitters[i]))
            for i in range(n_regions)
        ]
    )

    centers = beam_positions(sc)
    # Region interiors shrink by half the boundary zone on interior edges.
    lo = layout.boundaries[:-1].copy()
    hi = layout.boundaries[1:].copy()
    lo[1:] += wb / 2
    hi[:-1] -= wb / 2
    region_frac = _disk_cdf((hi[None, :] - centers[:, None]) / radius) - _disk_cdf(
        (lo[None, :] - centers[:, None]) / radius
    )
    border_frac = (
        _disk_cdf((inner[None, :] + wb / 2 - centers[:, None]) / radius)
        - _disk_cdf((inner[None, :] - wb / 2 - centers[:, None]) / radius)
    ).sum(axis=1)
    disrupted = (
        np.abs(centers[:, None] - inner[None, :]) <= sc.disruption_radius
    ).any(axis=1)
    region_frac[disrupted] = 0.0

    illum = np.clip(
        region_frac @ region_resp + border_frac[:, None] * sc.diffuse_level, 0.0, 1.0
    )
    frames = []
    n_sensors = sc.ring.geometry.sensor_count
    for idx in range(len(centers)):
        noise = rng.normal(0.0, sc.noise_sigma, n_sensors) if sc.noise_sigma > 0 else None
        frames.append(
            frame_from_illumination(illum[idx], index=idx, ambient=sc.ambient, noise=noise)
        )
    return frames


def reference_frames(
    scenario: SwipeScenario, bank: _ResponseBank | None = None
) -> tuple[SensorFrame, list[SensorFrame]]:
    """Noiseless calibration frames: the ambient frame and one per state."""
    bank = bank or _ResponseBank(scenario)
    n = scenario.ring.geometry.sensor_count
    ambient_frame = frame_from_illumination(np.zeros(n), ambient=scenario.ambient)
    state_frames = [
        frame_from_illumination(bank.response(delta), index=i, ambient=scenario.ambient)
        for i, delta in enumerate(scenario.state_angles)
    ]
    return ambient_frame, state_frames


def write_trace(frames: list[SensorFrame], path: str | Path) -> None:
    """Trace CSV: header line, then one row of integcounts per frame."""
    n = len(frames[0].values) if frames else 0
    lines = ["frame_index," + ",".join(f"s{i}" for i in range(n))]
    for fr in frames:
        lines.append(str(fr.index) + "," + ",".join(str(int(v)) for v in fr.values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def read_trace(path: str | Path) -> list[SensorFrame]:
    """Read a trace CSV written by write_trace."""
    lines = Path(path).read_text(encoding="ascii").strip().split("\n")
    header = lines[0].split(",")
    if header[0] != "frame_index":
        raise ValueError(f"{path}: not a trace file")
    frames = []
    for line in lines[1:]:
        cells = line.split(",")
        frames.append(
            SensorFrame(values=np.array([int(c) for c in cells[1:]]), index=int(cells[0]))
        )
    return frames


_SCENARIO_KEYS = (
    "alpha_deg",
    "plane_distance_mm",
    "circle_radius_mm",
    "sensor_count",
    "aperture_sigma_mm",
    "beam_diameter_mm",
    "tag_width_mm",
    "tag_height_mm",
    "region_angles_deg",
    "state_angles_deg",
    "swipe_step_mm",
    "noise_sigma_counts",
    "jitter_sigma_deg",
    "ambient_counts",
    "borderline_width_mm",
    "disruption_radius_mm",
    "diffuse_level",
    "seed",
    "pattern_samples",
)


def format_scenario(scenario: SwipeScenario) -> str:
    """Scenario as line-oriented `key = value` text (regions assumed uniform)."""
    geom = scenario.ring.geometry
    angles = ",".join(
        f"{math.degrees(r.angle.delta):.9f}" for r in scenario.layout.regions
    )
    states = ",".join(f"{math.degrees(d):.9f}" for d in scenario.state_angles)
    pairs = [
        ("alpha_deg", f"{math.degrees(geom.alpha):.9f}"),
        ("plane_distance_mm", f"{geom.d:.9f}"),
        ("circle_radius_mm", f"{geom.circle_radius:.9f}"),
        ("sensor_count", str(geom.sensor_count)),
        ("aperture_sigma_mm", f"{scenario.ring.aperture_sigma:.9f}"),
        ("beam_diameter_mm", f"{scenario.beam.diameter:.9f}"),
        ("tag_width_mm", f"{scenario.layout.width:.9f}"),
        ("tag_height_mm", f"{scenario.layout.height:.9f}"),
        ("region_angles_deg", angles),
        ("state_angles_deg", states),
        ("swipe_step_mm", f"{scenario.step:.9f}"),
        ("noise_sigma_counts", f"{scenario.noise_sigma:.9f}"),
        ("jitter_sigma_deg", f"{scenario.jitter_sigma_deg:.9f}"),
        ("ambient_counts", f"{scenario.ambient:.9f}"),
        ("borderline_width_mm", f"{scenario.borderline_width:.9f}"),
        ("disruption_radius_mm", f"{scenario.disruption_radius:.9f}"),
        ("diffuse_level", f"{scenario.diffuse_level:.9f}"),
        ("seed", str(scenario.seed)),
        ("pattern_samples", str(scenario.pattern_samples)),
    ]
    return "\n".join(f"{k} = {v}" for k, v in pairs) + "\n"


def parse_scenario(text: str) -> SwipeScenario:
    """Rebuild a scenario from `key = value` text."""
    values: dict[str, str] = {}
    for raw in text.split("\n"):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad scenario line: {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCENARIO_KEYS:
            raise ValueError(f"unknown scenario key: {key!r}")
        values[key] = val.strip()
    missing = [k for k in _SCENARIO_KEYS if k not in values]
    if missing:
        raise ValueError(f"scenario file missing keys: {missing}")
    geom = DetectionGeometry(
        alpha=math.radians(float(values["alpha_deg"])),
        d=float(values["plane_distance_mm"]),
        circle_radius=float(values["circle_radius_mm"]),
        sensor_count=int(values["sensor_count"]),
    )
    angles = [math.radians(float(a)) for a in values["region_angles_deg"].split(",")]
    states = tuple(math.radians(float(a)) for a in values["state_angles_deg"].split(","))
    layout = TagLayout.from_angles(
        float(values["tag_width_mm"]), float(values["tag_height_mm"]), angles
    )
    return SwipeScenario(
        layout=layout,
        beam=BeamProfile(diameter=float(values["beam_diameter_mm"])),
        ring=SensorRing(geometry=geom, aperture_sigma=float(values["aperture_sigma_mm"])),
        state_angles=states,
        step=float(values["swipe_step_mm"]),
        noise_sigma=float(values["noise_sigma_counts"]),
        jitter_sigma_deg=float(values["jitter_sigma_deg"]),
        ambient=float(values["ambient_counts"]),
        borderline_width=float(values["borderline_width_mm"]),
        disruption_radius=float(values["disruption_radius_mm"]),
        diffuse_level=float(values["diffuse_level"]),
        seed=int(values["seed"]),
        pattern_samples=int(values["pattern_samples"]),
    )


def scenario_with(scenario: SwipeScenario, **changes) -> SwipeScenario:
    """Copy of a scenario with some fields replaced."""
    return replace(scenario, **changes)
