"""Toolpath emission and parsing for angled-bead tag layouts.

Each encoding region of a tag is infilled with parallel line segments at
its encoded bead angle, spaced one linewidth apart and clipped to the
region rectangle.  Segments become G1 extruding moves; travel between
segments uses G0.  Extrusion is per-move relative (M83): matching the fed
filament volume to the deposited half-elliptic bead cross-section gives

    filament_length = extrusion_factor * h * w / d_f^2 * path_length

with h the layer height, w the linewidth and d_f the filament diameter.
The factor stays below 1 so the molten bead keeps the surface tension
needed for a smooth cylindrical top.

Output text is deterministic: fixed field order (X Y Z F E), fixed five
decimal places, LF line endings.  parse_gcode reads the same dialect back;
unknown lines pass through verbatim.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import MicrostructureAngle


class GcodeParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class EmptyRegionError(ValueError):
    """A region is too narrow to hold even one infill segment."""


class AmbiguousRegionError(ValueError):
    """No extruding segments found inside a region."""


@dataclass(frozen=True)
class PrinterProfile:
    """Printer parameters driving the extrusion math.

    linewidth defaults to the nozzle diameter; z_print defaults to a little
    above one layer height (layer_height + 0.1 mm).
    """

    filament_diameter: float = 1.75
    nozzle_diameter: float = 0.4
    linewidth: float | None = None
    layer_height: float = 0.2
    z_print: float | None = None
    feed_rate: float = 1500.0
    extrusion_factor: float = 0.9

    def __post_init__(self):
        if self.linewidth is None:
            object.__setattr__(self, "linewidth", self.nozzle_diameter)
        if self.z_print is None:
            object.__setattr__(self, "z_print", self.layer_height + 0.1)
        if self.filament_diameter <= 0 or self.linewidth <= 0 or self.layer_height <= 0:
            raise ValueError("filament diameter, linewidth and layer height must be positive")
        if self.z_print < self.layer_height:
            raise ValueError("z_print must be at least the layer height")
        if not 0 < self.extrusion_factor <= 1:
            raise ValueError("extrusion factor must be in (0, 1]")


@dataclass(frozen=True)
class Region:
    """Horizontal interval [x_start, x_end) of the tag and its bead angle."""

    x_start: float
    x_end: float
    angle: MicrostructureAngle

    @property
    def width(self) -> float:
        return self.x_end - self.x_start


@dataclass(frozen=True)
class TagLayout:
    """Tag footprint and its partition into encoding regions along X."""

    width: float
    height: float
    regions: tuple[Region, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("tag dimensions must be positive")
        if not self.regions:
            raise ValueError("layout needs at least one region")
        edge = 0.0
        for r in self.regions:
            if abs(r.x_start - edge) > 1e-9 or r.x_end <= r.x_start:
                raise ValueError("regions must partition [0, width] without gaps")
            edge = r.x_end
        if abs(edge - self.width) > 1e-9:
            raise ValueError("regions must cover the full tag width")

    @classmethod
    def from_angles(
        cls, width: float, height: float, deltas: "list[float] | np.ndarray"
    ) -> "TagLayout":
        """Uniform partition of [0, width] carrying the given bead angles."""
        n = len(deltas)
        bounds = [width * i / n for i in range(n + 1)]
        regions = tuple(
            Region(bounds[i], bounds[i + 1], MicrostructureAngle.from_delta(float(d)))
            for i, d in enumerate(deltas)
        )
        return cls(width=width, height=height, regions=regions)

    @property
    def boundaries(self) -> np.ndarray:
        """All n+1 region edges including the outer tag edges."""
        return np.array([r.x_start for r in self.regions] + [self.width])


def extrusion_length(path_length: float, profile: PrinterProfile) -> float:
    """Filament length fed while extruding a bead of the given path length."""
    if path_length < 0:
        raise ValueError("path length must be nonnegative")
    h, w, df = profile.layer_height, profile.linewidth, profile.filament_diameter
    return profile.extrusion_factor * (h * w / df**2) * path_length


def _clip_line_to_rect(
    point: np.ndarray, direction: np.ndarray, x0: float, x1: float, y0: float, y1: float
) -> tuple[np.ndarray, np.ndarray] | None:
    """Clip the infinite line point + t*direction to a rectangle (slab method)."""
    t_lo, t_hi = -math.inf, math.inf
    for p, d, lo, hi in (
        (point[0], direction[0], x0, x1),
        (point[1], direction[1], y0, y1),
    ):
        if abs(d) < 1e-15:
            if not lo - 1e-12 <= p <= hi + 1e-12:
                return None
            continue
        ta, tb = (lo - p) / d, (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t_lo, t_hi = max(t_lo, ta), min(t_hi, tb)
    if t_hi - t_lo <= 1e-9:
        return None
    return point + t_lo * direction, point + t_hi * direction


def infill_segments(
    layout: TagLayout, profile: PrinterProfile
) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """Parallel infill segments per region, serpentine ordered.

    Lines run at the region's bead angle, spaced one linewidth apart; the
    first line sits half a linewidth inside the region boundary.  Segment
    directions alternate so consecutive segments chain head-to-tail.
    """
    w = profile.linewidth
    out = []
    for region in layout.regions:
        delta = region.angle.delta
        e = np.array([math.cos(delta), math.sin(delta)])
        nrm = np.array([-math.sin(delta), math.cos(delta)])
        corners = np.array(
            [
                [region.x_start, 0.0],
                [region.x_end, 0.0],
                [region.x_start, layout.height],
                [region.x_end, layout.height],
            ]
        )
        projections = corners @ nrm
        c_min, c_max = projections.min(), projections.max()
        offsets = np.arange(c_min + w / 2, c_max - w / 2 + 1e-12, w)
        segments = []
        for k, c in enumerate(offsets):
            clipped = _clip_line_to_rect(
                c * nrm, e, region.x_start, region.x_end, 0.0, layout.height
            )
            if clipped is None:
                continue
            a, b = clipped
            segments.append((a, b) if k % 2 == 0 else (b, a))
        if not segments:
            raise EmptyRegionError(
                f"region [{region.x_start:.3f}, {region.x_end:.3f}] is narrower "
                f"than one linewidth at delta={math.degrees(delta):.2f} deg"
            )
        out.append(segments)
    return out


@dataclass
class Move:
    """One G0/G1 instruction; missing fields stay None."""

    command: str
    x: float | None = None
    y: float | None = None
    z: float | None = None
    f: float | None = None
    e: float | None = None

    def render(self) -> str:
        parts = [self.command]
        for letter, value in (
            ("X", self.x),
            ("Y", self.y),
            ("Z", self.z),
            ("F", self.f),
            ("E", self.e),
        ):
            if value is not None:
                parts.append(f"{letter}{value:.5f}")
        return " ".join(parts)


@dataclass
class GcodeProgram:
    """Ordered G-code entries: Move instructions and verbatim raw lines."""

    entries: list = field(default_factory=list)

    @property
    def moves(self) -> list[Move]:
        return [m for m in self.entries if isinstance(m, Move)]

    def render(self) -> str:
        lines = [m.render() if isinstance(m, Move) else m for m in self.entries]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.render(), encoding="ascii", newline="\n")


def _round5(value: float) -> float:
    v = round(value, 5)
    return 0.0 if v == 0.0 else v  # normalise -0.0


def layout_hash(layout: TagLayout, profile: PrinterProfile) -> str:
    """Stable digest of the layout and profile, recorded in the file header."""
    h = hashlib.sha256()
    h.update(f"{layout.width:.6f}|{layout.height:.6f}".encode())
    for r in layout.regions:
        h.update(f"|{r.x_start:.6f},{r.x_end:.6f},{r.angle.delta:.12f}".encode())
    h.update(
        f"|{profile.filament_diameter:.6f},{profile.linewidth:.6f},"
        f"{profile.layer_height:.6f},{profile.z_print:.6f},"
        f"{profile.feed_rate:.6f},{profile.extrusion_factor:.6f}".encode()
    )
    return h.hexdigest()[:12]


def emit_gcode(
    layout: TagLayout,
    profile: PrinterProfile,
    origin: tuple[float, float] = (0.0, 0.0),
) -> GcodeProgram:
    """Render a layout as a deterministic toolpath program.

    Coordinates are rounded to five decimals before being stored, so the
    program object equals its own parsed rendering.  Each extruding move
    carries the relative E for its (rounded) path length.
    """
    ox, oy = origin
    prog = GcodeProgram()
    prog.entries.append("; angled-bead tag toolpath")
    prog.entries.append(
        f"; profile df={profile.filament_diameter:.5f} w={profile.linewidth:.5f} "
        f"h={profile.layer_height:.5f} z={profile.z_print:.5f} "
        f"feed={profile.feed_rate:.5f} k={profile.extrusion_factor:.5f}"
    )
    prog.entries.append(
        f"; layout w={layout.width:.5f} h={layout.height:.5f} "
        f"regions={len(layout.regions)} hash={layout_hash(layout, profile)}"
    )
    prog.entries.append("; extrusion is per-move relative: E = k*h*w/df^2 * length")
    prog.entries.append("G21")
    prog.entries.append("G90")
    prog.entries.append("M83")

    z = _round5(profile.z_print)
    feed = _round5(profile.feed_rate)
    e_per_mm = extrusion_length(1.0, profile)
    for segments in infill_segments(layout, profile):
        coords = np.round(np.asarray(segments) + np.array([ox, oy]), 5) + 0.0
        lengths = np.hypot(
            coords[:, 1, 0] - coords[:, 0, 0], coords[:, 1, 1] - coords[:, 0, 1]
        )
        for (a, b), length in zip(coords, lengths):
            prog.entries.append(Move("G0", x=float(a[0]), y=float(a[1]), z=z, f=feed))
            prog.entries.append(
                Move(
                    "G1",
                    x=float(b[0]),
                    y=float(b[1]),
                    z=z,
                    f=feed,
                    e=float(length) * e_per_mm,
                )
            )
    prog.entries.append("; end")
    return prog


_FIELDS = {"X": "x", "Y": "y", "Z": "z", "F": "f", "E": "e"}


def parse_gcode(text: str) -> GcodeProgram:
    """Parse the emitted dialect back into a program.

    G0/G1 lines become Move instructions; anything else (comments, other
    commands) is preserved as an opaque line.  Malformed fields raise
    GcodeParseError with 1-based line and column numbers.
    """
    prog = GcodeProgram()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped.startswith(("G0 ", "G1 ")) and stripped not in ("G0", "G1"):
            prog.entries.append(line)
            continue
        move = Move(stripped[:2])
        col = line.index(stripped[:2]) + 3
        for token in stripped[2:].split():
            col = line.index(token, col - 1) + 1
            letter = token[0].upper()
            if letter not in _FIELDS:
                raise GcodeParseError(f"unknown field {token[0]!r}", line_no, col)
            attr = _FIELDS[letter]
            if getattr(move, attr) is not None:
                raise GcodeParseError(f"duplicate field {letter}", line_no, col)
            try:
                value = float(token[1:])
            except ValueError:
                raise GcodeParseError(
                    f"bad number {token[1:]!r} in field {letter}", line_no, col + 1
                ) from None
            setattr(move, attr, value)
            col += len(token)
        prog.entries.append(move)
    return prog


def extruding_segments(
    program: GcodeProgram,
) -> list[tuple[tuple[float, float], tuple[float, float], float]]:
    """(start, end, E) triples of all extruding moves, tracking XY position."""
    px, py = math.nan, math.nan
    out = []
    for move in program.moves:
        nx = move.x if move.x is not None else px
        ny = move.y if move.y is not None else py
        if (
            move.command == "G1"
            and move.e is not None
            and not (math.isnan(px) or math.isnan(py))
        ):
            out.append(((px, py), (nx, ny), move.e))
        px, py = nx, ny
    return out


def total_extrusion(program: GcodeProgram) -> float:
    """Sum of extruded E over the program."""
    return float(sum(e for _, _, e in extruding_segments(program)))


def expected_extrusion(program: GcodeProgram, profile: PrinterProfile) -> float:
    """Extrusion the volume formula predicts for the program's path lengths."""
    total_len = sum(
        math.hypot(b[0] - a[0], b[1] - a[1]) for a, b, _ in extruding_segments(program)
    )
    return extrusion_length(total_len, profile)


def angle_estimate(program: GcodeProgram, region_bounds: np.ndarray) -> np.ndarray:
    """Recover each region's bead angle from its longest extruding segment.

    Segments are assigned to regions by their midpoint X; the returned
    angles lie in [0, pi).  Raises AmbiguousRegionError for a region with
    no extruding segment.
    """
    bounds = np.asarray(region_bounds, dtype=float)
    n = len(bounds) - 1
    best_len = np.zeros(n)
    best_angle = np.full(n, math.nan)
    for a, b, _ in extruding_segments(program):
        mid = 0.5 * (a[0] + b[0])
        idx = int(np.searchsorted(bounds, mid, side="right")) - 1
        idx = min(max(idx, 0), n - 1)
        if not bounds[idx] - 1e-9 <= mid <= bounds[idx + 1] + 1e-9:
            continue
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        if length > best_len[idx]:
            best_len[idx] = length
            best_angle[idx] = math.atan2(b[1] - a[1], b[0] - a[0]) % math.pi
    if np.any(np.isnan(best_angle)):
        missing = int(np.argmax(np.isnan(best_angle)))
        raise AmbiguousRegionError(f"no extruding segments in region {missing}")
    return best_angle
