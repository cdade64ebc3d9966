"""Bitstream <-> bead-angle codec.

A payload of n*m bits is cut into n groups of m bits.  Each group is read
as a Gray codeword (or a plain binary word), giving a state value v in
[0, 2^m).  The state picks the bead axis angle of one encoding region:

    delta = M(v / 2^m * 180 deg)

where M is a nonlinear remap built from the detection geometry.  Uniformly
spaced angles produce detection-circle crossings that crowd together near
the ends of the angular range; M inverts the measured crossing-angle
function so that the 2^m states land on uniformly spaced crossings instead.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .geometry import (
    DetectionGeometry,
    MicrostructureAngle,
    circle_intersection_angle,
)

MAP_MAGIC = b"ATMAP1"


class MonotonicityError(RuntimeError):
    """The scanned crossing-angle table is not strictly monotone."""


@dataclass(frozen=True)
class CodecConfig:
    """Payload framing: n_regions groups of bits_per_region bits each."""

    n_regions: int
    bits_per_region: int
    use_gray: bool = True

    def __post_init__(self):
        if self.n_regions < 1:
            raise ValueError("need at least one region")
        if not 1 <= self.bits_per_region <= 16:
            raise ValueError("bits_per_region must be in 1..16")

    @property
    def capacity(self) -> int:
        return self.n_regions * self.bits_per_region

    @property
    def n_states(self) -> int:
        return 2**self.bits_per_region


@dataclass(frozen=True)
class AngleCode:
    """One encoded region: its state value and the bead angle realizing it."""

    region_index: int
    value: int
    angle: MicrostructureAngle


def gray_encode(value: int, m: int) -> str:
    """m-bit reflected Gray codeword of an integer, most significant bit first.

    Adjacent values differ in exactly one bit.
    """
    if not 0 <= value < 2**m:
        raise ValueError(f"value {value!r} out of range for {m} bits")
    return format(value ^ (value >> 1), f"0{m}b")


def gray_decode(bits: str) -> int:
    """Integer whose Gray codeword is the given bit string."""
    if not bits:
        raise ValueError("empty bit sequence")
    g = int(bits, 2)
    v = 0
    while g:
        v ^= g
        g >>= 1
    return v


def _check_bits(payload: str) -> None:
    if not set(payload) <= {"0", "1"}:
        raise ValueError("payload must contain only '0' and '1'")


def bits_to_values(payload: str, cfg: CodecConfig) -> list[int]:
    """Split a payload into per-region state values (Gray or plain binary)."""
    _check_bits(payload)
    m = cfg.bits_per_region
    if len(payload) != cfg.capacity:
        raise ValueError(
            f"payload length {len(payload)} != n*m = {cfg.capacity}"
        )
    chunks = [payload[i * m : (i + 1) * m] for i in range(cfg.n_regions)]
    if cfg.use_gray:
        return [gray_decode(c) for c in chunks]
    return [int(c, 2) for c in chunks]


def values_to_bits(values: list[int], cfg: CodecConfig) -> str:
    """Inverse of bits_to_values."""
    if len(values) != cfg.n_regions:
        raise ValueError(
            f"got {len(values)} region states, expected {cfg.n_regions}"
        )
    m = cfg.bits_per_region
    out = []
    for v in values:
        if not 0 <= v < cfg.n_states:
            raise ValueError(f"state {v!r} out of range for {m} bits")
        out.append(gray_encode(v, m) if cfg.use_gray else format(v, f"0{m}b"))
    return "".join(out)


class NonlinearMap:
    """Invertible map between a uniform angle parameter and bead angles.

    Holds a table of (delta, psi) pairs, where psi(delta) is the polar
    angle at which the reflected curve of a delta-angled bead crosses
    the detection circle, plus monotone piecewise-cubic interpolants in
    both directions.  The forward map sends u in [0, 180] degrees to the
    delta whose crossing angle divides the observed psi span in the
    ratio u/180.
    """

    def __init__(self, geometry: DetectionGeometry, deltas: np.ndarray, psis: np.ndarray):
        deltas = np.asarray(deltas, dtype=float)
        psis = np.asarray(psis, dtype=float)
        if deltas.shape != psis.shape or deltas.ndim != 1 or len(deltas) < 4:
            raise ValueError("need matching 1-D tables with at least 4 rows")
        dpsi = np.diff(psis)
        if np.all(dpsi > 0):
            increasing = True
        elif np.all(dpsi < 0):
            increasing = False
        else:
            k = int(np.argmin(dpsi * np.sign(dpsi[0])))
            raise MonotonicityError(
                "crossing angle is not monotone in delta near "
                f"delta={deltas[k]:.6f} rad; remapping needs an invertible scan"
            )
        self.geometry = geometry
        self.deltas = deltas
        self.psis = psis
        self.increasing = increasing
        self.psi_min = float(psis.min())
        self.psi_max = float(psis.max())
        self._forward = PchipInterpolator(deltas, psis)
        if increasing:
            self._inverse = PchipInterpolator(psis, deltas)
        else:
            self._inverse = PchipInterpolator(psis[::-1], deltas[::-1])

    def psi_for_delta(self, delta: float) -> float:
        """Interpolated crossing angle for a bead angle inside the table span."""
        return float(self._forward(delta))

    def delta_for_input(self, u_deg: float) -> float:
        """Forward map: uniform parameter in [0, 180] degrees to bead angle."""
        if not 0.0 <= u_deg <= 180.0:
            raise ValueError(f"map input must be in [0, 180] degrees, got {u_deg!r}")
        target = self.psi_min + (u_deg / 180.0) * (self.psi_max - self.psi_min)
        return float(self._inverse(target))

    def input_for_delta(self, delta: float) -> float:
        """Inverse map: bead angle back to the uniform parameter, in degrees."""
        psi = self.psi_for_delta(delta)
        return 180.0 * (psi - self.psi_min) / (self.psi_max - self.psi_min)

    def mapped_deltas(self, m: int) -> np.ndarray:
        """Bead angles of all 2^m states."""
        k = 2**m
        return np.array([self.delta_for_input(v / k * 180.0) for v in range(k)])

    @property
    def table_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.deltas.astype("<f8").tobytes())
        h.update(self.psis.astype("<f8").tobytes())
        return h.hexdigest()[:12]

    def save(self, path: str | Path) -> None:
        """Write the table as magic + row count + little-endian float64 pairs."""
        path = Path(path)
        pairs = np.column_stack([self.deltas, self.psis]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(MAP_MAGIC)
            fh.write(struct.pack("<Q", len(self.deltas)))
            fh.write(pairs.tobytes())

    @classmethod
    def load(
        cls,
        path: str | Path,
        geometry: DetectionGeometry,
        validate: bool = True,
    ) -> "NonlinearMap":
        """Read a cached table and rebuild the interpolants.

        With validate=True, three table rows are re-derived from the given
        geometry; a mismatch means the cache belongs to a different rig.
        """
        raw = Path(path).read_bytes()
        if raw[: len(MAP_MAGIC)] != MAP_MAGIC:
            raise ValueError(f"{path}: not a map cache (bad magic)")
        (count,) = struct.unpack_from("<Q", raw, len(MAP_MAGIC))
        body = raw[len(MAP_MAGIC) + 8 :]
        if len(body) != count * 16:
            raise ValueError(f"{path}: truncated map cache")
        pairs = np.frombuffer(body, dtype="<f8").reshape(count, 2)
        nmap = cls(geometry, pairs[:, 0].copy(), pairs[:, 1].copy())
        if validate:
            for idx in (0, count // 2, count - 1):
                angle = MicrostructureAngle.from_delta(nmap.deltas[idx])
                psi = circle_intersection_angle(geometry, angle)
                if abs(psi - nmap.psis[idx]) > 1e-9:
                    raise ValueError(
                        f"{path}: cached table does not match this geometry"
                    )
        return nmap


def build_nonlinear_map(geometry: DetectionGeometry, table_size: int = 1024) -> NonlinearMap:
    """Scan the crossing angle over bead angles and build the remap.

    The scan grid is table_size bin centres over (0, pi).  Crossing angles
    are unwrapped so the table is continuous; construction fails with
    MonotonicityError if the scan is not strictly monotone for the given
    geometry, and propagates NoIntersectionError when the detection circle
    is out of reach of some pattern.
    """
    deltas = (np.arange(table_size) + 0.5) / table_size * math.pi
    psis = np.unwrap(
        np.array(
            [
                circle_intersection_angle(geometry, MicrostructureAngle.from_delta(d))
                for d in deltas
            ]
        )
    )
    return NonlinearMap(geometry, deltas, psis)


def encode(payload: str, cfg: CodecConfig, nmap: NonlinearMap) -> list[AngleCode]:
    """Turn an n*m-bit payload into per-region bead angles.

    The payload must have exactly n*m bits (callers zero-pad shorter data;
    no error-correcting code is applied).
    """
    values = bits_to_values(payload, cfg)
    codes = []
    for i, v in enumerate(values):
        delta = nmap.delta_for_input(v / cfg.n_states * 180.0)
        codes.append(
            AngleCode(region_index=i, value=v, angle=MicrostructureAngle.from_delta(delta))
        )
    return codes


def decode(states: list[int], cfg: CodecConfig) -> str:
    """Concatenate the per-region codewords of detected state values.

    Raises ValueError on a region-count mismatch, which signals a failed
    detection upstream.
    """
    return values_to_bits(list(states), cfg)
