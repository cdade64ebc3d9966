"""Reflection geometry of half-cylinder surface beads under a collimated beam.

The tag surface lies on the XY plane and is textured with parallel
half-cylindrical beads.  A collimated beam travelling in the YZ plane hits
the surface at the origin with incidence angle ``alpha`` (measured from the
Z axis).  Reflected rays leave the origin, strike the vertical background
plane ``y = d`` and draw a curve there whose shape depends only on the bead
orientation; that curve is a conic section.

Angles:
- ``delta``: bead axis angle, measured from the X axis, in ``[0, pi)``.
- ``phi``:   bead cross-section angle, ``phi = delta - pi/2``.
- ``theta``: position of a surface point on the bead cross-section,
  measured from the Z axis, in ``(-pi/2, pi/2)``.

Plane coordinates throughout are ``(u, v) = (x, z)`` on the plane
``y = d``, in millimetres.

Main entry points:
- ``reflect_ray``              mirror reflection on the bead surface
- ``cone_half_angle``          opening angle of the reflected ray cone
- ``fixed_point``              plane point shared by every curve
- ``sample_pattern``           ray-sampled curve on the background plane
- ``conic_params``             closed-form eccentricity and focus
- ``circle_intersection_angle`` polar angle where the curve crosses the
                               detection circle around the fixed point
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_PHI_DEGENERATE_TOL = 1e-12


class DegeneratePatternError(ValueError):
    """The reflected curve collapses to a straight line (phi = -pi/2)."""


class NoIntersectionError(RuntimeError):
    """The reflected curve never reaches the detection circle."""

    def __init__(self, delta: float, branch: int):
        self.delta = delta
        self.branch = branch
        super().__init__(
            f"pattern for delta={math.degrees(delta):.4f} deg does not reach "
            f"the detection circle on the theta{'>' if branch > 0 else '<'}0 branch"
        )


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < math.pi / 2:
        raise ValueError(f"incidence angle must lie in (0, pi/2), got {alpha!r}")


@dataclass(frozen=True)
class DetectionGeometry:
    """Rig geometry: incidence angle, background plane offset, detection circle.

    alpha:         incidence angle in radians, 0 < alpha < pi/2
    d:             background plane offset in mm (plane y = d), d > 0
    circle_radius: radius of the detection circle around the fixed point, mm
    sensor_count:  number of sensors placed on the detection circle
    """

    alpha: float
    d: float
    circle_radius: float
    sensor_count: int = 16

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.d <= 0:
            raise ValueError(f"plane offset must be positive, got {self.d!r}")
        if self.circle_radius <= 0:
            raise ValueError(f"circle radius must be positive, got {self.circle_radius!r}")
        if self.sensor_count < 2:
            raise ValueError(f"need at least 2 sensors, got {self.sensor_count!r}")


@dataclass(frozen=True)
class MicrostructureAngle:
    """Bead orientation, stored redundantly as axis angle and section angle.

    delta: bead axis angle from the X axis, in [0, pi)
    phi:   cross-section angle, phi = delta - pi/2, in [-pi/2, pi/2)
    """

    delta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.delta < math.pi:
            raise ValueError(f"delta must lie in [0, pi), got {self.delta!r}")
        if abs(self.phi - (self.delta - math.pi / 2)) > 1e-12:
            raise ValueError("phi must equal delta - pi/2")

    @classmethod
    def from_delta(cls, delta: float) -> "MicrostructureAngle":
        delta = float(delta) % math.pi
        return cls(delta=delta, phi=delta - math.pi / 2)

    @classmethod
    def from_phi(cls, phi: float) -> "MicrostructureAngle":
        return cls.from_delta(phi + math.pi / 2)

    @property
    def degenerate(self) -> bool:
        """True when the reflected curve is a straight line (phi = -pi/2)."""
        return abs(self.phi + math.pi / 2) < _PHI_DEGENERATE_TOL


def incident_direction(alpha: float) -> np.ndarray:
    """Unit direction of the incoming beam (travelling toward +y, downward)."""
    _check_alpha(alpha)
    return np.array([0.0, math.sin(alpha), -math.cos(alpha)])


def surface_normal(theta: float, phi: float) -> np.ndarray:
    """Unit outward normal of the bead surface at cross-section position theta."""
    return np.array(
        [
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        ]
    )


def cylinder_axis(phi: float) -> np.ndarray:
    """Unit vector along the bead axis, in the tag plane."""
    return np.array([-math.sin(phi), math.cos(phi), 0.0])


def reflect_ray(alpha: float, theta: float, phi: float) -> np.ndarray:
    """Direction of the ray reflected at cross-section position theta.

    Mirror law: b = a - 2 (n . a) n  with a the incident direction and n the
    surface normal.  Returns a unit vector.

    Raises ValueError when theta is outside the open interval (-pi/2, pi/2):
    a grazing normal is undefined on a half-cylinder.
    """
    _check_alpha(alpha)
    if not -math.pi / 2 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (-pi/2, pi/2), got {theta!r}")
    a = incident_direction(alpha)
    n = surface_normal(theta, phi)
    return a - 2.0 * float(n @ a) * n


def _reflect_many(alpha: float, thetas: np.ndarray, phi: float) -> np.ndarray:
    """Vectorised mirror reflection; returns an (N, 3) array of unit vectors."""
    st, ct = np.sin(thetas), np.cos(thetas)
    n = np.stack([st * math.cos(phi), st * math.sin(phi), ct], axis=1)
    a = np.array([0.0, math.sin(alpha), -math.cos(alpha)])
    gamma = n @ a
    return a[None, :] - 2.0 * gamma[:, None] * n


def cone_half_angle(alpha: float, phi: float) -> float:
    """Half opening angle of the cone formed by all reflected rays.

    Every reflected ray keeps a fixed angle xi = arccos(cos(phi) sin(alpha))
    with the bead axis, so the reflected rays sweep a circular cone with the
    origin as vertex and the bead axis as cone axis.
    """
    _check_alpha(alpha)
    return math.acos(math.cos(phi) * math.sin(alpha))


def fixed_point(geom: DetectionGeometry) -> np.ndarray:
    """Plane point hit by the top-of-bead reflection, shared by all patterns.

    At theta = 0 the surface normal is the Z axis regardless of the bead
    angle, so the reflected ray is (0, sin(alpha), cos(alpha)) and meets the
    plane y = d at (u, v) = (0, d / tan(alpha)).
    """
    return np.array([0.0, geom.d / math.tan(geom.alpha)])


@dataclass(frozen=True, eq=False)
class ConicDescriptor:
    """Closed-form description of the reflected curve on the background plane.

    eccentricity:    |sin phi| / cos xi, nonnegative
    focus:           (u, v) mm; the curve's focus obtained from the sphere
                     inscribed in the reflected-ray cone and tangent to the
                     background plane
    cone_half_angle: xi in radians
    fixed_point:     (0, d / tan alpha) in plane coordinates
    """

    eccentricity: float
    focus: np.ndarray
    cone_half_angle: float
    fixed_point: np.ndarray


def conic_params(geom: DetectionGeometry, angle: MicrostructureAngle) -> ConicDescriptor:
    """Eccentricity and focus of the reflected curve.

    The reflected rays form a circular cone; its section by the background
    plane is a conic with

        e = |sin phi| / cos xi
        focus = (-d sin phi / (cos phi + sin xi), 0)

    where xi is the cone half angle.  For phi = 0 this degenerates to a
    circle (e = 0, focus at the plane origin).

    Raises DegeneratePatternError when phi = -pi/2 (cos xi = 0): the curve
    is the vertical line u = 0 and has no conic parameters.
    """
    phi = angle.phi
    xi = cone_half_angle(geom.alpha, phi)
    cos_xi = math.cos(xi)
    if angle.degenerate or cos_xi < 1e-12:
        raise DegeneratePatternError(
            "pattern is a straight line; no eccentricity/focus exist"
        )
    ecc = abs(math.sin(phi)) / cos_xi
    focus_u = -geom.d * math.sin(phi) / (math.cos(phi) + math.sin(xi))
    return ConicDescriptor(
        eccentricity=ecc,
        focus=np.array([focus_u, 0.0]),
        cone_half_angle=xi,
        fixed_point=fixed_point(geom),
    )


@dataclass(frozen=True, eq=False)
class IlluminationPattern:
    """Ray-sampled reflected curve on the background plane.

    theta:      sorted sample parameters; always contains theta = 0
    samples:    (N, 2) plane points, one per retained theta
    conic:      closed-form descriptor, or None for the degenerate line
    angle:      generating bead orientation
    degenerate: True when the curve is the vertical line u = 0
    """

    theta: np.ndarray
    samples: np.ndarray
    conic: ConicDescriptor | None
    angle: MicrostructureAngle
    degenerate: bool

    @property
    def sample_at_zero(self) -> np.ndarray:
        """Plane point of the theta = 0 ray (the fixed point, by construction)."""
        idx = int(np.argmin(np.abs(self.theta)))
        return self.samples[idx]


def _plane_points(
    geom: DetectionGeometry, phi: float, thetas: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Plane intersections of reflected rays; keeps only rays with b_y > 0."""
    b = _reflect_many(geom.alpha, thetas, phi)
    keep = b[:, 1] > 0.0
    t = geom.d / b[keep, 1]
    pts = b[keep][:, [0, 2]] * t[:, None]
    return thetas[keep], pts


def sample_pattern(
    geom: DetectionGeometry, angle: MicrostructureAngle, n_samples: int = 512
) -> IlluminationPattern:
    """Sample the reflected curve by tracing rays across the bead cross-section.

    The theta grid is n_samples bin centres over (-pi/2, pi/2), with theta = 0
    inserted when the grid misses it.  Only rays travelling toward the
    background plane (positive y component) are retained.
    """
    if n_samples < 3:
        raise ValueError(f"need at least 3 samples, got {n_samples!r}")
    thetas = (np.arange(n_samples) + 0.5) / n_samples * math.pi - math.pi / 2
    if not np.any(thetas == 0.0):
        thetas = np.sort(np.append(thetas, 0.0))
    kept, pts = _plane_points(geom, angle.phi, thetas)
    if angle.degenerate:
        conic = None
    else:
        conic = conic_params(geom, angle)
    return IlluminationPattern(
        theta=kept, samples=pts, conic=conic, angle=angle, degenerate=angle.degenerate
    )


def conic_polar_residual(pattern: IlluminationPattern) -> float:
    """Max relative spread of the semi-latus rectum over the pattern samples.

    Every point P of a conic with focus F and eccentricity e satisfies
    |P - F| (1 + e cos nu) = l, with nu the polar angle of P - F measured
    from the symmetry axis toward the nearest vertex.  The axis orientation
    (+u or -u) is not known a priori; the orientation with the smaller
    spread is reported.  Zero for exact conic samples, up to rounding.
    """
    if pattern.conic is None:
        raise DegeneratePatternError("degenerate line pattern has no conic")
    c = pattern.conic
    rel = pattern.samples - c.focus[None, :]
    r = np.hypot(rel[:, 0], rel[:, 1])
    best = math.inf
    for axis_sign in (1.0, -1.0):
        cos_nu = axis_sign * rel[:, 0] / r
        latus = r * (1.0 + c.eccentricity * cos_nu)
        scale = np.median(np.abs(latus))
        if scale == 0.0:
            continue
        spread = (latus.max() - latus.min()) / scale
        best = min(best, float(spread))
    return best


def _plane_point_scalar(
    alpha: float, phi: float, theta: float, d: float
) -> tuple[float, float] | None:
    """Plane intersection of one reflected ray, or None when it misses."""
    st, ct = math.sin(theta), math.cos(theta)
    nx, ny, nz = st * math.cos(phi), st * math.sin(phi), ct
    ay, az = math.sin(alpha), -math.cos(alpha)
    gamma = ny * ay + nz * az
    bx = -2.0 * gamma * nx
    by = ay - 2.0 * gamma * ny
    bz = az - 2.0 * gamma * nz
    if by <= 0.0:
        return None
    t = d / by
    return bx * t, bz * t


def _branch_crossing(
    geom: DetectionGeometry, angle: MicrostructureAngle, branch: int
) -> np.ndarray:
    """Plane point where one theta branch first crosses the detection circle.

    Walks outward from theta = 0 on a fine grid until the distance to the
    fixed point exceeds the circle radius, then bisects the bracketing
    interval down to a 1e-10 mm distance residual.
    """
    fp = fixed_point(geom)
    r = geom.circle_radius
    phi = angle.phi

    def dist(theta: float) -> float | None:
        p = _plane_point_scalar(geom.alpha, phi, theta, geom.d)
        if p is None:
            return None
        return math.hypot(p[0] - fp[0], p[1] - fp[1])

    grid = branch * np.linspace(1e-9, math.pi / 2 - 1e-9, 4096)
    b = _reflect_many(geom.alpha, grid, phi)
    towards = b[:, 1] > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = geom.d / b[:, 1]
        du = b[:, 0] * t - fp[0]
        dv = b[:, 2] * t - fp[1]
        dists = np.hypot(du, dv)
    dists[~towards] = np.nan

    lo = 0.0
    hi = None
    for k in range(len(grid)):
        if not towards[k]:
            break
        if dists[k] >= r:
            hi = float(grid[k])
            break
        lo = float(grid[k])
    if hi is None:
        raise NoIntersectionError(angle.delta, branch)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d_mid = dist(mid)
        if d_mid is None:
            # Ray turned away inside the bracket; shrink toward the valid side.
            hi = mid
            continue
        if abs(d_mid - r) <= 1e-10:
            lo = hi = mid
            break
        if d_mid < r:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-15:
            break
    theta_star = 0.5 * (lo + hi)
    p = _plane_point_scalar(geom.alpha, phi, theta_star, geom.d)
    return np.array(p)


def circle_intersection_angle(
    geom: DetectionGeometry, angle: MicrostructureAngle, branch: int = 1
) -> float:
    """Polar angle, at the fixed point, of the curve/detection-circle crossing.

    branch selects which half of the curve is followed (theta > 0 for +1,
    theta < 0 for -1); the default is the canonical theta > 0 branch.  The
    angle is measured from the +u axis, in (-pi, pi].

    Raises NoIntersectionError when that branch leaves the background plane
    before reaching the circle.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    fp = fixed_point(geom)
    p = _branch_crossing(geom, angle, branch)
    return math.atan2(p[1] - fp[1], p[0] - fp[0])


def circle_intersection_angles(
    geom: DetectionGeometry, angle: MicrostructureAngle
) -> tuple[float, float]:
    """Polar angles of both curve/circle crossings (theta > 0, theta < 0)."""
    return (
        circle_intersection_angle(geom, angle, branch=1),
        circle_intersection_angle(geom, angle, branch=-1),
    )
