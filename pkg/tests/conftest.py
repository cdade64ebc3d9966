import math

import pytest

from reflectag.codec import build_nonlinear_map
from reflectag.geometry import DetectionGeometry


@pytest.fixture(scope="session")
def rig_geometry() -> DetectionGeometry:
    """Default desk rig: 70 deg incidence, 65 mm plane, 15 mm circle, 16 sensors."""
    return DetectionGeometry(
        alpha=math.radians(70.0), d=65.0, circle_radius=15.0, sensor_count=16
    )


@pytest.fixture(scope="session")
def rig_map(rig_geometry):
    """Session-wide remap table (construction costs a few hundred ms)."""
    return build_nonlinear_map(rig_geometry)
