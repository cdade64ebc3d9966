"""reflectag: angled-bead reflective tags, from bitstream to toolpath to decoder.

Data is encoded as the axis angles of half-cylindrical printed beads; a
collimated beam reflects off each region into a conic curve whose crossing
of a sensor circle identifies the region's state.  The package covers the
whole loop: geometry of the reflection, the Gray-coded angle codec with its
nonlinear remap, deterministic toolpath emission/parsing, a virtual
photosensor rig, the correlation decoder, and a sweep harness.
"""

from .codec import (
    AngleCode,
    CodecConfig,
    NonlinearMap,
    build_nonlinear_map,
    decode,
    encode,
    gray_decode,
    gray_encode,
)
from .detector import (
    INVALID,
    DetectionReport,
    DetectorConfig,
    classify_frame,
    evaluate,
    segment_and_decode,
    similarity,
)
from .gcode import (
    GcodeProgram,
    PrinterProfile,
    Region,
    TagLayout,
    angle_estimate,
    emit_gcode,
    extrusion_length,
    infill_segments,
    parse_gcode,
)
from .geometry import (
    ConicDescriptor,
    DetectionGeometry,
    IlluminationPattern,
    MicrostructureAngle,
    circle_intersection_angle,
    cone_half_angle,
    conic_params,
    fixed_point,
    reflect_ray,
    sample_pattern,
)
from .optics import (
    BeamProfile,
    SensorFrame,
    SensorRing,
    SwipeScenario,
    frame_from_illumination,
    read_trace,
    reference_frames,
    sensor_response,
    simulate_swipe,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AngleCode",
    "BeamProfile",
    "CodecConfig",
    "ConicDescriptor",
    "DetectionGeometry",
    "DetectionReport",
    "DetectorConfig",
    "GcodeProgram",
    "IlluminationPattern",
    "INVALID",
    "MicrostructureAngle",
    "NonlinearMap",
    "PrinterProfile",
    "Region",
    "SensorFrame",
    "SensorRing",
    "SwipeScenario",
    "TagLayout",
    "angle_estimate",
    "build_nonlinear_map",
    "circle_intersection_angle",
    "classify_frame",
    "cone_half_angle",
    "conic_params",
    "decode",
    "emit_gcode",
    "encode",
    "evaluate",
    "extrusion_length",
    "fixed_point",
    "frame_from_illumination",
    "gray_decode",
    "gray_encode",
    "infill_segments",
    "parse_gcode",
    "read_trace",
    "reference_frames",
    "reflect_ray",
    "sample_pattern",
    "segment_and_decode",
    "sensor_response",
    "similarity",
    "simulate_swipe",
    "write_trace",
]
