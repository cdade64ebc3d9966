"""Command-line entry points: encode, simulate, decode, sweep, buildmap.

All verbs are deterministic given their seed.  Geometry and rig flags
default to the reference desk rig; a config file of `key = value` lines
(same keys as the flag names with dashes replaced by underscores) may be
passed with --config and takes precedence over flags.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import codec, detector, experiments, gcode, optics
from .geometry import DetectionGeometry


def _geometry_from(ns) -> DetectionGeometry:
    return DetectionGeometry(
        alpha=math.radians(ns.alpha_deg),
        d=ns.plane_distance,
        circle_radius=ns.circle_radius,
        sensor_count=ns.sensor_count,
    )


def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-deg", type=float, default=experiments.DEFAULT_ALPHA_DEG,
                   help="beam incidence angle in degrees")
    p.add_argument("--plane-distance", type=float, default=experiments.DEFAULT_PLANE_DISTANCE,
                   help="background plane offset in mm")
    p.add_argument("--circle-radius", type=float, default=experiments.DEFAULT_CIRCLE_RADIUS,
                   help="detection circle radius in mm")
    p.add_argument("--sensor-count", type=int, default=experiments.DEFAULT_SENSOR_COUNT)


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--regions", type=int, default=experiments.DEFAULT_N_REGIONS,
                   help="number of encoding regions")
    p.add_argument("--bits", type=int, default=experiments.DEFAULT_BITS_PER_REGION,
                   help="bits per region")
    p.add_argument("--binary", action="store_true",
                   help="plain binary region coding instead of Gray")


def _add_rig_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-diameter", type=float, default=experiments.DEFAULT_BEAM_DIAMETER)
    p.add_argument("--aperture-sigma", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.5, help="swipe step in mm per frame")
    p.add_argument("--noise-sigma", type=float, default=8.0, help="ADC noise in counts")
    p.add_argument("--jitter-sigma", type=float, default=1.5,
                   help="alignment jitter in degrees, redrawn per region")
    p.add_argument("--ambient", type=float, default=0.0, help="ambient level in counts")
    p.add_argument("--borderline-width", type=float, default=1.0)
    p.add_argument("--disruption-radius", type=float, default=1.5)
    p.add_argument("--diffuse-level", type=float, default=0.05)


def _apply_config_file(ns: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Overlay `key = value` config entries onto parsed flags (config wins)."""
    if not getattr(ns, "config", None):
        return
    text = Path(ns.config).read_text()
    for raw in text.split("\n"):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"bad config line: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not hasattr(ns, key):
            parser.error(f"unknown config key: {key.strip()!r}")
        current = getattr(ns, key)
        if isinstance(current, bool):
            setattr(ns, key, value.strip().lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(ns, key, int(value))
        elif isinstance(current, float):
            setattr(ns, key, float(value))
        else:
            setattr(ns, key, value.strip())


def _load_map(ns, geometry: DetectionGeometry) -> codec.NonlinearMap:
    if getattr(ns, "map", None):
        return codec.NonlinearMap.load(ns.map, geometry)
    return codec.build_nonlinear_map(geometry)


def _pad_payload(payload: str, capacity: int) -> str:
    if len(payload) > capacity:
        raise SystemExit(f"payload has {len(payload)} bits; capacity is {capacity}")
    return payload + "0" * (capacity - len(payload))


def cmd_buildmap(ns, parser) -> int:
    geometry = _geometry_from(ns)
    nmap = codec.build_nonlinear_map(geometry)
    nmap.save(ns.out)
    print(f"map table: {len(nmap.deltas)} rows, hash {nmap.table_hash}, -> {ns.out}")
    return 0


def cmd_encode(ns, parser) -> int:
    geometry = _geometry_from(ns)
    cfg = codec.CodecConfig(ns.regions, ns.bits, use_gray=not ns.binary)
    nmap = _load_map(ns, geometry)
    payload = _pad_payload(ns.payload, cfg.capacity)
    codes = codec.encode(payload, cfg, nmap)
    layout = gcode.TagLayout.from_angles(
        ns.tag_width, ns.tag_height, [c.angle.delta for c in codes]
    )
    profile = gcode.PrinterProfile(
        filament_diameter=ns.filament_diameter,
        nozzle_diameter=ns.nozzle_diameter,
        layer_height=ns.layer_height,
        feed_rate=ns.feed_rate,
        extrusion_factor=ns.extrusion_factor,
    )
    program = gcode.emit_gcode(layout, profile)
    program.write(ns.out)
    sidecar = {
        "tag_width_mm": ns.tag_width,
        "tag_height_mm": ns.tag_height,
        "n_regions": ns.regions,
        "bits_per_region": ns.bits,
        "use_gray": not ns.binary,
        "payload_bits": len(payload),
        "angles_deg": [math.degrees(c.angle.delta) for c in codes],
        "map_table_hash": nmap.table_hash,
        "geometry": {
            "alpha_deg": ns.alpha_deg,
            "plane_distance_mm": ns.plane_distance,
            "circle_radius_mm": ns.circle_radius,
            "sensor_count": ns.sensor_count,
        },
    }
    sidecar_path = Path(ns.out).with_suffix(".layout.json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    print(f"toolpath -> {ns.out}")
    print(f"layout sidecar -> {sidecar_path}")
    return 0


def _scenario_from_flags(ns, geometry, layout, nmap, bits) -> optics.SwipeScenario:
    return experiments.make_scenario(
        layout,
        geometry,
        nmap,
        bits,
        seed=ns.seed,
        beam_diameter=ns.beam_diameter,
        aperture_sigma=ns.aperture_sigma,
        step=ns.step,
        noise_sigma=ns.noise_sigma,
        jitter_sigma_deg=ns.jitter_sigma,
        ambient=ns.ambient,
        borderline_width=ns.borderline_width,
        disruption_radius=ns.disruption_radius,
        diffuse_level=ns.diffuse_level,
    )


def cmd_simulate(ns, parser) -> int:
    if ns.scenario:
        scenario = optics.parse_scenario(Path(ns.scenario).read_text())
        if ns.seed is not None:
            scenario = optics.scenario_with(scenario, seed=ns.seed)
    else:
        if bool(ns.layout) == bool(ns.gcode):
            parser.error("pass exactly one of --layout or --gcode (or --scenario)")
        geometry = _geometry_from(ns)
        nmap = _load_map(ns, geometry)
        if ns.layout:
            sidecar = json.loads(Path(ns.layout).read_text())
            angles = [math.radians(a) for a in sidecar["angles_deg"]]
            width = sidecar["tag_width_mm"]
            height = sidecar["tag_height_mm"]
            bits = sidecar["bits_per_region"]
        else:
            program = gcode.parse_gcode(Path(ns.gcode).read_text())
            width, height = ns.tag_width, ns.tag_height
            bounds = np.array([width * i / ns.regions for i in range(ns.regions + 1)])
            angles = list(gcode.angle_estimate(program, bounds))
            bits = ns.bits
        layout = gcode.TagLayout.from_angles(width, height, angles)
        scenario = _scenario_from_flags(
            ns, geometry, layout, nmap, bits
        )
        if ns.seed is not None:
            scenario = optics.scenario_with(scenario, seed=ns.seed)
    frames = optics.simulate_swipe(scenario)
    optics.write_trace(frames, ns.out)
    if ns.save_scenario:
        Path(ns.save_scenario).write_text(optics.format_scenario(scenario))
        print(f"scenario -> {ns.save_scenario}")
    print(f"trace -> {ns.out} ({len(frames)} frames)")
    positions = optics.beam_positions(scenario)
    bounds = scenario.layout.boundaries
    for i in range(len(bounds) - 1):
        n_inside = int(np.sum((positions >= bounds[i]) & (positions < bounds[i + 1])))
        print(f"region {i}: {n_inside} frame centres inside")
    return 0


def cmd_decode(ns, parser) -> int:
    scenario = optics.parse_scenario(Path(ns.scenario).read_text())
    frames = optics.read_trace(ns.trace)
    ambient_frame, state_frames = optics.reference_frames(scenario)
    cfg = detector.DetectorConfig(
        expected_regions=ns.regions,
        bits_per_region=ns.bits,
        threshold=ns.threshold,
        debounce_frames=ns.debounce,
        use_gray=not ns.binary,
    )
    truth = ns.truth
    report = detector.segment_and_decode(
        frames, state_frames, ambient_frame, cfg, truth=truth
    )
    print(f"regions recovered: {len(report.region_states)} (expected {ns.regions})")
    print(f"states: {report.region_states}")
    print(f"detection_success: {report.detection_success}")
    if report.detection_success:
        print(f"bits: {report.bits}")
    if report.ber is not None:
        print(f"ber: {report.ber:.4f}")
    return 0 if report.detection_success else 2


def cmd_sweep(ns, parser) -> int:
    values = [float(v) for v in ns.values.split(",")]
    spec = experiments.ExperimentSpec(
        variable=ns.variable,
        values=values,
        trials=ns.trials,
        seed=ns.seed,
        output=ns.out,
        n_regions=ns.regions,
        bits_per_region=ns.bits,
        scenario_overrides={
            "noise_sigma": ns.noise_sigma,
            "jitter_sigma_deg": ns.jitter_sigma,
            "step": ns.step,
        },
    )
    rows, aggregates = experiments.run_sweep(spec)
    base = Path(spec.output)
    trials_path = base.with_name(base.name + "_trials.csv")
    agg_path = base.with_name(base.name + "_aggregate.csv")
    schema = "paired" if spec.variable == "gray_vs_binary" else "results"
    experiments.write_rows(rows, trials_path, f"sweep-{schema} v1")
    experiments.write_rows(aggregates, agg_path, f"sweep-{schema}-aggregate v1")
    print(f"trial rows -> {trials_path}")
    print(f"aggregate  -> {agg_path}")
    for row in aggregates:
        print(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectag",
        description="encode, print, simulate and decode reflective angled-bead tags",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("buildmap", help="construct and cache the angle remap table")
    _add_geometry_flags(p)
    p.add_argument("--out", required=True, help="output cache file")
    p.set_defaults(func=cmd_buildmap)

    p = sub.add_parser("encode", help="payload bits -> toolpath + layout sidecar")
    _add_geometry_flags(p)
    _add_codec_flags(p)
    p.add_argument("--payload", default="", help="bit string; zero-padded to capacity")
    p.add_argument("--tag-width", type=float, default=experiments.DEFAULT_TAG_WIDTH)
    p.add_argument("--tag-height", type=float, default=experiments.DEFAULT_TAG_HEIGHT)
    p.add_argument("--filament-diameter", type=float, default=1.75)
    p.add_argument("--nozzle-diameter", type=float, default=0.4)
    p.add_argument("--layer-height", type=float, default=0.2)
    p.add_argument("--feed-rate", type=float, default=1500.0)
    p.add_argument("--extrusion-factor", type=float, default=0.9)
    p.add_argument("--map", help="map cache from buildmap; rebuilt when omitted")
    p.add_argument("--config", help="key = value file overriding flags")
    p.add_argument("--out", required=True, help="output .gcode path")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("simulate", help="layout or toolpath -> swipe trace CSV")
    _add_geometry_flags(p)
    _add_codec_flags(p)
    _add_rig_flags(p)
    p.add_argument("--layout", help="layout sidecar from encode")
    p.add_argument("--gcode", help="toolpath file (requires --regions/--bits)")
    p.add_argument("--scenario", help="scenario file; overrides other inputs")
    p.add_argument("--tag-width", type=float, default=experiments.DEFAULT_TAG_WIDTH)
    p.add_argument("--tag-height", type=float, default=experiments.DEFAULT_TAG_HEIGHT)
    p.add_argument("--map", help="map cache from buildmap")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--save-scenario", help="also write the scenario file here")
    p.add_argument("--config", help="key = value file overriding flags")
    p.add_argument("--out", required=True, help="output trace CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="trace CSV + scenario -> report")
    p.add_argument("--trace", required=True)
    p.add_argument("--scenario", required=True, help="scenario file from simulate")
    p.add_argument("--regions", type=int, default=experiments.DEFAULT_N_REGIONS)
    p.add_argument("--bits", type=int, default=experiments.DEFAULT_BITS_PER_REGION)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--threshold", type=float, default=experiments.DEFAULT_THRESHOLD)
    p.add_argument("--debounce", type=int, default=3)
    p.add_argument("--truth", help="ground-truth bit string for BER")
    p.add_argument("--config", help="key = value file overriding flags")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="run a parameter sweep, write CSVs")
    p.add_argument("--variable", required=True, choices=experiments.SWEEP_VARIABLES)
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--trials", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regions", type=int, default=experiments.DEFAULT_N_REGIONS)
    p.add_argument("--bits", type=int, default=experiments.DEFAULT_BITS_PER_REGION)
    p.add_argument("--noise-sigma", type=float, default=8.0)
    p.add_argument("--jitter-sigma", type=float, default=1.5)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--config", help="key = value file overriding flags")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    _apply_config_file(ns, parser)
    return ns.func(ns, parser)


if __name__ == "__main__":
    sys.exit(main())
