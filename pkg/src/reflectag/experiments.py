"""Experiment harness: default rig, end-to-end trials, parameter sweeps.

Defaults reproduce the reference desk rig: 70 degree incidence, 65 mm
background plane, 15 mm detection circle with 16 sensors, 5 mm beam,
credit-card tag (85.6 mm swipe axis x 53.98 mm) split into 17 regions of
3 bits each, threshold 0.9.

All trial randomness flows from a single integer seed through
numpy SeedSequence-style derivation, so every sweep row is reproducible.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec, detector, gcode, optics
from .geometry import DetectionGeometry

DEFAULT_ALPHA_DEG = 70.0
DEFAULT_PLANE_DISTANCE = 65.0
DEFAULT_CIRCLE_RADIUS = 15.0
DEFAULT_SENSOR_COUNT = 16
DEFAULT_BEAM_DIAMETER = 5.0
DEFAULT_TAG_WIDTH = 85.6  # swipe axis; credit-card long side
DEFAULT_TAG_HEIGHT = 53.98
DEFAULT_N_REGIONS = 17
DEFAULT_BITS_PER_REGION = 3
DEFAULT_THRESHOLD = 0.9


def default_geometry() -> DetectionGeometry:
    return DetectionGeometry(
        alpha=math.radians(DEFAULT_ALPHA_DEG),
        d=DEFAULT_PLANE_DISTANCE,
        circle_radius=DEFAULT_CIRCLE_RADIUS,
        sensor_count=DEFAULT_SENSOR_COUNT,
    )


def default_codec_config(
    n_regions: int = DEFAULT_N_REGIONS,
    bits_per_region: int = DEFAULT_BITS_PER_REGION,
    use_gray: bool = True,
) -> codec.CodecConfig:
    return codec.CodecConfig(n_regions, bits_per_region, use_gray)


_MAP_CACHE: dict[tuple, codec.NonlinearMap] = {}


def cached_map(geometry: DetectionGeometry) -> codec.NonlinearMap:
    """Session-level cache of the remap table per geometry."""
    key = (geometry.alpha, geometry.d, geometry.circle_radius, geometry.sensor_count)
    if key not in _MAP_CACHE:
        _MAP_CACHE[key] = codec.build_nonlinear_map(geometry)
    return _MAP_CACHE[key]


def make_scenario(
    layout: gcode.TagLayout,
    geometry: DetectionGeometry,
    nmap: codec.NonlinearMap,
    bits_per_region: int,
    seed: int = 0,
    **overrides,
) -> optics.SwipeScenario:
    """Assemble a scenario with the default rig around a concrete layout."""
    beam = optics.BeamProfile(diameter=overrides.pop("beam_diameter", DEFAULT_BEAM_DIAMETER))
    ring = optics.SensorRing(
        geometry=geometry,
        aperture_sigma=overrides.pop("aperture_sigma", 2.0),
    )
    state_angles = tuple(float(d) for d in nmap.mapped_deltas(bits_per_region))
    return optics.SwipeScenario(
        layout=layout,
        beam=beam,
        ring=ring,
        state_angles=state_angles,
        seed=seed,
        **overrides,
    )


@dataclass(frozen=True)
class TrialResult:
    detection_success: bool
    bit_errors: int | None  # None when detection failed
    total_bits: int
    payload: str


def random_payload(rng: np.random.Generator, n_bits: int) -> str:
    return "".join("1" if b else "0" for b in rng.integers(0, 2, n_bits))


def run_trial(
    payload: str,
    cfg: codec.CodecConfig,
    geometry: DetectionGeometry,
    nmap: codec.NonlinearMap,
    seed: int = 0,
    tag_width: float = DEFAULT_TAG_WIDTH,
    tag_height: float = DEFAULT_TAG_HEIGHT,
    profile: gcode.PrinterProfile | None = None,
    bank: "optics._ResponseBank | None" = None,
    **scenario_overrides,
) -> TrialResult:
    """Full pipeline for one tag: encode, emit toolpath, recover angles
    from the toolpath, swipe it through the virtual rig, decode, compare.
    """
    profile = profile or gcode.PrinterProfile()
    codes = codec.encode(payload, cfg, nmap)
    layout = gcode.TagLayout.from_angles(
        tag_width, tag_height, [c.angle.delta for c in codes]
    )
    program = gcode.emit_gcode(layout, profile)
    recovered = gcode.angle_estimate(program, layout.boundaries)
    sim_layout = gcode.TagLayout.from_angles(tag_width, tag_height, recovered)

    scenario = make_scenario(
        sim_layout, geometry, nmap, cfg.bits_per_region, seed=seed, **scenario_overrides
    )
    if bank is not None and (
        bank.scenario.ring != scenario.ring
        or bank.scenario.beam != scenario.beam
        or bank.scenario.pattern_samples != scenario.pattern_samples
    ):
        bank = None
    bank = bank or optics._ResponseBank(scenario)
    frames = optics.simulate_swipe(scenario, bank)
    ambient_frame, state_frames = optics.reference_frames(scenario, bank)
    det_cfg = detector.DetectorConfig(
        expected_regions=cfg.n_regions,
        bits_per_region=cfg.bits_per_region,
        threshold=DEFAULT_THRESHOLD,
        use_gray=cfg.use_gray,
    )
    report = detector.segment_and_decode(
        frames, state_frames, ambient_frame, det_cfg, truth=payload
    )
    errors = None
    if report.detection_success:
        errors = sum(a != b for a, b in zip(report.bits, payload))
    return TrialResult(
        detection_success=report.detection_success,
        bit_errors=errors,
        total_bits=cfg.capacity,
        payload=payload,
    )


def shared_bank(
    geometry: DetectionGeometry, nmap: codec.NonlinearMap, cfg: codec.CodecConfig, **overrides
) -> "optics._ResponseBank":
    """Response bank reusable across trials with the same rig."""
    layout = gcode.TagLayout.from_angles(
        DEFAULT_TAG_WIDTH,
        DEFAULT_TAG_HEIGHT,
        [float(nmap.mapped_deltas(cfg.bits_per_region)[0])],
    )
    scenario = make_scenario(layout, geometry, nmap, cfg.bits_per_region, **overrides)
    return optics._ResponseBank(scenario)


def worst_case_adjacent_confusion(values: list[int], m: int) -> tuple[int, int]:
    """Most damaging single-region +-1 state error under plain binary coding.

    Returns (region_index, new_value).  Gray coding loses exactly one bit
    whichever neighbour is hit; plain binary loses up to m bits, so the
    worst case measures the damage bound the Gray map protects against.
    """
    best = None
    for i, v in enumerate(values):
        for cand in (v - 1, v + 1):
            if not 0 <= cand < 2**m:
                continue
            damage = bin(v ^ cand).count("1")
            if best is None or damage > best[2]:
                best = (i, cand, damage)
    assert best is not None
    return best[0], best[1]


def adjacent_confusion_trial(
    seed: int, n_regions: int, m: int
) -> tuple[int, int, int]:
    """One paired injection trial: (gray_bit_errors, binary_bit_errors, total_bits).

    A random payload is encoded region-wise; one region's detected state is
    replaced by its most damaging feasible +-1 neighbour; both codings
    decode the same corrupted state sequence.
    """
    rng = np.random.default_rng([seed, n_regions, m, 0xC0DEC])
    gray_cfg = codec.CodecConfig(n_regions, m, use_gray=True)
    bin_cfg = codec.CodecConfig(n_regions, m, use_gray=False)
    values = list(rng.integers(0, 2**m, n_regions))
    region, new_value = worst_case_adjacent_confusion(values, m)
    corrupted = list(values)
    corrupted[region] = new_value

    gray_tx = codec.values_to_bits(values, gray_cfg)
    gray_rx = codec.values_to_bits(corrupted, gray_cfg)
    bin_tx = codec.values_to_bits(values, bin_cfg)
    bin_rx = codec.values_to_bits(corrupted, bin_cfg)
    gray_err = sum(a != b for a, b in zip(gray_tx, gray_rx))
    bin_err = sum(a != b for a, b in zip(bin_tx, bin_rx))
    return gray_err, bin_err, n_regions * m


SWEEP_VARIABLES = (
    "n_regions",
    "bits_per_region",
    "noise_sigma",
    "region_vs_beam_width",
    "gray_vs_binary",
)


@dataclass
class ExperimentSpec:
    """One sweep: a variable, its values, trials per point, a master seed."""

    variable: str
    values: list[float]
    trials: int = 25
    seed: int = 0
    output: str | Path = "sweep"
    n_regions: int = DEFAULT_N_REGIONS
    bits_per_region: int = DEFAULT_BITS_PER_REGION
    scenario_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(
                f"unknown sweep variable {self.variable!r}; pick one of {SWEEP_VARIABLES}"
            )
        if self.trials < 1:
            raise ValueError("need at least one trial per point")
        if not self.values:
            raise ValueError("need at least one sweep value")


def config_hash(spec: ExperimentSpec) -> str:
    """Digest of the full sweep configuration, recorded in every output row."""
    h = hashlib.sha256()
    parts = [
        spec.variable,
        ",".join(f"{v:g}" for v in spec.values),
        str(spec.trials),
        str(spec.seed),
        str(spec.n_regions),
        str(spec.bits_per_region),
        f"alpha={DEFAULT_ALPHA_DEG};d={DEFAULT_PLANE_DISTANCE};r={DEFAULT_CIRCLE_RADIUS}",
        ";".join(f"{k}={v}" for k, v in sorted(spec.scenario_overrides.items())),
    ]
    h.update("|".join(parts).encode())
    return h.hexdigest()[:12]


def _trial_kwargs(spec: ExperimentSpec, value: float) -> dict:
    kwargs: dict = dict(spec.scenario_overrides)
    n, m = spec.n_regions, spec.bits_per_region
    tag_width = DEFAULT_TAG_WIDTH
    if spec.variable == "n_regions":
        n = int(value)
    elif spec.variable == "bits_per_region":
        m = int(value)
    elif spec.variable == "noise_sigma":
        kwargs["noise_sigma"] = float(value)
    elif spec.variable == "region_vs_beam_width":
        # value is the region width in mm; the tag stretches to fit n regions
        tag_width = float(value) * n
    return {"n": n, "m": m, "tag_width": tag_width, "overrides": kwargs}


def run_sweep(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """Execute a sweep; returns (per-trial rows, per-point aggregate rows).

    Simulation sweeps run the full tag pipeline per trial; the
    gray_vs_binary sweep is the paired worst-case adjacent-confusion
    injection on the codec alone.
    """
    chash = config_hash(spec)
    rows: list[dict] = []
    if spec.variable == "gray_vs_binary":
        for value in spec.values:
            m = int(value)
            for trial in range(spec.trials):
                gray_err, bin_err, total = adjacent_confusion_trial(
                    spec.seed + trial, spec.n_regions, m
                )
                rows.append(
                    {
                        "config_hash": chash,
                        "variable": spec.variable,
                        "value": m,
                        "trial": trial,
                        "seed": spec.seed + trial,
                        "gray_bit_errors": gray_err,
                        "binary_bit_errors": bin_err,
                        "total_bits": total,
                        "gray_ber": gray_err / total,
                        "binary_ber": bin_err / total,
                    }
                )
        aggregates = []
        for value in spec.values:
            sub = [r for r in rows if r["value"] == int(value)]
            gray = sum(r["gray_bit_errors"] for r in sub)
            binary = sum(r["binary_bit_errors"] for r in sub)
            total = sum(r["total_bits"] for r in sub)
            aggregates.append(
                {
                    "config_hash": chash,
                    "variable": spec.variable,
                    "value": int(value),
                    "trials": len(sub),
                    "gray_ber": gray / total,
                    "binary_ber": binary / total,
                    "ber_ratio": (gray / binary) if binary else float("nan"),
                }
            )
        return rows, aggregates

    geometry = default_geometry()
    nmap = cached_map(geometry)
    banks: dict = {}
    for value in spec.values:
        knobs = _trial_kwargs(spec, value)
        cfg = codec.CodecConfig(knobs["n"], knobs["m"], use_gray=True)
        bank_key = tuple(sorted(knobs["overrides"].items()))
        if bank_key not in banks:
            banks[bank_key] = shared_bank(geometry, nmap, cfg, **knobs["overrides"])
        for trial in range(spec.trials):
            trial_seed_seq = np.random.SeedSequence([spec.seed, int(value * 1000), trial])
            rng = np.random.default_rng(trial_seed_seq)
            payload = random_payload(rng, cfg.capacity)
            sim_seed = int(trial_seed_seq.generate_state(1)[0])
            result = run_trial(
                payload,
                cfg,
                geometry,
                nmap,
                seed=sim_seed,
                tag_width=knobs["tag_width"],
                bank=banks[bank_key],
                **knobs["overrides"],
            )
            rows.append(
                {
                    "config_hash": chash,
                    "variable": spec.variable,
                    "value": value,
                    "trial": trial,
                    "seed": sim_seed,
                    "detection_success": int(result.detection_success),
                    "bit_errors": "" if result.bit_errors is None else result.bit_errors,
                    "total_bits": result.total_bits,
                    "ber": ""
                    if result.bit_errors is None
                    else result.bit_errors / result.total_bits,
                }
            )
    aggregates = []
    for value in spec.values:
        sub = [r for r in rows if r["value"] == value]
        det = [r["detection_success"] for r in sub]
        recovered = [
            1.0 - r["bit_errors"] / r["total_bits"] for r in sub if r["bit_errors"] != ""
        ]
        extraction = float(np.mean(recovered)) if recovered else float("nan")
        aggregates.append(
            {
                "config_hash": chash,
                "variable": spec.variable,
                "value": value,
                "trials": len(sub),
                "detection_accuracy": float(np.mean(det)),
                "extraction_accuracy": extraction,
                "mean_ber": 1.0 - extraction if recovered else float("nan"),
            }
        )
    return rows, aggregates


def write_rows(rows: list[dict], path: str | Path, schema: str) -> None:
    """CSV with a schema-version comment header; flushed row by row."""
    if not rows:
        raise ValueError("no rows to write")
    columns = list(rows[0].keys())
    ordered = sorted(rows, key=lambda r: (str(r["value"]), r.get("trial", 0)))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write(",".join(columns) + "\n")
        try:
            for row in ordered:
                fh.write(",".join(str(row[c]) for c in columns) + "\n")
                fh.flush()
        except KeyboardInterrupt:
            fh.flush()
            raise


def sweep_to_files(spec: ExperimentSpec) -> tuple[Path, Path]:
    """Run a sweep and write <output>_trials.csv and <output>_aggregate.csv."""
    rows, aggregates = run_sweep(spec)
    base = Path(spec.output)
    trials_path = base.with_name(base.name + "_trials.csv")
    agg_path = base.with_name(base.name + "_aggregate.csv")
    schema = "paired" if spec.variable == "gray_vs_binary" else "results"
    write_rows(rows, trials_path, f"sweep-{schema} v1")
    write_rows(aggregates, agg_path, f"sweep-{schema}-aggregate v1")
    return trials_path, agg_path
