"""Trace decoding: correlation against reference frames and segmentation.

Each frame is scored against the per-state reference frames by Pearson
correlation of the ambient-subtracted vectors; the frame is accepted as
the best-scoring state only when that score clears the threshold,
otherwise it is invalid.  Boundary material between regions scatters the
beam, so boundary crossings show up as invalid stretches; maximal runs of
one valid state between them become the decoded regions.  Decoding
succeeds only when the region count matches the expected format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codec

INVALID = -1


@dataclass(frozen=True)
class DetectorConfig:
    """Decoder knobs: acceptance threshold, debounce, expected format."""

    expected_regions: int
    bits_per_region: int
    threshold: float = 0.9
    debounce_frames: int = 3
    use_gray: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.debounce_frames < 1:
            raise ValueError("debounce must be at least one frame")

    @property
    def codec_config(self) -> codec.CodecConfig:
        return codec.CodecConfig(
            n_regions=self.expected_regions,
            bits_per_region=self.bits_per_region,
            use_gray=self.use_gray,
        )


@dataclass(frozen=True, eq=False)
class DetectionReport:
    """Outcome of decoding one trace."""

    bits: str
    region_states: list[int]
    similarities: np.ndarray  # (frames, states)
    frame_states: np.ndarray  # per-frame classification, INVALID = -1
    detection_success: bool
    ber: float | None  # vs ground truth; None without truth or on failure


def _as_array(frame) -> np.ndarray:
    values = getattr(frame, "values", frame)
    return np.asarray(values, dtype=float)


def similarity(frame, reference, ambient) -> float:
    """Pearson correlation of the ambient-subtracted frame and reference.

    Constant (zero-variance) inputs never match anything: the similarity is
    defined as 0 for them, so ambient-only frames always come out invalid.
    """
    x = _as_array(frame) - _as_array(ambient)
    y = _as_array(reference) - _as_array(ambient)
    if x.shape != y.shape:
        raise ValueError(f"channel count mismatch: {x.shape} vs {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.linalg.norm(xc) * np.linalg.norm(yc)
    if denom == 0.0:
        return 0.0
    return float(np.clip(xc @ yc / denom, -1.0, 1.0))


def similarity_matrix(frames: np.ndarray, references: np.ndarray, ambient: np.ndarray) -> np.ndarray:
    """(frames, states) similarity table; zero rows/columns score 0."""
    x = np.asarray(frames, dtype=float) - np.asarray(ambient, dtype=float)[None, :]
    y = np.asarray(references, dtype=float) - np.asarray(ambient, dtype=float)[None, :]
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    xn = np.linalg.norm(xc, axis=1)
    yn = np.linalg.norm(yc, axis=1)
    sims = np.zeros((len(x), len(y)))
    ok = xn > 0
    good_refs = yn > 0
    if np.any(ok) and np.any(good_refs):
        sims[np.ix_(ok, good_refs)] = (
            xc[ok] @ yc[good_refs].T / np.outer(xn[ok], yn[good_refs])
        )
    return np.clip(sims, -1.0, 1.0)


def classify_frame(frame, references, ambient, cfg: DetectorConfig) -> int:
    """Best-matching state index, or INVALID when nothing clears the threshold.

    Ties break toward the lower state index (argmax convention).
    """
    if len(references) < 2:
        raise ValueError("need at least two reference states")
    sims = np.array([similarity(frame, ref, ambient) for ref in references])
    if sims.max() > cfg.threshold:
        return int(np.argmax(sims))
    return INVALID


def _classify_all(trace, references, ambient, cfg) -> tuple[np.ndarray, np.ndarray]:
    frames = np.stack([_as_array(f) for f in trace])
    refs = np.stack([_as_array(r) for r in references])
    sims = similarity_matrix(frames, refs, _as_array(ambient))
    states = np.where(sims.max(axis=1) > cfg.threshold, sims.argmax(axis=1), INVALID)
    return sims, states


def _segment(states: np.ndarray, debounce: int) -> list[int]:
    """Region states from per-frame classifications.

    Maximal runs of one valid state are candidate regions; runs shorter
    than the debounce are dropped, and surviving same-state neighbours are
    rejoined when no invalid frame lies between them (they were split only
    by a dropped glitch, not by a boundary).
    """
    runs: list[list[int]] = []  # [state, start, end]
    i = 0
    n = len(states)
    while i < n:
        s = states[i]
        if s == INVALID:
            i += 1
            continue
        j = i
        while j + 1 < n and states[j + 1] == s:
            j += 1
        runs.append([int(s), i, j])
        i = j + 1
    kept = [r for r in runs if r[2] - r[1] + 1 >= debounce]
    merged: list[list[int]] = []
    for run in kept:
        if (
            merged
            and merged[-1][0] == run[0]
            and not np.any(states[merged[-1][2] + 1 : run[1]] == INVALID)
        ):
            merged[-1][2] = run[2]
        else:
            merged.append(run)
    return [r[0] for r in merged]


def segment_and_decode(
    trace,
    references,
    ambient,
    cfg: DetectorConfig,
    truth: str | None = None,
) -> DetectionReport:
    """Classify every frame, group runs into regions, decode the bitstream.

    Detection succeeds only when exactly the expected number of regions is
    recovered; failures are reported, not raised.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    sims, states = _classify_all(trace, references, ambient, cfg)
    region_states = _segment(states, cfg.debounce_frames)
    success = len(region_states) == cfg.expected_regions
    bits = codec.decode(region_states, cfg.codec_config) if success else ""
    ber = None
    if truth is not None and success:
        if len(truth) != len(bits):
            raise ValueError("ground truth length does not match the format")
        errors = sum(a != b for a, b in zip(bits, truth))
        ber = errors / len(truth)
    return DetectionReport(
        bits=bits,
        region_states=region_states,
        similarities=sims,
        frame_states=states,
        detection_success=success,
        ber=ber,
    )


def evaluate(reports: list[DetectionReport], truths: list[str]) -> dict:
    """Detection accuracy, extraction accuracy, and bit error rate.

    Extraction accuracy is the mean bit recovery rate over the successful
    detections only; it is NaN when nothing was detected.
    """
    if not reports:
        raise ValueError("no reports to evaluate")
    if len(reports) != len(truths):
        raise ValueError("reports and ground truths must pair up")
    successes = 0
    recovery = []
    for report, truth in zip(reports, truths):
        if not report.detection_success:
            continue
        successes += 1
        errors = sum(a != b for a, b in zip(report.bits, truth))
        recovery.append(1.0 - errors / len(truth))
    detection_accuracy = successes / len(reports)
    extraction_accuracy = float(np.mean(recovery)) if recovery else float("nan")
    return {
        "detection_accuracy": detection_accuracy,
        "extraction_accuracy": extraction_accuracy,
        "ber": 1.0 - extraction_accuracy if recovery else float("nan"),
    }
