"""OBD/GPS stream fusion into a 1 Hz vehicle trace.

The OBD stream carries speed and electrical channels on a relative clock;
the GPS stream carries position on UTC. Both are resampled onto an integer
1 Hz grid, synchronized by cross-correlating their speed channels, and
joined per second. Speed and propulsion power come from OBD (the benchmark
channel), position and elevation from GPS.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateDenominatorError,
    DegenerateSignalError,
    EmptyInputError,
    InsufficientOverlapError,
    NoOverlapError,
    SchemaViolationError,
)

DRIVE_MODES = ("normal", "eco")

OBD_HEADER = ["t_rel_s", "speed_mph", "current_a", "voltage_v", "ac_power_w", "acc_power_w"]
GPS_HEADER = ["t_utc_ms", "lat_deg", "lon_deg", "elevation_m", "speed_mph"]
FUSED_HEADER = ["trip_id", "mode", "t_utc_s", "speed_mph", "p_prop_w", "lat_deg", "lon_deg", "elevation_m"]

# Longest run of empty grid seconds bridged by interpolation; larger gaps
# split the stream into separate segments instead of fabricating data.
MAX_INTERP_GAP_S = 2

DEFAULT_MAX_LAG_S = 120
MIN_FUSED_OVERLAP_S = 60


@dataclass(frozen=True)
class ObdSample:
    """One on-board diagnostics record on the run-relative clock.

    Battery current is signed: positive while the pack charges, negative
    while it discharges.
    """

    t_rel: float
    speed: float
    current: float
    voltage: float
    ac_power: float
    acc_power: float

    def __post_init__(self) -> None:
        if self.voltage <= 0:
            raise ValueError(f"voltage must be positive, got {self.voltage}")
        if self.speed < 0:
            raise ValueError(f"speed must be non-negative, got {self.speed}")


@dataclass(frozen=True)
class GpsSample:
    """One GPS logger record; ``t_utc`` is milliseconds since the epoch."""

    t_utc: float
    lat: float
    lon: float
    elevation: float
    speed: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class TraceSample:
    """One fused sample on the integer UTC 1 Hz grid."""

    t_utc: int
    speed: float
    p_prop: float
    lat: float
    lon: float
    elevation: float

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError(f"speed must be non-negative, got {self.speed}")


@dataclass(frozen=True)
class FusedTrace:
    """A fused 1 Hz trip trace with its drive-mode label."""

    trip_id: str
    mode: str
    samples: tuple[TraceSample, ...]

    def __post_init__(self) -> None:
        if self.mode not in DRIVE_MODES:
            raise ValueError(f"mode must be one of {DRIVE_MODES}, got {self.mode!r}")
        if not self.samples:
            raise ValueError("fused trace must contain at least one sample")
        times = [s.t_utc for s in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("fused trace samples must be strictly time-ordered")


def compute_propulsion_power(s: ObdSample) -> float:
    """Net propulsion power in watts; negative while regenerating.

    Discharge current is negative, so the battery term is negated to make
    power delivered to the drivetrain positive, then A/C and accessory
    loads are removed.
    """
    return -(s.current * s.voltage) - (s.ac_power + s.acc_power)


GridSegment = list[tuple[int, tuple[float, ...]]]


def resample_to_1hz(stream: Sequence[tuple[float, tuple[float, ...]]]) -> list[GridSegment]:
    """Average a time-ordered stream onto the integer 1 Hz grid.

    Every grid second covered by input samples gets their per-channel
    arithmetic mean. Runs of at most ``MAX_INTERP_GAP_S - 1`` empty seconds
    are filled by linear interpolation; longer gaps split the output into
    separate contiguous segments.
    """
    if len(stream) < 2:
        raise EmptyInputError(f"resampling needs at least 2 samples, got {len(stream)}")

    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    prev_t = -math.inf
    for t, values in stream:
        if t < prev_t:
            raise ValueError("stream timestamps must be non-decreasing")
        prev_t = t
        second = math.floor(t)
        vec = np.asarray(values, dtype=float)
        if second in sums:
            sums[second] += vec
            counts[second] += 1
        else:
            sums[second] = vec.copy()
            counts[second] = 1

    occupied = sorted(sums)
    means = {t: sums[t] / counts[t] for t in occupied}

    segments: list[GridSegment] = []
    current: GridSegment = [(occupied[0], tuple(means[occupied[0]]))]
    for prev, nxt in zip(occupied, occupied[1:]):
        gap = nxt - prev
        if gap > MAX_INTERP_GAP_S:
            segments.append(current)
            current = []
        else:
            for missing in range(prev + 1, nxt):
                frac = (missing - prev) / gap
                filled = means[prev] + frac * (means[nxt] - means[prev])
                current.append((missing, tuple(filled)))
        current.append((nxt, tuple(means[nxt])))
    segments.append(current)
    return segments


def align_by_cross_correlation(
    obd_speed: Sequence[float],
    gps_speed: Sequence[float],
    max_lag: int,
) -> int:
    """Integer lag (s) between the OBD-relative clock and the GPS UTC origin.

    A positive result means the OBD stream started that many seconds after
    the GPS stream, i.e. ``obd[j]`` lines up with ``gps[j + lag]``. The lag
    maximizing the Pearson correlation of the overlapping windows wins;
    ties go to the smallest ``abs(lag)``, then to the smaller signed lag.
    """
    if max_lag <= 0:
        raise ValueError(f"max_lag must be positive, got {max_lag}")
    a = np.asarray(obd_speed, dtype=float)
    b = np.asarray(gps_speed, dtype=float)
    needed = 2 * max_lag + 10
    if len(a) < needed or len(b) < needed:
        raise InsufficientOverlapError(
            f"series of {len(a)} and {len(b)} samples cannot support max_lag={max_lag} "
            f"(need >= {needed} each)"
        )
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateSignalError("cannot align zero-variance speed series")

    best_lag = 0
    best_key: tuple[float, int, int] | None = None
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            n = min(len(a), len(b) - lag)
            wa, wb = a[:n], b[lag : lag + n]
        else:
            n = min(len(a) + lag, len(b))
            wa, wb = a[-lag : -lag + n], b[:n]
        if n < 2:
            continue
        da = wa - wa.mean()
        db = wb - wb.mean()
        denom = math.sqrt(float(da @ da) * float(db @ db))
        r = float(da @ db) / denom if denom > 0 else -math.inf
        key = (r, -abs(lag), -lag)
        if best_key is None or key > best_key:
            best_key = key
            best_lag = lag
    return best_lag


def fuse(
    obd: Sequence[ObdSample],
    gps: Sequence[GpsSample],
    trip_id: str = "trip",
    mode: str = "normal",
    max_lag: int = DEFAULT_MAX_LAG_S,
) -> FusedTrace:
    """Resample, align, and join the two streams into one 1 Hz trace.

    Propulsion power is computed per raw OBD sample before averaging so
    the 1 Hz power preserves the energy integral of the high-rate stream.
    """
    if len(obd) < 2:
        raise EmptyInputError(f"OBD stream has {len(obd)} samples, need at least 2")
    if len(gps) < 2:
        raise EmptyInputError(f"GPS stream has {len(gps)} samples, need at least 2")

    obd_segments = resample_to_1hz(
        [(s.t_rel, (s.speed, compute_propulsion_power(s))) for s in obd]
    )
    gps_segments = resample_to_1hz(
        [(s.t_utc / 1000.0, (s.lat, s.lon, s.elevation, s.speed)) for s in gps]
    )

    obd_ref = max(obd_segments, key=len)
    gps_ref = max(gps_segments, key=len)
    # Shrink the search window for short traces so alignment stays legal.
    effective_lag = min(max_lag, (min(len(obd_ref), len(gps_ref)) - 10) // 2)
    if effective_lag < 1:
        raise InsufficientOverlapError(
            f"segments of {len(obd_ref)} and {len(gps_ref)} 1 Hz samples are too "
            "short to align"
        )
    lag = align_by_cross_correlation(
        [v[0] for _, v in obd_ref], [v[3] for _, v in gps_ref], effective_lag
    )

    # obd_ref[j] lines up with gps_ref[j + lag]; turn that into a UTC offset
    # for the whole OBD clock.
    offset = gps_ref[0][0] + lag - obd_ref[0][0]

    obd_by_utc = {t + offset: v for seg in obd_segments for t, v in seg}
    gps_by_utc = {t: v for seg in gps_segments for t, v in seg}
    shared = sorted(obd_by_utc.keys() & gps_by_utc.keys())
    if len(shared) < MIN_FUSED_OVERLAP_S:
        raise NoOverlapError(
            f"streams overlap for {len(shared)} s after alignment, "
            f"need >= {MIN_FUSED_OVERLAP_S} s"
        )

    samples = []
    for t in shared:
        speed, p_prop = obd_by_utc[t]
        lat, lon, elevation, _ = gps_by_utc[t]
        samples.append(
            TraceSample(
                t_utc=t,
                speed=max(speed, 0.0),
                p_prop=p_prop,
                lat=lat,
                lon=lon,
                elevation=elevation,
            )
        )
    return FusedTrace(trip_id=trip_id, mode=mode, samples=tuple(samples))


def smape(reference: Sequence[float], evaluated: Sequence[float]) -> float:
    """Symmetric mean absolute percentage error, in percent.

    ``100 * sum|F - A| / sum(A + F)`` over the paired series; symmetric in
    its arguments and bounded to [0, 100] for non-negative inputs.
    """
    a = np.asarray(reference, dtype=float)
    f = np.asarray(evaluated, dtype=float)
    if len(a) != len(f):
        raise ValueError(f"series lengths differ: {len(a)} vs {len(f)}")
    if len(a) == 0:
        raise EmptyInputError("smape needs at least one sample")
    if (a < 0).any() or (f < 0).any():
        raise ValueError("smape requires non-negative series")
    denom = float((a + f).sum())
    if denom == 0:
        raise DegenerateDenominatorError("both series sum to zero")
    return 100.0 * float(np.abs(f - a).sum()) / denom


def _read_csv_rows(path: Path | str, header: list[str]) -> Iterable[list[str]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        if first != header:
            raise SchemaViolationError(
                f"{path}: expected header {','.join(header)!r}, got {','.join(first)!r}"
            )
        yield from reader


def read_obd_csv(path: Path | str) -> list[ObdSample]:
    """Load an OBD stream file, enforcing the non-decreasing clock."""
    samples = []
    prev_t = -math.inf
    for i, row in enumerate(_read_csv_rows(path, OBD_HEADER), start=2):
        try:
            s = ObdSample(*(float(x) for x in row))
        except (TypeError, ValueError) as exc:
            raise SchemaViolationError(f"{path}:{i}: {exc}") from exc
        if s.t_rel < prev_t:
            raise SchemaViolationError(f"{path}:{i}: t_rel_s went backwards")
        prev_t = s.t_rel
        samples.append(s)
    return samples


def read_gps_csv(path: Path | str) -> list[GpsSample]:
    """Load a GPS stream file, enforcing the strictly increasing clock."""
    samples = []
    prev_t = -math.inf
    for i, row in enumerate(_read_csv_rows(path, GPS_HEADER), start=2):
        try:
            s = GpsSample(*(float(x) for x in row))
        except (TypeError, ValueError) as exc:
            raise SchemaViolationError(f"{path}:{i}: {exc}") from exc
        if s.t_utc <= prev_t:
            raise SchemaViolationError(f"{path}:{i}: t_utc_ms must be strictly increasing")
        prev_t = s.t_utc
        samples.append(s)
    return samples


def write_fused_csv(traces: Iterable[FusedTrace], path: Path | str) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FUSED_HEADER)
        for trace in traces:
            for s in trace.samples:
                writer.writerow(
                    [trace.trip_id, trace.mode, s.t_utc, repr(s.speed), repr(s.p_prop),
                     repr(s.lat), repr(s.lon), repr(s.elevation)]
                )


def read_fused_csv(path: Path | str) -> list[FusedTrace]:
    """Load fused traces, grouped by trip id in order of first appearance."""
    groups: dict[tuple[str, str], list[TraceSample]] = {}
    for i, row in enumerate(_read_csv_rows(path, FUSED_HEADER), start=2):
        try:
            trip_id, mode = row[0], row[1]
            sample = TraceSample(
                t_utc=int(row[2]),
                speed=float(row[3]),
                p_prop=float(row[4]),
                lat=float(row[5]),
                lon=float(row[6]),
                elevation=float(row[7]),
            )
        except (IndexError, ValueError) as exc:
            raise SchemaViolationError(f"{path}:{i}: {exc}") from exc
        groups.setdefault((trip_id, mode), []).append(sample)
    if not groups:
        raise EmptyInputError(f"{path}: no samples")
    return [
        FusedTrace(trip_id=trip_id, mode=mode, samples=tuple(samples))
        for (trip_id, mode), samples in groups.items()
    ]
