"""Trip analytics: duration filtering, metric enrichment, distribution tests
and station flow/elevation/temporal tables."""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from .errors import DataError
from .ingestion import BikeModel, DistanceMatrix, Station, Trip
from .stats import TestResult, f_variance_ratio, ks_two_sample, shapiro_wilk, t_test_pooled, t_test_welch

MIN_DURATION_MIN = 2.0
MAX_DURATION_MIN = 60.0


@dataclass(frozen=True)
class TripMetrics:
    """Per-trip duration (min), distance (m), speed (km/h) and elevation (m)."""

    trip: Trip
    duration_min: float
    distance_m: float
    speed_kmh: float
    elevation_m: float


def filter_trips(trips: list[Trip]) -> tuple[list[Trip], float]:
    """Keep trips with duration in [2, 60] minutes (inclusive both ends).

    Returns the retained trips and the retained fraction.
    """
    kept = [t for t in trips if MIN_DURATION_MIN <= t.duration_minutes <= MAX_DURATION_MIN]
    fraction = len(kept) / len(trips) if trips else 0.0
    return kept, fraction


def enrich_trips(
    trips: list[Trip],
    distances: DistanceMatrix,
    stations: dict[str, Station],
) -> tuple[list[TripMetrics], list[tuple[str, str]]]:
    """Attach distance, speed and origin-to-destination elevation to trips.

    Trips whose station pair has no distance entry or whose stations lack
    altitude data are skipped with a (trip_id, reason) diagnostic.
    """
    metrics: list[TripMetrics] = []
    skipped: list[tuple[str, str]] = []
    for trip in trips:
        pair = (trip.start_station, trip.end_station)
        if pair not in distances:
            skipped.append((trip.trip_id, f"no distance for station pair {pair}"))
            continue
        start = stations.get(trip.start_station)
        end = stations.get(trip.end_station)
        if start is None or end is None:
            missing = trip.start_station if start is None else trip.end_station
            skipped.append((trip.trip_id, f"unknown station {missing}"))
            continue
        duration = trip.duration_minutes
        if duration <= 0:
            skipped.append((trip.trip_id, "zero-duration trip, speed undefined"))
            continue
        dist = distances.distance(*pair)
        speed = (dist / 1000.0) / (duration / 60.0)
        metrics.append(
            TripMetrics(trip, duration, dist, speed, end.altitude_m - start.altitude_m)
        )
    return metrics, skipped


@dataclass(frozen=True)
class DistributionComparison:
    """Normality screening of both groups plus the routed two-sample test."""

    normality_a: TestResult
    normality_b: TestResult
    comparison: TestResult

    def to_dict(self) -> dict:
        return {
            "normality_a": self.normality_a.to_dict(),
            "normality_b": self.normality_b.to_dict(),
            "comparison": self.comparison.to_dict(),
        }


def compare_distributions(
    sample_a,
    sample_b,
    n: int = 5000,
    alpha: float = 0.01,
    seed: int | None = None,
) -> DistributionComparison:
    """Subsample both groups, screen for normality, then compare.

    Draws ``n`` values per group without replacement (seeded), runs
    Shapiro-Wilk on each draw, and applies the independent-sample t-test when
    both draws pass the normality screen, otherwise the two-sample
    Kolmogorov-Smirnov test.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    smallest = min(a.size, b.size)
    if smallest < 3:
        raise DataError("compare_distributions needs at least 3 values per group")
    if smallest < n:
        warnings.warn(f"requested {n} draws but smallest group has {smallest}; clamping")
        n = smallest
    rng = np.random.default_rng(seed)
    draw_a = rng.choice(a, size=n, replace=False)
    draw_b = rng.choice(b, size=n, replace=False)

    norm_a = shapiro_wilk(draw_a, alpha=alpha)
    norm_b = shapiro_wilk(draw_b, alpha=alpha)
    both_normal = not norm_a.significant and not norm_b.significant
    if both_normal:
        comparison = t_test_pooled(draw_a, draw_b, alpha=alpha)
    else:
        comparison = ks_two_sample(draw_a, draw_b, alpha=alpha)
    return DistributionComparison(norm_a, norm_b, comparison)


def mean_comparison(sample_a, sample_b, alpha: float = 0.05) -> TestResult:
    """Compare means: pooled t-test under equal variances, else Welch.

    Variance equality is pretested with a two-sided F ratio at alpha=0.05.
    """
    pretest = f_variance_ratio(sample_a, sample_b, alpha=0.05)
    if pretest.significant:
        return t_test_welch(sample_a, sample_b, alpha=alpha)
    return t_test_pooled(sample_a, sample_b, alpha=alpha)


@dataclass(frozen=True)
class StationFlow:
    """Per-station flow percentages by bike model plus the derived differences.

    Percentages are None when the station has no traffic in that direction.
    """

    station_id: str
    n_incoming: int
    n_outgoing: int
    incoming_pct: dict[BikeModel, float | None]
    outgoing_pct: dict[BikeModel, float | None]

    @property
    def e_minus_m_incoming(self) -> float | None:
        if self.incoming_pct[BikeModel.ELECTRIC] is None:
            return None
        return self.incoming_pct[BikeModel.ELECTRIC] - self.incoming_pct[BikeModel.MECHANICAL]

    @property
    def e_minus_m_outgoing(self) -> float | None:
        if self.outgoing_pct[BikeModel.ELECTRIC] is None:
            return None
        return self.outgoing_pct[BikeModel.ELECTRIC] - self.outgoing_pct[BikeModel.MECHANICAL]

    def in_minus_out(self, model: BikeModel) -> float | None:
        pct_in = self.incoming_pct[model]
        pct_out = self.outgoing_pct[model]
        if pct_in is None or pct_out is None:
            return None
        return pct_in - pct_out


@dataclass(frozen=True)
class FlowTable:
    rows: dict[str, StationFlow]
    bucket_label: str | None = None


def _trip_station_pair(item) -> tuple[str, str, BikeModel]:
    trip = item.trip if isinstance(item, TripMetrics) else item
    return trip.start_station, trip.end_station, trip.bike_model


def station_flows(trips, stations: dict[str, Station], bucket_label: str | None = None) -> FlowTable:
    """Per-station, per-model incoming/outgoing trip percentages.

    Accepts raw trips or enriched metrics. Stations with no traffic in a
    direction get explicit None percentages.
    """
    incoming: dict[str, dict[BikeModel, int]] = defaultdict(lambda: defaultdict(int))
    outgoing: dict[str, dict[BikeModel, int]] = defaultdict(lambda: defaultdict(int))
    for item in trips:
        start, end, model = _trip_station_pair(item)
        outgoing[start][model] += 1
        incoming[end][model] += 1

    rows = {}
    for sid in stations:
        n_in = sum(incoming[sid].values()) if sid in incoming else 0
        n_out = sum(outgoing[sid].values()) if sid in outgoing else 0
        in_pct = {}
        out_pct = {}
        for model in BikeModel:
            in_pct[model] = 100.0 * incoming[sid][model] / n_in if n_in else None
            out_pct[model] = 100.0 * outgoing[sid][model] / n_out if n_out else None
        rows[sid] = StationFlow(sid, n_in, n_out, in_pct, out_pct)
    return FlowTable(rows, bucket_label)


def _validate_buckets(buckets):
    cleaned = []
    for lo, hi in buckets:
        lo = float(lo)
        hi = float(hi)
        if not lo < hi:
            raise DataError(f"empty elevation bucket [{lo}, {hi})")
        cleaned.append((lo, hi))
    ordered = sorted(cleaned)
    for (lo1, hi1), (lo2, hi2) in zip(ordered, ordered[1:]):
        if lo2 < hi1:
            raise DataError(f"overlapping elevation buckets [{lo1}, {hi1}) and [{lo2}, {hi2})")
    return cleaned


def elevation_flows(
    metrics: list[TripMetrics],
    stations: dict[str, Station],
    buckets: list[tuple[float, float]],
) -> list[FlowTable]:
    """Partition enriched trips by half-open elevation interval [lo, hi) and
    compute station flows inside each bucket."""
    cleaned = _validate_buckets(buckets)
    tables = []
    for lo, hi in cleaned:
        subset = [m for m in metrics if lo <= m.elevation_m < hi]
        hi_label = "inf" if math.isinf(hi) else f"{hi:g}"
        tables.append(station_flows(subset, stations, bucket_label=f"[{lo:g},{hi_label})"))
    return tables


@dataclass(frozen=True)
class TemporalProfile:
    """Weekday-by-hour trip count statistics plus fleet usage series.

    ``hour_mean``/``hour_std`` are 7x24 (Monday=0) averages over every
    calendar date of that weekday in the observed range, zero-count days
    included. ``weekly_totals`` maps model -> {(iso_year, iso_week): trips}.
    ``trips_per_bike`` maps model -> {date: trips / distinct active bikes}.
    """

    hour_mean: np.ndarray
    hour_std: np.ndarray
    weekly_totals: dict[BikeModel, dict[tuple[int, int], int]]
    trips_per_bike: dict[BikeModel, dict[object, float]]


def temporal_profile(trips: list[Trip]) -> TemporalProfile:
    if not trips:
        raise DataError("temporal_profile needs at least one trip")
    dates = [t.start_time.date() for t in trips]
    first, last = min(dates), max(dates)
    n_days = (last - first).days + 1
    all_dates = [first + timedelta(days=i) for i in range(n_days)]

    counts: dict[object, np.ndarray] = {d: np.zeros(24) for d in all_dates}
    weekly: dict[BikeModel, dict[tuple[int, int], int]] = {m: defaultdict(int) for m in BikeModel}
    per_day_model: dict[BikeModel, dict[object, int]] = {m: defaultdict(int) for m in BikeModel}
    bikes_per_day: dict[BikeModel, dict[object, set]] = {m: defaultdict(set) for m in BikeModel}

    for trip in trips:
        day = trip.start_time.date()
        counts[day][trip.start_time.hour] += 1
        iso = day.isocalendar()
        weekly[trip.bike_model][(iso[0], iso[1])] += 1
        per_day_model[trip.bike_model][day] += 1
        bikes_per_day[trip.bike_model][day].add(trip.bike_id)

    hour_mean = np.zeros((7, 24))
    hour_std = np.zeros((7, 24))
    for weekday in range(7):
        day_rows = [counts[d] for d in all_dates if d.weekday() == weekday]
        if day_rows:
            stacked = np.vstack(day_rows)
            hour_mean[weekday] = stacked.mean(axis=0)
            hour_std[weekday] = stacked.std(axis=0)

    trips_per_bike = {
        model: {
            day: per_day_model[model][day] / len(bikes)
            for day, bikes in bikes_per_day[model].items()
        }
        for model in BikeModel
    }
    weekly_plain = {model: dict(table) for model, table in weekly.items()}
    return TemporalProfile(hour_mean, hour_std, weekly_plain, trips_per_bike)


def flow_table_csv_rows(table: FlowTable) -> list[list]:
    """Flatten a FlowTable for CSV output; None percentages become empty cells."""
    header = [
        "station_id",
        "bucket",
        "n_incoming",
        "n_outgoing",
        "incoming_pct_m",
        "incoming_pct_e",
        "outgoing_pct_m",
        "outgoing_pct_e",
        "e_minus_m_incoming",
        "e_minus_m_outgoing",
        "in_minus_out_m",
        "in_minus_out_e",
    ]
    rows = [header]

    def cell(value):
        return "" if value is None else f"{value:.6f}"

    for sid in sorted(table.rows):
        flow = table.rows[sid]
        rows.append(
            [
                sid,
                table.bucket_label or "all",
                flow.n_incoming,
                flow.n_outgoing,
                cell(flow.incoming_pct[BikeModel.MECHANICAL]),
                cell(flow.incoming_pct[BikeModel.ELECTRIC]),
                cell(flow.outgoing_pct[BikeModel.MECHANICAL]),
                cell(flow.outgoing_pct[BikeModel.ELECTRIC]),
                cell(flow.e_minus_m_incoming),
                cell(flow.e_minus_m_outgoing),
                cell(flow.in_minus_out(BikeModel.MECHANICAL)),
                cell(flow.in_minus_out(BikeModel.ELECTRIC)),
            ]
        )
    return rows
