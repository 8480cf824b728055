"""Parsers and lookup providers for the five input file types.

All files are UTF-8 CSV with one header row (see the per-loader schemas).
Row-level problems are collected as line-numbered diagnostics instead of
aborting; a configurable reject-rate threshold guards against wholesale
garbage. Timestamps are ISO-8601, interpreted as UTC.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import DataError

TRIPS_HEADER = [
    "trip_id",
    "bike_id",
    "bike_model",
    "user_id",
    "start_station",
    "end_station",
    "start_time",
    "end_time",
]
STATIONS_HEADER = ["station_id", "lat", "lon", "altitude_m"]
MAINTENANCE_HEADER = ["mo_id", "date", "category", "subcategory", "bike_id", "bike_model"]
DISTANCES_HEADER = ["origin_station", "dest_station", "distance_m"]
WEATHER_HEADER = ["date", "temp_c", "precip_mm", "wind_dir_deg", "wind_speed_kmh", "pressure_hpa"]

DEFAULT_REJECT_THRESHOLD = 0.05


class BikeModel(Enum):
    MECHANICAL = "M"
    ELECTRIC = "E"

    @classmethod
    def from_token(cls, token: str) -> "BikeModel":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"bike_model must be 'M' or 'E', got {token!r}") from None


@dataclass(frozen=True)
class Trip:
    trip_id: str
    bike_id: str
    bike_model: BikeModel
    user_id: str
    start_station: str
    end_station: str
    start_time: datetime
    end_time: datetime

    @property
    def duration_minutes(self) -> float:
        return (self.end_time - self.start_time).total_seconds() / 60.0


@dataclass(frozen=True)
class Station:
    station_id: str
    lat: float
    lon: float
    altitude_m: float


@dataclass(frozen=True)
class MaintenanceOp:
    mo_id: str
    date: date
    category: str
    subcategory: str
    bike_id: str
    bike_model: BikeModel


class DistanceMatrix:
    """Directed shortest-path distances between stations, in meters."""

    def __init__(self, entries: dict[tuple[str, str], float]):
        self._entries = dict(entries)

    def distance(self, origin: str, dest: str) -> float:
        try:
            return self._entries[(origin, dest)]
        except KeyError:
            raise DataError(f"no distance entry for station pair ({origin}, {dest})") from None

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def pairs(self) -> Iterable[tuple[str, str]]:
        return self._entries.keys()


@dataclass(frozen=True)
class WeatherDay:
    date: date
    temp_c: float
    precip_mm: float
    wind_dir_deg: float
    wind_speed_kmh: float
    pressure_hpa: float


class WeatherSeries:
    """One weather row per calendar date, gap-free inside its range."""

    def __init__(self, days: list[WeatherDay]):
        days = sorted(days, key=lambda d: d.date)
        if not days:
            raise DataError("weather series is empty")
        seen: dict[date, WeatherDay] = {}
        for day in days:
            if day.date in seen:
                raise DataError(f"duplicate weather date {day.date.isoformat()}")
            seen[day.date] = day
        gaps = []
        cursor = days[0].date
        while cursor <= days[-1].date:
            if cursor not in seen:
                gaps.append(cursor.isoformat())
            cursor += timedelta(days=1)
        if gaps:
            raise DataError("weather gap on date(s): " + ", ".join(gaps))
        self._by_date = seen
        self.first_date = days[0].date
        self.last_date = days[-1].date

    def day(self, when: date) -> WeatherDay:
        try:
            return self._by_date[when]
        except KeyError:
            raise DataError(f"no weather row for {when.isoformat()}") from None

    def __len__(self) -> int:
        return len(self._by_date)


@dataclass
class LoadReport:
    """Parse outcome: rows become records or line-numbered diagnostics."""

    parsed: int
    rejects: list[tuple[int, str]]

    @property
    def reject_count(self) -> int:
        return len(self.rejects)


def _open_rows(path, expected_header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file, expected header {','.join(expected_header)}")
    if rows[0] != expected_header:
        raise DataError(
            f"{path}: malformed header {','.join(rows[0])!r}, "
            f"expected {','.join(expected_header)!r}"
        )
    return rows[1:]


def _check_reject_rate(path, n_rows, rejects, threshold):
    if n_rows and len(rejects) / n_rows > threshold:
        examples = "; ".join(f"line {ln}: {msg}" for ln, msg in rejects[:5])
        raise DataError(
            f"{path}: {len(rejects)}/{n_rows} rows rejected exceeds "
            f"threshold {threshold:.0%} ({examples})"
        )


def _parse_timestamp(token: str) -> datetime:
    ts = datetime.fromisoformat(token)
    if ts.tzinfo is not None:
        ts = ts.replace(tzinfo=None)
    return ts


def load_trips(path, reject_threshold: float = DEFAULT_REJECT_THRESHOLD):
    """Parse trips.csv into (list[Trip], LoadReport)."""
    rows = _open_rows(path, TRIPS_HEADER)
    trips: list[Trip] = []
    rejects: list[tuple[int, str]] = []
    for line_no, row in enumerate(rows, start=2):
        if len(row) != len(TRIPS_HEADER):
            rejects.append((line_no, f"expected {len(TRIPS_HEADER)} fields, got {len(row)}"))
            continue
        trip_id, bike_id, model_tok, user_id, s_start, s_end, t_start, t_end = row
        try:
            model = BikeModel.from_token(model_tok)
            start_time = _parse_timestamp(t_start)
            end_time = _parse_timestamp(t_end)
        except ValueError as exc:
            rejects.append((line_no, str(exc)))
            continue
        if end_time < start_time:
            rejects.append((line_no, f"trip {trip_id}: end_time precedes start_time"))
            continue
        if not s_start or not s_end:
            rejects.append((line_no, f"trip {trip_id}: missing station id"))
            continue
        trips.append(
            Trip(trip_id, bike_id, model, user_id, s_start, s_end, start_time, end_time)
        )
    _check_reject_rate(path, len(rows), rejects, reject_threshold)
    return trips, LoadReport(len(trips), rejects)


def load_maintenance(path, reject_threshold: float = DEFAULT_REJECT_THRESHOLD):
    """Parse maintenance.csv into (list[MaintenanceOp], LoadReport).

    Duplicate mo_id is a hard error. Per-(category, subcategory) counts are
    available via :func:`maintenance_counts`.
    """
    rows = _open_rows(path, MAINTENANCE_HEADER)
    if not rows:
        warnings.warn(f"{path}: no maintenance rows")
    ops: list[MaintenanceOp] = []
    rejects: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    for line_no, row in enumerate(rows, start=2):
        if len(row) != len(MAINTENANCE_HEADER):
            rejects.append((line_no, f"expected {len(MAINTENANCE_HEADER)} fields, got {len(row)}"))
            continue
        mo_id, date_tok, category, subcategory, bike_id, model_tok = row
        if mo_id in seen_ids:
            raise DataError(f"{path}: duplicate mo_id {mo_id!r} at line {line_no}")
        try:
            when = date.fromisoformat(date_tok)
            model = BikeModel.from_token(model_tok)
        except ValueError as exc:
            rejects.append((line_no, str(exc)))
            continue
        seen_ids.add(mo_id)
        ops.append(MaintenanceOp(mo_id, when, category, subcategory, bike_id, model))
    _check_reject_rate(path, len(rows), rejects, reject_threshold)
    return ops, LoadReport(len(ops), rejects)


def maintenance_counts(ops: Iterable[MaintenanceOp]) -> Counter:
    """Counts per (category, subcategory), the tabular mirror of the MO panels."""
    return Counter((op.category, op.subcategory) for op in ops)


def load_providers(stations_path, distances_path, weather_path):
    """Build the three lookup providers: station table, distances, weather.

    Every station referenced by a distance row must exist in the station
    table; the weather series must have no interior date gaps.
    """
    stations: dict[str, Station] = {}
    for line_no, row in enumerate(_open_rows(stations_path, STATIONS_HEADER), start=2):
        if len(row) != len(STATIONS_HEADER):
            raise DataError(f"{stations_path}: line {line_no}: bad field count")
        sid, lat_tok, lon_tok, alt_tok = row
        try:
            lat, lon, alt = float(lat_tok), float(lon_tok), float(alt_tok)
        except ValueError:
            raise DataError(f"{stations_path}: line {line_no}: non-numeric value") from None
        if not math.isfinite(alt):
            raise DataError(f"{stations_path}: line {line_no}: non-finite altitude")
        if sid in stations:
            raise DataError(f"{stations_path}: duplicate station_id {sid!r}")
        stations[sid] = Station(sid, lat, lon, alt)

    entries: dict[tuple[str, str], float] = {}
    for line_no, row in enumerate(_open_rows(distances_path, DISTANCES_HEADER), start=2):
        if len(row) != len(DISTANCES_HEADER):
            raise DataError(f"{distances_path}: line {line_no}: bad field count")
        origin, dest, dist_tok = row
        for sid in (origin, dest):
            if sid not in stations:
                raise DataError(f"undefined station {sid}")
        try:
            dist = float(dist_tok)
        except ValueError:
            raise DataError(f"{distances_path}: line {line_no}: non-numeric distance") from None
        if dist <= 0:
            raise DataError(
                f"{distances_path}: line {line_no}: distance must be > 0, got {dist}"
            )
        entries[(origin, dest)] = dist

    weather_days = []
    for line_no, row in enumerate(_open_rows(weather_path, WEATHER_HEADER), start=2):
        if len(row) != len(WEATHER_HEADER):
            raise DataError(f"{weather_path}: line {line_no}: bad field count")
        try:
            weather_days.append(
                WeatherDay(date.fromisoformat(row[0]), *(float(tok) for tok in row[1:]))
            )
        except ValueError:
            raise DataError(f"{weather_path}: line {line_no}: unparsable row") from None

    return stations, DistanceMatrix(entries), WeatherSeries(weather_days)
