"""Censored survival units from maintenance logs, with aggregated covariates.

A maintenance operation (MO) is one dated repair of one bike. For a target
component, the time between consecutive repairs of the same bike is one MO
unit: the survival subject. The first unit of a bike (start unseen) is
left-censored; the last (failure unseen) is right-censored; interior units
are uncensored. Left-censored units never reach a model-ready dataset.
"""

from __future__ import annotations

import csv
import json
import warnings
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, timedelta
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingestion import BikeModel, DistanceMatrix, MaintenanceOp, Trip, WeatherSeries

TARGET_SUBCATEGORIES = ("brake_pads", "wheel_spokes", "chain")

# repair-count covariates; wheel-tube failures are covariates, never targets
COUNT_SUBCATEGORIES = (
    "brake_tension_adjust",
    "front_tube_change",
    "rear_tube_change",
    "front_cover_change",
)

BASE_FEATURES = (
    "cumulative_distance",
    "mean_speed",
    "bike_model",
    "mean_daily_temp",
    "mean_pressure",
    "count_brake_tension_adjust",
    "count_front_tube_change",
    "count_rear_tube_change",
    "count_front_cover_change",
)
WIND_FEATURES = ("mean_wind_speed", "mean_wind_dir")


class CensorClass(Enum):
    UNCENSORED = "uncensored"
    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class StudyWindow:
    start: date
    end: date

    def __post_init__(self):
        if self.end <= self.start:
            raise DataError("study window must have positive length")

    @property
    def days(self) -> int:
        return (self.end - self.start).days


@dataclass(frozen=True)
class MOUnit:
    """One inter-repair survival interval for a (bike, component) pair."""

    bike_id: str
    component: str
    ordinal: int
    start_date: date
    end_date: date
    event: bool
    censor_class: CensorClass
    bike_model: BikeModel | None = None

    def __post_init__(self):
        if self.event != (self.censor_class is CensorClass.UNCENSORED):
            raise DataError("event flag must mirror censor_class == UNCENSORED")
        if self.duration < 1:
            raise DataError(
                f"unit {self.unit_id} has non-positive duration "
                f"({self.start_date} .. {self.end_date})"
            )

    @property
    def duration(self) -> int:
        return (self.end_date - self.start_date).days

    @property
    def unit_id(self) -> str:
        return f"{self.bike_id}|{self.component}|{self.ordinal}"


def build_mo_units(
    mos: list[MaintenanceOp],
    component: str,
    window: StudyWindow,
    bikes: dict[str, BikeModel] | None = None,
) -> list[MOUnit]:
    """Tile the study window with MO units for every bike, per component.

    For a bike with repairs r1 < ... < rk the units are
    [window.start, r1] (left-censored), (r_i, r_{i+1}] (uncensored) and
    (rk, window.end] (right-censored); a bike with zero repairs yields one
    right-censored unit spanning the window, so each bike contributes exactly
    repairs + 1 units. ``bikes`` supplies the active roster (and model) for
    bikes without repairs; when omitted the roster is the set of bikes seen
    in ``mos``.
    """
    if component not in TARGET_SUBCATEGORIES:
        raise DataError(
            f"unknown target component {component!r}; expected one of {TARGET_SUBCATEGORIES}"
        )
    relevant = [mo for mo in mos if mo.subcategory == component]
    for mo in relevant:
        if not (window.start < mo.date < window.end):
            raise DataError(
                f"repair {mo.mo_id} dated {mo.date.isoformat()} falls outside the "
                f"open study window ({window.start.isoformat()}, {window.end.isoformat()})"
            )

    by_bike: dict[str, list[MaintenanceOp]] = defaultdict(list)
    for mo in relevant:
        by_bike[mo.bike_id].append(mo)

    roster: dict[str, BikeModel | None]
    if bikes is None:
        roster = {bike_id: None for bike_id in by_bike}
    else:
        roster = dict(bikes)
        for bike_id in by_bike:
            roster.setdefault(bike_id, None)

    units: list[MOUnit] = []
    for bike_id in sorted(roster):
        repairs = sorted(by_bike.get(bike_id, []), key=lambda mo: (mo.date, mo.mo_id))
        deduped: list[MaintenanceOp] = []
        for mo in repairs:
            if deduped and deduped[-1].date == mo.date:
                warnings.warn(
                    f"bike {bike_id}: repairs {deduped[-1].mo_id} and {mo.mo_id} on "
                    f"{mo.date.isoformat()} collapsed to one"
                )
                continue
            deduped.append(mo)

        model = roster[bike_id]
        if deduped:
            model = deduped[-1].bike_model
        if not deduped:
            units.append(
                MOUnit(bike_id, component, 0, window.start, window.end, False,
                       CensorClass.RIGHT, model)
            )
            continue
        boundaries = [window.start] + [mo.date for mo in deduped] + [window.end]
        for ordinal in range(len(boundaries) - 1):
            if ordinal == 0:
                censor = CensorClass.LEFT
            elif ordinal == len(boundaries) - 2:
                censor = CensorClass.RIGHT
            else:
                censor = CensorClass.UNCENSORED
            closing = deduped[ordinal] if ordinal < len(deduped) else None
            unit_model = closing.bike_model if closing is not None else model
            units.append(
                MOUnit(
                    bike_id,
                    component,
                    ordinal,
                    boundaries[ordinal],
                    boundaries[ordinal + 1],
                    censor is CensorClass.UNCENSORED,
                    censor,
                    unit_model,
                )
            )
    return units


@dataclass
class SurvivalDataset:
    """Model-ready table: one row per retained MO unit."""

    durations: np.ndarray
    events: np.ndarray
    features: np.ndarray
    feature_names: list[str]
    component: str
    window: StudyWindow
    exclusions: dict[str, int]
    unit_ids: list[str]

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=float)
        self.events = np.asarray(self.events, dtype=bool)
        self.features = np.asarray(self.features, dtype=float)
        n = self.durations.size
        if self.events.size != n or self.features.shape[0] != n or len(self.unit_ids) != n:
            raise DataError("dataset columns disagree on row count")
        if self.features.ndim != 2 or self.features.shape[1] != len(self.feature_names):
            raise DataError("feature matrix width must match feature names")

    def __len__(self) -> int:
        return self.durations.size

    def subset(self, indices) -> "SurvivalDataset":
        indices = np.asarray(indices)
        return SurvivalDataset(
            self.durations[indices],
            self.events[indices],
            self.features[indices],
            list(self.feature_names),
            self.component,
            self.window,
            dict(self.exclusions),
            [self.unit_ids[i] for i in indices],
        )

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["duration_days", "event", *self.feature_names])
            for i in range(len(self)):
                writer.writerow(
                    [
                        f"{self.durations[i]:.0f}",
                        int(self.events[i]),
                        *(repr(float(v)) for v in self.features[i]),
                    ]
                )

    def write_manifest(self, path) -> None:
        manifest = {
            "component": self.component,
            "window": [self.window.start.isoformat(), self.window.end.isoformat()],
            "rows": len(self),
            "feature_names": self.feature_names,
            "exclusions": self.exclusions,
        }
        Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, csv_path, manifest_path) -> "SurvivalDataset":
        manifest = json.loads(Path(manifest_path).read_text())
        with Path(csv_path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        feature_names = header[2:]
        if feature_names != manifest["feature_names"]:
            raise DataError("manifest feature names disagree with survival.csv header")
        durations, events, feats = [], [], []
        for row in rows[1:]:
            durations.append(float(row[0]))
            events.append(bool(int(row[1])))
            feats.append([float(v) for v in row[2:]])
        window = StudyWindow(
            date.fromisoformat(manifest["window"][0]),
            date.fromisoformat(manifest["window"][1]),
        )
        n = len(durations)
        return cls(
            np.array(durations),
            np.array(events),
            np.array(feats).reshape(n, len(feature_names)),
            feature_names,
            manifest["component"],
            window,
            manifest.get("exclusions", {}),
            [str(i) for i in range(n)],
        )


def _unit_day_slice(unit: MOUnit) -> tuple[date, date, bool]:
    # trips on a repair day precede the repair, so they close the ending unit;
    # the first unit also owns its own start day (no opening repair)
    include_start = unit.ordinal == 0
    return unit.start_date, unit.end_date, include_start


def _date_in_slice(d: date, unit: MOUnit) -> bool:
    start, end, include_start = _unit_day_slice(unit)
    if d == start:
        return include_start
    return start < d <= end


def attach_covariates(
    units: list[MOUnit],
    trips: list[Trip],
    weather: WeatherSeries,
    distances: DistanceMatrix,
    all_mos: list[MaintenanceOp],
    speed_weighting: str = "trip_mean",
    include_wind: bool = False,
) -> SurvivalDataset:
    """Aggregate usage, weather and repair-count covariates per unit.

    Exclusions applied afterwards, each counted once per unit under the first
    matching reason: left-censored units, units without trips, and units
    during which the bike model changes.
    """
    if speed_weighting not in ("trip_mean", "distance_weighted"):
        raise DataError(f"unknown speed weighting {speed_weighting!r}")
    units = sorted(units, key=lambda u: (u.bike_id, u.start_date))
    component = units[0].component if units else "unknown"
    window = StudyWindow(
        min((u.start_date for u in units), default=date.min),
        max((u.end_date for u in units), default=date.max),
    ) if units else None
    if window is None:
        raise DataError("attach_covariates requires at least one unit")

    trips_by_bike: dict[str, list[Trip]] = defaultdict(list)
    for trip in trips:
        trips_by_bike[trip.bike_id].append(trip)
    for bike_trips in trips_by_bike.values():
        bike_trips.sort(key=lambda t: t.start_time)

    count_mos_by_bike: dict[str, list[MaintenanceOp]] = defaultdict(list)
    for mo in all_mos:
        if mo.subcategory in COUNT_SUBCATEGORIES:
            count_mos_by_bike[mo.bike_id].append(mo)

    feature_names = list(BASE_FEATURES) + (list(WIND_FEATURES) if include_wind else [])
    exclusions = {
        "left_censored": 0,
        "no_trips": 0,
        "model_changed": 0,
        "trips_without_distance": 0,
    }
    rows, durations, events, unit_ids = [], [], [], []

    for unit in units:
        if unit.censor_class is CensorClass.LEFT:
            exclusions["left_censored"] += 1
            continue
        unit_trips = [
            t for t in trips_by_bike.get(unit.bike_id, ())
            if _date_in_slice(t.start_time.date(), unit)
        ]
        dists, speeds, models = [], [], set()
        for trip in unit_trips:
            models.add(trip.bike_model)
            pair = (trip.start_station, trip.end_station)
            if pair not in distances:
                exclusions["trips_without_distance"] += 1
                continue
            dist = distances.distance(*pair)
            minutes = trip.duration_minutes
            if minutes <= 0:
                exclusions["trips_without_distance"] += 1
                continue
            dists.append(dist)
            speeds.append((dist / 1000.0) / (minutes / 60.0))
        if not dists:
            exclusions["no_trips"] += 1
            continue
        if len(models) > 1:
            exclusions["model_changed"] += 1
            continue
        model = next(iter(models))

        # weather means over the unit's calendar days [start, end)
        n_days = (unit.end_date - unit.start_date).days
        days = [unit.start_date + timedelta(days=i) for i in range(n_days)]
        weather_days = [weather.day(d) for d in days]
        mean_temp = float(np.mean([w.temp_c for w in weather_days]))
        mean_pressure = float(np.mean([w.pressure_hpa for w in weather_days]))

        counts = {sub: 0 for sub in COUNT_SUBCATEGORIES}
        for mo in count_mos_by_bike.get(unit.bike_id, ()):
            if _date_in_slice(mo.date, unit):
                counts[mo.subcategory] += 1

        dists_arr = np.asarray(dists)
        speeds_arr = np.asarray(speeds)
        if speed_weighting == "distance_weighted":
            mean_speed = float(np.sum(speeds_arr * dists_arr) / np.sum(dists_arr))
        else:
            mean_speed = float(speeds_arr.mean())

        row = [
            float(dists_arr.sum()),
            mean_speed,
            1.0 if model is BikeModel.ELECTRIC else 0.0,
            mean_temp,
            mean_pressure,
            *(float(counts[sub]) for sub in COUNT_SUBCATEGORIES),
        ]
        if include_wind:
            row.append(float(np.mean([w.wind_speed_kmh for w in weather_days])))
            row.append(float(np.mean([w.wind_dir_deg for w in weather_days])))
        rows.append(row)
        durations.append(unit.duration)
        events.append(unit.event)
        unit_ids.append(unit.unit_id)

    features = np.array(rows, dtype=float).reshape(len(rows), len(feature_names))
    return SurvivalDataset(
        np.array(durations, dtype=float),
        np.array(events, dtype=bool),
        features,
        feature_names,
        component,
        window,
        exclusions,
        unit_ids,
    )


def dataset_summary(units: list[MOUnit], exclusions: dict[str, int] | None = None) -> dict:
    """Counts and percentages by censoring class and bike model.

    Returns the accounting table used for sanity checks: total units, clean
    units (when exclusion counters are supplied) and the per-class/per-model
    breakdown, percentages over the total.
    """
    total = len(units)
    by_cell: dict[tuple[str, str], int] = defaultdict(int)
    for unit in units:
        model = unit.bike_model.name if unit.bike_model is not None else "UNKNOWN"
        by_cell[(unit.censor_class.value, model)] += 1
    cells = {
        f"{censor}/{model}": {
            "count": count,
            "pct": 100.0 * count / total if total else 0.0,
        }
        for (censor, model), count in sorted(by_cell.items())
    }
    summary = {
        "total_units": total,
        "by_class_model": cells,
        "by_class": {
            censor.value: sum(c for (cz, _), c in by_cell.items() if cz == censor.value)
            for censor in CensorClass
        },
    }
    if exclusions is not None:
        excluded = sum(
            exclusions.get(k, 0) for k in ("left_censored", "no_trips", "model_changed")
        )
        summary["exclusions"] = dict(exclusions)
        summary["clean_units"] = total - excluded
    return summary
