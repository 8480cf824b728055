"""Synthetic-fleet generator with known parametric hazards.

Emits a complete file bundle (trips, stations, maintenance, distances,
weather, ground truth) that conforms bit-exactly to the ingestion schemas.
Component lifetimes are Weibull with a scale modulated log-linearly by each
bike's expected daily distance, mean speed and model, so every downstream
estimate can be checked against closed-form expectations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import DataError

TARGET_CATEGORY = {"brake_pads": "brakes", "wheel_spokes": "wheels", "chain": "transmission"}
COUNT_CATEGORY = {
    "brake_tension_adjust": "brakes",
    "front_tube_change": "wheels",
    "rear_tube_change": "wheels",
    "front_cover_change": "wheels",
}


@dataclass
class ComponentHazard:
    """Weibull lifetime with log-linear scale modulation.

    The effective scale for a bike is
    ``scale_days * exp(-(coef_daily_km * daily_km + coef_speed * (speed - 13)
    + coef_electric * is_electric))`` so larger coefficients shorten lives.
    """

    shape: float
    scale_days: float
    coef_daily_km: float = 0.0
    coef_speed: float = 0.0
    coef_electric: float = 0.0

    def __post_init__(self):
        if self.shape <= 0 or self.scale_days <= 0:
            raise DataError("Weibull shape and scale must be positive")

    def effective_scale(self, daily_km: float, speed: float, electric: bool) -> float:
        exponent = (
            self.coef_daily_km * daily_km
            + self.coef_speed * (speed - 13.0)
            + self.coef_electric * (1.0 if electric else 0.0)
        )
        return self.scale_days * math.exp(-exponent)

    def expected_days(self, daily_km: float, speed: float, electric: bool) -> float:
        lam = self.effective_scale(daily_km, speed, electric)
        return lam * math.gamma(1.0 + 1.0 / self.shape)


def _default_components() -> dict[str, ComponentHazard]:
    return {
        "brake_pads": ComponentHazard(
            shape=2.2, scale_days=105.0, coef_daily_km=0.045,
            coef_speed=0.03, coef_electric=0.35,
        ),
        "wheel_spokes": ComponentHazard(
            shape=1.9, scale_days=150.0, coef_daily_km=0.035,
            coef_speed=0.02, coef_electric=0.55,
        ),
        "chain": ComponentHazard(
            shape=1.6, scale_days=260.0, coef_daily_km=0.025,
            coef_speed=0.015, coef_electric=0.25,
        ),
    }


def _default_count_rates() -> dict[str, float]:
    # expected MOs per bike per 100 days at unit activity
    return {
        "brake_tension_adjust": 1.1,
        "front_tube_change": 0.7,
        "rear_tube_change": 0.5,
        "front_cover_change": 0.15,
    }


DEFAULT_WEEKDAY_PROFILE = (
    1, 1, 1, 1, 1, 2, 5, 9, 14, 8, 6, 6, 8, 11, 8, 7, 9, 12, 14, 10, 7, 5, 3, 2,
)
DEFAULT_WEEKEND_PROFILE = (
    2, 2, 1, 1, 1, 1, 2, 4, 6, 8, 10, 11, 11, 10, 9, 9, 9, 9, 10, 11, 8, 6, 4, 3,
)


@dataclass
class SimConfig:
    n_mechanical: int = 320
    n_electric: int = 360
    n_stations: int = 24
    window_start: date = date(2022, 1, 1)
    window_days: int = 340
    trips_per_day_mech: float = 2.0
    trips_per_day_elec: float = 2.6
    weekend_factor: float = 0.7
    activity_sigma: float = 0.30
    speed_mech: tuple[float, float] = (11.5, 1.2)
    speed_elec: tuple[float, float] = (16.0, 1.5)
    weekday_profile: tuple = DEFAULT_WEEKDAY_PROFILE
    weekend_profile: tuple = DEFAULT_WEEKEND_PROFILE
    components: dict[str, ComponentHazard] = field(default_factory=_default_components)
    count_rates: dict[str, float] = field(default_factory=_default_count_rates)
    mean_temp: float = 16.0
    temp_amplitude: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.n_stations < 1:
            raise DataError("need at least one station")
        if self.n_mechanical + self.n_electric < 1:
            raise DataError("empty fleet")
        if self.window_days < 30:
            raise DataError("study window must cover at least 30 days")
        for name in self.components:
            if name not in TARGET_CATEGORY:
                raise DataError(f"unknown component {name!r}")

    @property
    def window_end(self) -> date:
        return self.window_start + timedelta(days=self.window_days)


@dataclass
class Bike:
    bike_id: str
    electric: bool
    activity: float
    speed: float
    trips_per_day: float
    daily_km: float  # expected, drives the true hazard


def _haversine_m(lat1, lon1, lat2, lon2):
    r = 6371000.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


class FleetSimulator:
    def __init__(self, config: SimConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    # providers -----------------------------------------------------------
    def _make_stations(self):
        rng = np.random.default_rng([self.config.seed, 1])
        n = self.config.n_stations
        ids = [f"S{i:03d}" for i in range(n)]
        lats = rng.uniform(41.35, 41.46, n)
        lons = rng.uniform(2.10, 2.23, n)
        # altitude grows loosely away from the sea (south-east corner)
        base = (lats - 41.35) / 0.11 + (2.23 - lons) / 0.13
        alts = np.round(base * 180.0 + rng.uniform(0, 90, n), 1)
        return ids, lats, lons, alts

    def _make_distances(self, ids, lats, lons):
        rng = np.random.default_rng([self.config.seed, 2])
        n = len(ids)
        rows = []
        matrix = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                detour = rng.uniform(1.15, 1.45)
                dist = max(_haversine_m(lats[i], lons[i], lats[j], lons[j]) * detour, 250.0)
                matrix[i, j] = round(dist, 1)
                rows.append((ids[i], ids[j], matrix[i, j]))
        return rows, matrix

    def _make_weather(self):
        rng = np.random.default_rng([self.config.seed, 3])
        days = []
        for offset in range(self.config.window_days + 1):
            day = self.config.window_start + timedelta(days=offset)
            doy = day.timetuple().tm_yday
            temp = (
                self.config.mean_temp
                + self.config.temp_amplitude * math.sin(2 * math.pi * (doy - 105) / 365.0)
                + rng.normal(0, 1.8)
            )
            precip = 0.0 if rng.random() < 0.72 else float(rng.exponential(5.0))
            days.append(
                (
                    day.isoformat(),
                    round(temp, 2),
                    round(precip, 2),
                    round(float(rng.uniform(0, 360)), 1),
                    round(float(rng.gamma(2.0, 5.0)), 2),
                    round(float(rng.normal(1013.0, 5.0)), 2),
                )
            )
        return days

    # fleet ---------------------------------------------------------------
    def _make_bikes(self, mean_km_by_model):
        rng = np.random.default_rng([self.config.seed, 4])
        bikes = []
        specs = [
            (False, self.config.n_mechanical, "M", self.config.trips_per_day_mech,
             self.config.speed_mech),
            (True, self.config.n_electric, "E", self.config.trips_per_day_elec,
             self.config.speed_elec),
        ]
        for electric, count, prefix, trips_day, (speed_mu, speed_sd) in specs:
            for i in range(count):
                activity = float(
                    np.exp(rng.normal(-0.5 * self.config.activity_sigma**2,
                                      self.config.activity_sigma))
                )
                speed = float(np.clip(rng.normal(speed_mu, speed_sd), 7.0, 30.0))
                per_day = trips_day * activity
                daily_km = per_day * mean_km_by_model[electric] / 1000.0
                bikes.append(
                    Bike(f"{prefix}{i:04d}", electric, activity, speed, per_day, daily_km)
                )
        return bikes

    def _destination_weights(self, matrix, alts):
        """Per-model station-to-station choice weights.

        Electric bikes prefer longer and uphill trips, mechanical bikes the
        opposite, mirroring the usage asymmetry the analytics should find.
        """
        n = matrix.shape[0]
        gain = (alts[None, :] - alts[:, None]) / 100.0
        dist_km = matrix / 1000.0
        weights = {}
        for electric, d_coef, a_coef in ((False, -0.25, -0.5), (True, 0.25, 0.5)):
            w = np.exp(d_coef * dist_km + a_coef * gain)
            np.fill_diagonal(w, 0.0)
            w /= w.sum(axis=1, keepdims=True)
            weights[electric] = np.cumsum(w, axis=1)
        return weights

    def _mean_trip_distance(self, matrix, alts):
        n = matrix.shape[0]
        gain = (alts[None, :] - alts[:, None]) / 100.0
        dist_km = matrix / 1000.0
        out = {}
        for electric, d_coef, a_coef in ((False, -0.25, -0.5), (True, 0.25, 0.5)):
            w = np.exp(d_coef * dist_km + a_coef * gain)
            np.fill_diagonal(w, 0.0)
            w /= w.sum(axis=1, keepdims=True)
            out[electric] = float(np.mean((w * matrix).sum(axis=1)))
        return out

    def _simulate_trips(self, bike: Bike, bike_index: int, ids, matrix, cum_weights):
        """All trips of one bike, vectorized over the study window."""
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 5, bike_index])
        n_days = cfg.window_days
        day_dates = [cfg.window_start + timedelta(days=i) for i in range(n_days)]
        weekend = np.array([d.weekday() >= 5 for d in day_dates])
        mu = bike.trips_per_day * np.where(weekend, cfg.weekend_factor, 1.0)
        counts = rng.poisson(mu)
        total = int(counts.sum())
        if total == 0:
            return []

        day_idx = np.repeat(np.arange(n_days), counts)
        is_weekend = weekend[day_idx]
        wd_profile = np.asarray(cfg.weekday_profile, dtype=float)
        wd_profile /= wd_profile.sum()
        we_profile = np.asarray(cfg.weekend_profile, dtype=float)
        we_profile /= we_profile.sum()
        hours = np.where(
            is_weekend,
            rng.choice(24, size=total, p=we_profile),
            rng.choice(24, size=total, p=wd_profile),
        )
        minutes = rng.integers(0, 60, total)
        seconds = rng.integers(0, 60, total)

        origins = rng.integers(0, len(ids), total)
        u = rng.random(total)
        dest_cum = cum_weights[bike.electric][origins]
        dests = (dest_cum < u[:, None]).sum(axis=1)
        dests = np.minimum(dests, len(ids) - 1)
        same = dests == origins
        dests[same] = (dests[same] + 1) % len(ids)

        speeds = np.clip(rng.normal(bike.speed, 1.0, total), 5.0, 32.0)
        dists = matrix[origins, dests]
        duration_min = (dists / 1000.0) / speeds * 60.0

        trips = []
        for k in range(total):
            day = day_dates[day_idx[k]]
            start_s = int(hours[k]) * 3600 + int(minutes[k]) * 60 + int(seconds[k])
            end_s = start_s + int(round(duration_min[k] * 60.0))
            start_iso = f"{day.isoformat()}T{start_s // 3600:02d}:{start_s % 3600 // 60:02d}:{start_s % 60:02d}"
            end_day = day + timedelta(days=end_s // 86400)
            rem = end_s % 86400
            end_iso = f"{end_day.isoformat()}T{rem // 3600:02d}:{rem % 3600 // 60:02d}:{rem % 60:02d}"
            trips.append(
                (
                    bike.bike_id,
                    "E" if bike.electric else "M",
                    f"u{rng.integers(0, 4000):04d}",
                    ids[origins[k]],
                    ids[dests[k]],
                    start_iso,
                    end_iso,
                )
            )
        return trips

    def _simulate_failures(self, bike: Bike, bike_index: int):
        """Sequential Weibull lifetimes per component until the window ends.

        Returns (maintenance rows, ground-truth rows); the final open unit of
        each component appears only in the ground truth.
        """
        cfg = self.config
        mos = []
        truth = []
        for comp_index, (component, hazard) in enumerate(sorted(cfg.components.items())):
            rng = np.random.default_rng([cfg.seed, 6, bike_index, comp_index])
            lam = hazard.effective_scale(bike.daily_km, bike.speed, bike.electric)
            expected = hazard.expected_days(bike.daily_km, bike.speed, bike.electric)
            day_cursor = 0
            ordinal = 0
            while True:
                draw = float(rng.weibull(hazard.shape)) * lam
                lifetime = max(1, int(round(draw)))
                end_day = day_cursor + lifetime
                unit_id = f"{bike.bike_id}|{component}|{ordinal}"
                truth.append(
                    (unit_id, bike.bike_id, component,
                     round(lam, 6), hazard.shape, round(expected, 6))
                )
                if end_day >= cfg.window_days:
                    break
                mo_date = cfg.window_start + timedelta(days=end_day)
                mos.append(
                    (mo_date.isoformat(), TARGET_CATEGORY[component], component,
                     bike.bike_id, "E" if bike.electric else "M")
                )
                day_cursor = end_day
                ordinal += 1
        return mos, truth

    def _simulate_count_mos(self, bike: Bike, bike_index: int):
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 7, bike_index])
        rows = []
        for sub, rate_per_100d in sorted(cfg.count_rates.items()):
            expected = rate_per_100d * bike.activity * cfg.window_days / 100.0
            count = rng.poisson(expected)
            if count == 0:
                continue
            days = np.sort(rng.integers(1, cfg.window_days, size=count))
            for day_offset in days:
                when = cfg.window_start + timedelta(days=int(day_offset))
                rows.append(
                    (when.isoformat(), COUNT_CATEGORY[sub], sub,
                     bike.bike_id, "E" if bike.electric else "M")
                )
        return rows


def simulate_fleet(config: SimConfig, out_dir) -> dict[str, Path]:
    """Generate the full bundle into ``out_dir``; returns the file paths.

    Identical configs produce byte-identical bundles.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = FleetSimulator(config)

    ids, lats, lons, alts = sim._make_stations()
    distance_rows, matrix = sim._make_distances(ids, lats, lons)
    weather_rows = sim._make_weather()
    mean_km = sim._mean_trip_distance(matrix, alts)
    bikes = sim._make_bikes(mean_km)
    cum_weights = sim._destination_weights(matrix, alts)

    paths = {
        "stations": out / "stations.csv",
        "distances": out / "distances.csv",
        "weather": out / "weather.csv",
        "trips": out / "trips.csv",
        "maintenance": out / "maintenance.csv",
        "ground_truth": out / "ground_truth.csv",
    }

    with paths["stations"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "lat", "lon", "altitude_m"])
        for sid, lat, lon, alt in zip(ids, lats, lons, alts):
            w.writerow([sid, f"{lat:.6f}", f"{lon:.6f}", f"{alt:.1f}"])

    with paths["distances"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["origin_station", "dest_station", "distance_m"])
        for origin, dest, dist in distance_rows:
            w.writerow([origin, dest, f"{dist:.1f}"])

    with paths["weather"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "temp_c", "precip_mm", "wind_dir_deg", "wind_speed_kmh", "pressure_hpa"])
        for row in weather_rows:
            w.writerow(row)

    all_trips = []
    all_mos = []
    all_truth = []
    for index, bike in enumerate(bikes):
        all_trips.extend(sim._simulate_trips(bike, index, ids, matrix, cum_weights))
        mos, truth = sim._simulate_failures(bike, index)
        all_mos.extend(mos)
        all_truth.extend(truth)
        all_mos.extend(sim._simulate_count_mos(bike, index))

    all_trips.sort(key=lambda t: (t[5], t[0]))
    with paths["trips"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trip_id", "bike_id", "bike_model", "user_id",
                    "start_station", "end_station", "start_time", "end_time"])
        for i, trip in enumerate(all_trips):
            w.writerow([f"t{i:07d}", *trip])

    all_mos.sort(key=lambda m: (m[0], m[3], m[2]))
    with paths["maintenance"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mo_id", "date", "category", "subcategory", "bike_id", "bike_model"])
        for i, mo in enumerate(all_mos):
            w.writerow([f"mo{i:06d}", *mo])

    with paths["ground_truth"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "bike_id", "component", "true_scale", "true_shape",
                    "true_expected_days"])
        for row in sorted(all_truth):
            w.writerow(row)

    return paths


def load_ground_truth(path) -> dict[str, dict]:
    """unit_id -> {bike_id, component, true_scale, true_shape, true_expected_days}."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        row["unit_id"]: {
            "bike_id": row["bike_id"],
            "component": row["component"],
            "true_scale": float(row["true_scale"]),
            "true_shape": float(row["true_shape"]),
            "true_expected_days": float(row["true_expected_days"]),
        }
        for row in rows
    }


def oracle_report(ground_truth: dict[str, dict], predictions: dict[str, float]) -> dict:
    """Calibration of day predictions against true expected lifetimes.

    ``predictions`` maps unit ids to predicted days; every id must exist in
    the ground truth. Returns RMSE, R^2 against the truth and a per-decile
    calibration table.
    """
    missing = [uid for uid in predictions if uid not in ground_truth]
    if missing:
        raise DataError(f"{len(missing)} prediction ids missing from ground truth "
                        f"(first: {missing[0]})")
    if not predictions:
        raise DataError("no predictions to score")
    uids = sorted(predictions)
    predicted = np.array([predictions[u] for u in uids])
    truth = np.array([ground_truth[u]["true_expected_days"] for u in uids])
    residuals = truth - predicted
    rmse = float(np.sqrt(np.mean(residuals**2)))
    denom = float(np.sum((truth - truth.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residuals**2)) / denom if denom > 0 else 1.0

    deciles = []
    edges = np.percentile(truth, np.linspace(0, 100, 11))
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (truth >= lo) & (truth <= hi if hi == edges[-1] else truth < hi)
        if mask.any():
            deciles.append(
                {
                    "truth_lo": float(lo),
                    "truth_hi": float(hi),
                    "n": int(mask.sum()),
                    "mean_true": float(truth[mask].mean()),
                    "mean_predicted": float(predicted[mask].mean()),
                }
            )
    return {"n": len(uids), "rmse": rmse, "r2": r2, "deciles": deciles}
