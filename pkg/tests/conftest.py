from datetime import datetime, timedelta

import pytest

from fleetsurv.ingestion import BikeModel, DistanceMatrix, Station, Trip, WeatherDay, WeatherSeries


def make_trip(
    trip_id="t0",
    bike_id="b0",
    model=BikeModel.MECHANICAL,
    start="S1",
    end="S2",
    start_time=datetime(2022, 3, 1, 8, 0, 0),
    duration_min=12.5,
):
    return Trip(
        trip_id,
        bike_id,
        model,
        "u0",
        start,
        end,
        start_time,
        start_time + timedelta(minutes=duration_min),
    )


@pytest.fixture
def stations():
    return {
        "S1": Station("S1", 41.40, 2.15, 10.0),
        "S2": Station("S2", 41.41, 2.16, 95.0),
        "S3": Station("S3", 41.42, 2.17, 150.0),
    }


@pytest.fixture
def distances():
    return DistanceMatrix(
        {
            ("S1", "S2"): 2500.0,
            ("S2", "S1"): 2600.0,
            ("S1", "S3"): 4000.0,
            ("S3", "S1"): 4100.0,
            ("S2", "S3"): 1500.0,
            ("S3", "S2"): 1600.0,
        }
    )


@pytest.fixture
def weather_march():
    from datetime import date

    days = [
        WeatherDay(date(2022, 3, d), 10.0 + d, 0.0, 180.0, 10.0, 1010.0 + d)
        for d in range(1, 32)
    ]
    return WeatherSeries(days)


def make_dataset(durations, events, features, names=None, component="brake_pads"):
    from datetime import date

    import numpy as np

    from fleetsurv.mo_units import StudyWindow, SurvivalDataset

    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] != len(durations):
        features = features.T
    if names is None:
        names = [f"f{i}" for i in range(features.shape[1])]
    n = len(durations)
    return SurvivalDataset(
        np.asarray(durations, dtype=float),
        np.asarray(events, dtype=bool),
        features,
        list(names),
        component,
        StudyWindow(date(2022, 1, 1), date(2023, 1, 1)),
        {},
        [str(i) for i in range(n)],
    )


def two_group_exponential(n=2000, hazard_ratio=2.0, seed=0, censor_horizon=None):
    """Known-coefficient oracle: group 1 fails at rate doubled vs group 0."""
    import numpy as np

    rng = np.random.default_rng(seed)
    group = rng.integers(0, 2, size=n).astype(float)
    base_rate = 0.02
    rates = base_rate * hazard_ratio**group
    t = rng.exponential(1.0 / rates)
    t = np.ceil(t)  # day granularity, guarantees ties
    if censor_horizon is None:
        censor_horizon = np.inf
    events = t <= censor_horizon
    t = np.minimum(t, censor_horizon)
    return make_dataset(t, events, group.reshape(-1, 1), names=["group"])
