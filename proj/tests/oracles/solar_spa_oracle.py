"""Spot-check values for the solar model from NREL SPA (pvlib.spa_python).

Each check is stated in true solar time at longitude 0. SPA is queried at
the UTC instant whose apparent solar time equals that hour (UTC = solar
time - equation of time), and its geometric (unrefracted) elevation and
azimuth are frozen into tests/acceptance/acceptance.cpp and
tests/unit/test_solar.cpp.
"""
import math
import pandas as pd
import pvlib
from solar_oracle import noaa

DATES = ["2021-03-20", "2021-06-21", "2021-09-22", "2021-12-21"]
LATS = [0, 45, 60]
HOURS = [9, 12, 15]


def spa(date, lat, solar_hour):
    utc = pd.Timestamp(date, tz="UTC") + pd.Timedelta(hours=solar_hour)
    for _ in range(3):
        r = pvlib.solarposition.spa_python(pd.DatetimeIndex([utc]), lat, 0.0)
        eot = float(r["equation_of_time"].iloc[0])
        utc = pd.Timestamp(date, tz="UTC") + pd.Timedelta(hours=solar_hour - eot / 60.0)
    r = pvlib.solarposition.spa_python(pd.DatetimeIndex([utc]), lat, 0.0)
    return float(r["elevation"].iloc[0]), float(r["azimuth"].iloc[0])


def spencer_model(lat, doy, hour):
    return noaa(lat, doy, hour)


if __name__ == "__main__":
    for i, date in enumerate(DATES):
        doy = pd.Timestamp(date).dayofyear
        for j, lat in enumerate(LATS):
            hour = HOURS[(i + j) % 3]
            e, a = spa(date, lat, hour)
            me, ma = spencer_model(lat, doy, hour)
            print(f'{{"{date}", {lat}, {hour}, {e:.4f}, {a:.4f}}},  // spencer d=({me-e:+.3f},{ma-a:+.3f})')
