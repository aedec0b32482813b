"""Ensemble post-processing: arrival-time and powered-time distributions
normalized by the free-flight time, failure rates, spatial occupancy
maps, and trajectory-separation diagnostics for the steering ODE.

All reductions run in a fixed order so repeated runs are bit-identical.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .navigator import free_flight_time, integrate_on

_MISSING = object()


@dataclass
class Histogram:
    """Fixed-bin histogram holding probability mass per bin (fractions of
    the whole ensemble, not densities)."""

    edges: np.ndarray
    mass: np.ndarray

    @property
    def total_mass(self):
        return float(self.mass.sum())


@dataclass
class EnsembleSummary:
    """Arrival/powered-time distributions of one trajectory ensemble.

    Failed trajectories are excluded from both histograms and reported
    through the failure mass n_failed / n_total; histogram masses sum to
    the complementary reached fraction. Values beyond the bin range
    accumulate in the boundary bins. Medians are over reached
    trajectories, in raw time units.
    """

    n_total: int
    n_failed: int
    t_free: float
    arrival: Histogram
    power: Histogram
    median_arrival: float
    median_power: float

    @property
    def failure_rate(self):
        return self.n_failed / self.n_total if self.n_total else math.nan

    def to_dict(self):
        return {
            "n_total": self.n_total,
            "n_failed": self.n_failed,
            "failure_rate": self.failure_rate if self.n_total else None,
            "t_free": self.t_free,
            "median_arrival_time": _none_if_nan(self.median_arrival),
            "median_power_on_time": _none_if_nan(self.median_power),
            "arrival_bin_edges": self.arrival.edges.tolist(),
            "arrival_mass": self.arrival.mass.tolist(),
            "power_bin_edges": self.power.edges.tolist(),
            "power_mass": self.power.mass.tolist(),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _none_if_nan(x):
    return None if (x is None or (isinstance(x, float) and math.isnan(x))) else x


def _clipped_hist(values, edges, n_total):
    if len(values) == 0:
        return Histogram(edges=edges, mass=np.zeros(len(edges) - 1))
    lo = edges[0]
    hi = edges[-1]
    span = hi - lo
    clipped = np.clip(values, lo, hi - 1e-12 * span)
    counts, _ = np.histogram(clipped, bins=edges)
    return Histogram(edges=edges, mass=counts / n_total)


def summarize(outcomes, t_free, n_bins=50, bin_range=(0.0, 5.0)):
    """Ensemble summary of anything with reached / arrival_time /
    power_on_time attributes (trajectories or outcome records).

    Histograms are over T / t_free and T_pow / t_free for reached
    trajectories only; the input order never matters.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if t_free <= 0:
        raise ValueError("t_free must be positive")
    arrivals = []
    powers = []
    n_total = 0
    n_failed = 0
    for rec in outcomes:
        n_total += 1
        if rec.reached:
            arrivals.append(rec.arrival_time / t_free)
            powers.append(rec.power_on_time / t_free)
        else:
            n_failed += 1
    edges = np.linspace(bin_range[0], bin_range[1], n_bins + 1)
    arrivals = np.sort(np.array(arrivals))
    powers = np.sort(np.array(powers))
    return EnsembleSummary(
        n_total=n_total,
        n_failed=n_failed,
        t_free=t_free,
        arrival=_clipped_hist(arrivals, edges, max(n_total, 1)),
        power=_clipped_hist(powers, edges, max(n_total, 1)),
        median_arrival=float(np.median(arrivals) * t_free) if len(arrivals) else math.nan,
        median_power=float(np.median(powers) * t_free) if len(powers) else math.nan,
    )


@dataclass
class OccupancyGrid:
    """Accumulated residence time per pixel over an axis-aligned window.

    bounds = (x0, y0, x1, y1); pixel (x0 + i*p .. x0 + (i+1)*p) x (...)
    is cell [i, j]. Grids over the same window add elementwise.
    """

    residence: np.ndarray
    pixel: float
    bounds: tuple

    @property
    def total_time(self):
        return float(self.residence.sum())

    def __add__(self, other):
        if (self.pixel != other.pixel or self.bounds != other.bounds
                or self.residence.shape != other.residence.shape):
            raise ValueError("occupancy grids must share pixel and bounds")
        return OccupancyGrid(residence=self.residence + other.residence,
                             pixel=self.pixel, bounds=self.bounds)

    def to_csv(self, path, sidecar=_MISSING):
        """Matrix CSV (rows = x cells, columns = y cells) plus a JSON
        sidecar recording bounds and pixel size."""
        if sidecar is _MISSING:
            sidecar = str(path) + ".json"
        with open(path, "w") as fh:
            for i in range(self.residence.shape[0]):
                fh.write(",".join(repr(v) for v in self.residence[i]))
                fh.write("\n")
        if sidecar:
            with open(sidecar, "w") as fh:
                json.dump({"bounds": list(self.bounds), "pixel": self.pixel,
                           "shape": list(self.residence.shape)}, fh,
                          indent=1, sort_keys=True)
                fh.write("\n")


def occupancy(trajectories, pixel, bounds, out=None):
    """Residence-time map of a trajectory ensemble.

    Segments are split exactly at pixel boundaries (linear motion within
    an integration step); time spent outside the window is clamped onto
    the boundary pixels so the total mass equals the summed durations.
    Passing an existing OccupancyGrid as out accumulates into it, which
    lets callers stream large ensembles one trajectory at a time.
    """
    if pixel <= 0:
        raise ValueError("pixel size must be positive")
    x0, y0, x1, y1 = (float(b) for b in bounds)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"empty bounds {bounds}")
    nx = max(1, int(round((x1 - x0) / pixel)))
    ny = max(1, int(round((y1 - y0) / pixel)))
    if out is None:
        out = OccupancyGrid(residence=np.zeros((nx, ny)), pixel=float(pixel),
                            bounds=(x0, y0, x1, y1))
    elif out.residence.shape != (nx, ny) or out.pixel != pixel:
        raise ValueError("out grid does not match pixel/bounds")
    for traj in trajectories:
        _kernels.accumulate_residence(
            np.ascontiguousarray(traj.positions, dtype=np.float64),
            np.ascontiguousarray(traj.times, dtype=np.float64),
            x0, y0, 1.0 / pixel, out.residence)
    return out


@dataclass
class SeparationCurve:
    """Distance between two steering trajectories started eps apart."""

    times: np.ndarray
    separation: np.ndarray
    threshold: float
    crossing_time: float  # nan when the threshold is never exceeded

    @property
    def crossed(self):
        return not math.isnan(self.crossing_time)


def sensitivity(flow, geometry, theta0, eps, dt=None, horizon=None,
                length_scale=1.0, t0=0.0):
    """Separation growth between steering solutions launched from x_A with
    headings theta0 and theta0 + eps.

    Both trajectories integrate without target termination up to horizon
    (default the episode cutoff). The reference scale is the initial
    position separation (zero here) plus eps * length_scale; the crossing
    time marks the first sample with separation above 100x that scale.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if dt is None:
        dt = free_flight_time(geometry) / 2000.0
    if horizon is None:
        horizon = geometry.t_max
    bounded = _bounded_geometry(geometry, horizon)
    ta = integrate_on(flow, geometry.x_a, theta0, bounded, dt, t0=t0,
                      terminate=False)
    tb = integrate_on(flow, geometry.x_a, theta0 + eps, bounded, dt, t0=t0,
                      terminate=False)
    n = min(len(ta), len(tb))
    sep = np.hypot(ta.positions[:n, 0] - tb.positions[:n, 0],
                   ta.positions[:n, 1] - tb.positions[:n, 1])
    threshold = 100.0 * eps * length_scale
    above = np.flatnonzero(sep > threshold)
    crossing = float(ta.times[above[0]]) if len(above) else math.nan
    return SeparationCurve(times=ta.times[:n], separation=sep,
                           threshold=threshold, crossing_time=crossing)


def _bounded_geometry(geometry, horizon):
    if horizon == geometry.t_max:
        return geometry
    from .navigator import EpisodeGeometry
    return EpisodeGeometry(x_a=geometry.x_a, x_b=geometry.x_b,
                           d_a=geometry.d_a, d_b=geometry.d_b,
                           t_max=horizon, v_s=geometry.v_s)
