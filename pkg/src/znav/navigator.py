"""Vessel dynamics in a prescribed flow: fixed-step RK4 integration of
dX/dt = u(X, t) + V_s n(theta), the deterministic optimal-steering ODE
with shooting over launch angles, and decision-interval episodes driven
by an arbitrary controller.

Positions are never wrapped: the flow is L-periodic but episode
geometry lives in the unbounded plane, with the time cutoff providing
termination.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi


class ControllerContractError(ValueError):
    """A controller returned an action id outside the action table."""


@dataclass
class VesselState:
    """Position, heading (normalized to [0, 2pi)) and engine status."""

    position: np.ndarray
    heading: float = 0.0
    engine_on: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.heading = float(self.heading) % TWO_PI


@dataclass(frozen=True)
class EpisodeGeometry:
    """Start/target discs, failure cutoff and propulsion intensity."""

    x_a: np.ndarray
    x_b: np.ndarray
    d_a: float
    d_b: float
    t_max: float
    v_s: float

    def __post_init__(self):
        object.__setattr__(self, "x_a", np.asarray(self.x_a, dtype=float).reshape(2))
        object.__setattr__(self, "x_b", np.asarray(self.x_b, dtype=float).reshape(2))
        if self.d_a < 0:
            raise ValueError(f"d_a must be >= 0, got {self.d_a}")
        if self.d_b <= 0:
            raise ValueError(f"d_b must be > 0, got {self.d_b}")
        if self.t_max <= 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if self.v_s <= 0:
            raise ValueError(f"v_s must be > 0, got {self.v_s}")
        gap = float(np.linalg.norm(self.x_b - self.x_a))
        if gap <= self.d_a + self.d_b:
            raise ValueError(
                "start and target discs must be disjoint: "
                f"|x_b - x_a| = {gap:.6g} <= d_a + d_b = {self.d_a + self.d_b:.6g}")

    @property
    def distance(self):
        return float(np.linalg.norm(self.x_b - self.x_a))


def free_flight_time(geometry):
    """Straight-line no-flow travel time |x_B - x_A| / V_s."""
    return geometry.distance / geometry.v_s


def make_geometry(x_a, x_b, d_a, d_b, v_s, t_max=None, t_max_factor=20.0):
    """EpisodeGeometry with the cutoff defaulting to t_max_factor free-flight
    times."""
    if t_max is None:
        t_max = t_max_factor * float(np.linalg.norm(
            np.asarray(x_b, float) - np.asarray(x_a, float))) / v_s
    return EpisodeGeometry(x_a=x_a, x_b=x_b, d_a=d_a, d_b=d_b,
                           t_max=t_max, v_s=v_s)


def sample_disc(rng, center, radius):
    """One point uniform in the disc of given radius around center."""
    r = radius * math.sqrt(rng.random())
    ang = TWO_PI * rng.random()
    return np.array([center[0] + r * math.cos(ang),
                     center[1] + r * math.sin(ang)])


@dataclass
class Trajectory:
    """Time series of one episode at integration-step resolution.

    Row 0 is the initial state. action_ids and rewards are carried on the
    row that closes the corresponding decision interval (-1 / 0 on other
    rows and everywhere for controller-free steering trajectories).
    """

    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    engine_on: np.ndarray
    action_ids: np.ndarray
    rewards: np.ndarray
    reached: bool
    arrival_time: float
    power_on_time: float
    flow_t0: float = 0.0

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @property
    def outcome(self):
        return "reached" if self.reached else "failed"

    @property
    def total_reward(self):
        return float(self.rewards.sum())

    def __len__(self):
        return len(self.times)


def step_vessel(flow, state, v_s, dt, t=0.0):
    """One RK4 step of the vessel dynamics; heading is held constant.

    With the engine off the vessel is a passive tracer of the flow.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    out = np.empty((1, 2))
    _, _, _, x, y = _kernels.advance_interval(
        *flow._packed(), float(state.position[0]), float(state.position[1]),
        state.heading, bool(state.engine_on), float(v_s), float(t), float(dt),
        1, 0.0, 0.0, -1.0, out)
    return VesselState(position=np.array([x, y]), heading=state.heading,
                       engine_on=state.engine_on)


def on_rhs(gradient, theta):
    """Angular rate of the optimal-steering law for one gradient matrix."""
    a = np.asarray(gradient, dtype=float)
    return _kernels.steering_rate(a[0, 0], a[0, 1], a[1, 0], a[1, 1],
                                  float(theta))


def _step_grid(t_max, dt):
    """Number of uniform steps covering t_max (cutoff rounds up to the
    step grid)."""
    return max(1, int(math.ceil(t_max / dt - 1e-9)))


def integrate_on(flow, x0, theta0, geometry, dt, t0=0.0, terminate=True):
    """Integrate the coupled position/heading optimal-steering system.

    Engine always on at geometry.v_s. Terminates on target entry (arrival
    time linearly interpolated inside the step) or at the cutoff;
    terminate=False disables the target check (used for separation
    studies).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_max = _step_grid(geometry.t_max, dt)
    out = np.empty((n_max + 1, 3))
    d_b = geometry.d_b if terminate else -1.0
    arrived, n_rows, elapsed, _, _, _ = _kernels.integrate_steering(
        *flow._packed(), float(x0[0]), float(x0[1]), float(theta0),
        geometry.v_s, float(t0), float(dt), n_max,
        geometry.x_b[0], geometry.x_b[1], d_b, True, out)
    times = dt * np.arange(n_rows)
    if arrived:
        times[-1] = elapsed
    n = n_rows
    return Trajectory(
        times=times,
        positions=out[:n, :2].copy(),
        headings=out[:n, 2].copy(),
        engine_on=np.ones(n, dtype=bool),
        action_ids=np.full(n, -1, dtype=np.int64),
        rewards=np.zeros(n),
        reached=bool(arrived),
        arrival_time=float(elapsed) if arrived else math.nan,
        power_on_time=float(elapsed),
        flow_t0=t0,
    )


@dataclass
class ShootingResult:
    """Outcome table of a launch ensemble plus (optionally) trajectories."""

    starts: np.ndarray
    thetas: np.ndarray
    reached: np.ndarray
    times: np.ndarray
    t_max: float
    best_index: int | None
    trajectories: list | None = None

    @property
    def n_total(self):
        return len(self.thetas)

    @property
    def n_failed(self):
        return int(self.n_total - self.reached.sum())

    @property
    def failure_rate(self):
        return self.n_failed / self.n_total if self.n_total else math.nan

    @property
    def best_time(self):
        return float(self.times[self.best_index]) if self.best_index is not None else math.nan

    def outcome_records(self):
        for i in range(self.n_total):
            yield OutcomeRecord(reached=bool(self.reached[i]),
                                arrival_time=float(self.times[i]) if self.reached[i] else math.nan,
                                power_on_time=float(self.times[i]))


@dataclass(frozen=True)
class OutcomeRecord:
    """Minimal per-trajectory outcome used by the ensemble statistics."""

    reached: bool
    arrival_time: float
    power_on_time: float


def on_shooting(flow, geometry, n_angles, n_starts=1, dt=None, seed=0,
                t0=0.0, record_trajectories=False, on_trajectory=None):
    """Scan optimal-steering launches over start points and headings.

    n_starts = 1 launches exactly from x_A; larger ensembles draw starts
    uniformly from the d_A disc with the given seed. Headings are the
    uniform grid 2 pi j / n_angles. Trajectory index = start * n_angles +
    angle. best_index is the fastest arrival, None when every launch
    failed.

    record_trajectories keeps every Trajectory (memory grows with the
    ensemble); on_trajectory streams each recorded Trajectory to a
    callback instead, keeping memory flat.
    """
    if n_angles < 1 or n_starts < 1:
        raise ValueError("n_angles and n_starts must be >= 1")
    if dt is None:
        dt = free_flight_time(geometry) / 2000.0
    rng = np.random.default_rng(seed)
    if n_starts == 1:
        starts = geometry.x_a.reshape(1, 2).copy()
    else:
        starts = np.array([sample_disc(rng, geometry.x_a, geometry.d_a)
                           for _ in range(n_starts)])
    thetas_grid = TWO_PI * np.arange(n_angles) / n_angles
    xs = np.repeat(starts[:, 0], n_angles)
    ys = np.repeat(starts[:, 1], n_angles)
    ths = np.tile(thetas_grid, n_starts)
    n_max = _step_grid(geometry.t_max, dt)
    n_tot = xs.size
    keep = record_trajectories or on_trajectory is not None
    trajectories = [] if record_trajectories else None
    if keep:
        reached = np.zeros(n_tot, dtype=np.uint8)
        times = np.empty(n_tot)
        for i in range(n_tot):
            traj = integrate_on(flow, (xs[i], ys[i]), ths[i], geometry,
                                dt, t0=t0)
            reached[i] = 1 if traj.reached else 0
            times[i] = traj.arrival_time if traj.reached else traj.duration
            if record_trajectories:
                trajectories.append(traj)
            if on_trajectory is not None:
                on_trajectory(i, traj)
    else:
        reached = np.zeros(n_tot, dtype=np.uint8)
        times = np.empty(n_tot)
        _kernels.shoot(*flow._packed(), xs, ys, ths, geometry.v_s,
                       float(t0), float(dt), n_max,
                       geometry.x_b[0], geometry.x_b[1], geometry.d_b,
                       reached, times)
    ok = reached.astype(bool)
    best = int(np.flatnonzero(ok)[np.argmin(times[ok])]) if ok.any() else None
    return ShootingResult(starts=starts, thetas=ths, reached=ok,
                          times=times, t_max=n_max * dt, best_index=best,
                          trajectories=trajectories)


def run_episode(flow, controller, geometry, actions, dt_decision, dt=None,
                start=None, t0=0.0, reward_fn=None, on_transition=None):
    """Drive one episode: every dt_decision the controller picks an action
    applied for the whole interval (RK4 sub-steps of length dt).

    actions is a sequence of (heading, engine_on) controls; engine-off
    controls keep the previous heading. The optional reward_fn
    (prev_pos, new_pos, elapsed, engine_on) -> float is evaluated once
    per interval, and on_transition(prev_pos, action, reward, new_pos,
    arrived) runs after it, enabling online learners.

    The final interval before the cutoff may be shorter than dt_decision;
    powered time accumulates the actually elapsed powered duration so the
    telescoped reward identity stays exact.
    """
    if dt is None:
        dt = dt_decision / 10.0
    if dt <= 0 or dt_decision < dt:
        raise ValueError("need 0 < dt <= dt_decision")
    n_sub = int(round(dt_decision / dt))
    if abs(n_sub * dt - dt_decision) > 1e-9 * dt_decision:
        raise ValueError(
            f"dt_decision = {dt_decision} is not an integer multiple of dt = {dt}")
    dt = dt_decision / n_sub
    n_actions = len(actions)
    heads = np.array([float(a[0]) for a in actions])
    engines = np.array([bool(a[1]) for a in actions], dtype=np.uint8)
    if start is None:
        start = geometry.x_a
    state = VesselState(position=np.asarray(start, dtype=float),
                        heading=0.0, engine_on=False)
    cap = _step_grid(geometry.t_max, dt)
    pk = flow._packed()
    buf = np.empty((n_sub, 2))

    times = [0.0]
    positions = [state.position.copy()]
    headings = [state.heading]
    engine_flags = [False]
    action_rows = [-1]
    reward_rows = [0.0]
    t_pow = 0.0
    duration = 0.0
    steps_done = 0
    reached = False
    while steps_done < cap:
        a = controller(state, duration)
        a = int(a)
        if not 0 <= a < n_actions:
            raise ControllerContractError(
                f"controller returned action {a}, valid ids are 0..{n_actions - 1}")
        engine = bool(engines[a])
        if engine:
            state.heading = heads[a]
        state.engine_on = engine
        n_this = min(n_sub, cap - steps_done)
        prev = state.position.copy()
        n_rows, arrived, elapsed, xe, ye = _kernels.advance_interval(
            *pk, prev[0], prev[1], state.heading, engine, geometry.v_s,
            t0 + duration, dt, n_this,
            geometry.x_b[0], geometry.x_b[1], geometry.d_b, buf)
        new_pos = np.array([xe, ye])
        if engine:
            t_pow += elapsed
        r = 0.0
        if reward_fn is not None:
            r = float(reward_fn(prev, new_pos, elapsed, engine))
        for i in range(n_rows):
            t_row = duration + (i + 1) * dt
            positions.append(buf[i].copy())
            headings.append(state.heading)
            engine_flags.append(engine)
            action_rows.append(a)
            reward_rows.append(r if i == n_rows - 1 else 0.0)
            times.append(t_row)
        duration += elapsed
        times[-1] = duration
        steps_done += n_rows
        state.position = new_pos
        if on_transition is not None:
            on_transition(prev, a, r, new_pos, bool(arrived))
        if arrived:
            reached = True
            break
    return Trajectory(
        times=np.array(times),
        positions=np.array(positions),
        headings=np.array(headings) % TWO_PI,
        engine_on=np.array(engine_flags, dtype=bool),
        action_ids=np.array(action_rows, dtype=np.int64),
        rewards=np.array(reward_rows),
        reached=reached,
        arrival_time=duration if reached else math.nan,
        power_on_time=t_pow,
        flow_t0=t0,
    )


def write_trajectory_csv(traj, path, trajectory_id=None, mode="w"):
    """Columns t,x,y,theta,engine_on,action_id,reward (prefixed with
    trajectory_id when given, enabling concatenated multi-trajectory
    files)."""
    header = "t,x,y,theta,engine_on,action_id,reward\n"
    prefix = ""
    if trajectory_id is not None:
        header = "trajectory_id," + header
        prefix = f"{trajectory_id},"
    with open(path, mode) as fh:
        if mode == "w" or fh.tell() == 0:
            fh.write(header)
        for i in range(len(traj)):
            fh.write(f"{prefix}{traj.times[i]!r},{traj.positions[i, 0]!r},"
                     f"{traj.positions[i, 1]!r},{traj.headings[i]!r},"
                     f"{int(traj.engine_on[i])},{traj.action_ids[i]},"
                     f"{traj.rewards[i]!r}\n")


def write_outcomes_csv(result, path):
    """Shooting-ensemble outcomes: trajectory_id, outcome, T, T_pow and
    the launch point."""
    n_angles = result.n_total // max(1, len(result.starts))
    with open(path, "w") as fh:
        fh.write("trajectory_id,outcome,T,T_pow,start_x,start_y\n")
        for i in range(result.n_total):
            ok = bool(result.reached[i])
            start = result.starts[i // n_angles]
            t_val = result.times[i] if ok else result.t_max
            fh.write(f"{i},{'reached' if ok else 'failed'},"
                     f"{t_val!r},{t_val!r},{start[0]!r},{start[1]!r}\n")
