"""Tabular one-step actor-critic over a tile-coded arena.

States are square tiles of the navigation arena, actions are eight
compass headings plus an optional engine-off action, the policy is a
per-tile softmax over preferences, and the critic is a per-tile value
table. Rewards combine elapsed (and powered) time penalties with the
change in straight-line time-to-go, which telescopes over an episode to
minus the arrival time (plus a bounded start/end term), so maximizing
total reward minimizes T + lambda * T_pow.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .navigator import Trajectory, free_flight_time, sample_disc, _step_grid

TWO_PI = 2.0 * math.pi


class PolicyFormatError(ValueError):
    """Malformed or mismatched policy file."""


class PolicyVersionError(PolicyFormatError):
    """Policy file with an unsupported version tag."""


@dataclass(frozen=True)
class TileCoder:
    """Uniform square tiling of the arena; ids are row-major in y then x.

    Positions outside the arena clamp to the nearest boundary tile, so
    every point of the plane maps to exactly one of the n_x * n_y states.
    """

    origin: tuple
    tile_size: float
    n_x: int
    n_y: int

    def __post_init__(self):
        object.__setattr__(self, "origin",
                           (float(self.origin[0]), float(self.origin[1])))
        if self.tile_size <= 0:
            raise ValueError(f"tile_size must be > 0, got {self.tile_size}")
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError("tile counts must be >= 1")

    @property
    def n_states(self):
        return self.n_x * self.n_y

    @property
    def arena_size(self):
        return np.array([self.n_x * self.tile_size, self.n_y * self.tile_size])

    def state_of(self, x):
        return int(_kernels.tile_index(
            float(x[0]), float(x[1]), self.origin[0], self.origin[1],
            1.0 / self.tile_size, self.n_x, self.n_y))

    def contains(self, x):
        hi = np.asarray(self.origin) + self.arena_size
        return bool(self.origin[0] <= x[0] < hi[0]
                    and self.origin[1] <= x[1] < hi[1])

    def tile_center(self, s):
        iy, ix = divmod(int(s), self.n_x)
        return np.asarray(self.origin) + self.tile_size * np.array([ix + 0.5,
                                                                    iy + 0.5])


@dataclass(frozen=True)
class ActionSet:
    """Eight steering headings, optionally extended by engine-off."""

    angles: np.ndarray
    include_off: bool = True

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float).reshape(-1) % TWO_PI
        object.__setattr__(self, "angles", angles)
        if len(angles) != 8:
            raise ValueError(f"expected 8 steering angles, got {len(angles)}")
        if len(np.unique(angles)) != 8:
            raise ValueError("steering angles must be distinct")

    @classmethod
    def compass(cls, include_off=True):
        """The eight 45-degree compass headings."""
        return cls(angles=np.arange(8) * (math.pi / 4.0),
                   include_off=include_off)

    @property
    def n_actions(self):
        return 9 if self.include_off else 8

    def controls(self):
        """(heading, engine_on) rows; the off action keeps heading 0 but
        the navigator ignores headings of engine-off controls."""
        rows = [(float(a), True) for a in self.angles]
        if self.include_off:
            rows.append((0.0, False))
        return rows

    def control_arrays(self):
        heads = np.array([c[0] for c in self.controls()])
        engines = np.array([1 if c[1] else 0 for c in self.controls()],
                           dtype=np.uint8)
        return heads, engines


@dataclass(frozen=True)
class RewardConfig:
    """Energy weight, nominal shaping speed and the decision interval."""

    lam: float
    v_s_nominal: float
    dt_decision: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.v_s_nominal <= 0:
            raise ValueError(f"v_s_nominal must be > 0, got {self.v_s_nominal}")
        if self.dt_decision <= 0:
            raise ValueError(f"dt_decision must be > 0, got {self.dt_decision}")


@dataclass(frozen=True)
class TrainConfig:
    """Learning rates and episode budget; the discount is fixed at 1
    (episodic tasks)."""

    n_episodes: int
    seed: int = 0
    alpha_actor: float = 0.1
    alpha_critic: float = 0.1
    lr_decay: bool = False

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        if self.alpha_actor <= 0 or self.alpha_critic <= 0:
            raise ValueError("learning rates must be positive")

    def alphas(self, episode):
        """Per-episode rates; optional 1/sqrt(episode) decay, episode
        counted from 1."""
        if not self.lr_decay:
            return self.alpha_actor, self.alpha_critic
        f = 1.0 / math.sqrt(max(1, episode))
        return self.alpha_actor * f, self.alpha_critic * f


@dataclass
class PolicyParams:
    """Softmax preferences H (n_states x n_actions) and values V."""

    H: np.ndarray
    V: np.ndarray
    coder: TileCoder
    actions: ActionSet

    def __post_init__(self):
        self.H = np.ascontiguousarray(self.H, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        expect = (self.coder.n_states, self.actions.n_actions)
        if self.H.shape != expect:
            raise ValueError(f"H shape {self.H.shape} != {expect}")
        if self.V.shape != (self.coder.n_states,):
            raise ValueError(f"V shape {self.V.shape} != ({self.coder.n_states},)")

    @classmethod
    def zeros(cls, coder, actions):
        """Uniform random policy and zero values (the training start)."""
        return cls(H=np.zeros((coder.n_states, actions.n_actions)),
                   V=np.zeros(coder.n_states), coder=coder, actions=actions)

    def probs(self, s):
        return policy_probs(self.H[s])


def policy_probs(preferences):
    """Softmax with max-subtraction; rows of H map to action probabilities."""
    h = np.asarray(preferences, dtype=float)
    e = np.exp(h - h.max())
    return e / e.sum()


def reward_step(x_b, prev_x, new_x, dt_elapsed, engine_was_on, cfg):
    """Shaped per-interval reward toward target x_b.

    r = -(dt + lambda * dt_pow) + (|x_b - prev| - |x_b - new|) / v_s_nominal
    with dt_pow = dt when the engine was on, else 0. lam = 0 recovers the
    pure minimum-time shaping; summed over an episode the distance terms
    telescope, so the total reward is -(T + lambda T_pow) plus a term
    bounded by the start/end geometry.
    """
    dt_pow = dt_elapsed if engine_was_on else 0.0
    d_prev = math.hypot(x_b[0] - prev_x[0], x_b[1] - prev_x[1])
    d_new = math.hypot(x_b[0] - new_x[0], x_b[1] - new_x[1])
    return -(dt_elapsed + cfg.lam * dt_pow) + (d_prev - d_new) / cfg.v_s_nominal


def actor_critic_update(H, V, s, a, r, s_next, terminal, alpha_actor,
                        alpha_critic):
    """In-place one-step actor-critic update of state row s; returns the
    TD error. Non-terminal transitions bootstrap with V[s_next]."""
    return float(_kernels.actor_critic_step(
        H, V, int(s), int(a), float(r), int(s_next), bool(terminal),
        float(alpha_actor), float(alpha_critic)))


@dataclass
class TrainLog:
    """Per-episode training telemetry."""

    total_reward: np.ndarray
    duration: np.ndarray
    power_on_time: np.ndarray
    reached: np.ndarray
    n_clamped: np.ndarray

    @property
    def n_episodes(self):
        return len(self.total_reward)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("episode,total_reward,T,T_pow,outcome,n_clamped\n")
            for i in range(self.n_episodes):
                fh.write(f"{i},{self.total_reward[i]!r},{self.duration[i]!r},"
                         f"{self.power_on_time[i]!r},"
                         f"{'reached' if self.reached[i] else 'failed'},"
                         f"{self.n_clamped[i]}\n")


def _episode_buffers(cap, n_sub):
    max_epochs = cap // n_sub + 2
    return (np.empty((cap + n_sub, 2)),
            np.empty(max_epochs, dtype=np.int64),
            np.empty(max_epochs),
            np.empty(max_epochs, dtype=np.uint8),
            np.empty(max_epochs, dtype=np.int64))


def _resolve_steps(geometry, reward_cfg, dt):
    dtd = reward_cfg.dt_decision
    if dt is None:
        dt = dtd / 10.0
    n_sub = int(round(dtd / dt))
    if n_sub < 1 or abs(n_sub * dt - dtd) > 1e-9 * dtd:
        raise ValueError(
            f"dt_decision = {dtd} is not an integer multiple of dt = {dt}")
    dt = dtd / n_sub
    cap = _step_grid(geometry.t_max, dt)
    cap = ((cap + n_sub - 1) // n_sub) * n_sub  # whole decision intervals
    return dt, n_sub, cap


def _flow_t0(flow, rng, cap, dt):
    if not flow.time_dependent:
        return 0.0
    horizon = getattr(flow, "horizon", None)
    if horizon is None:
        return 0.0
    span = max(0.0, horizon - cap * dt)
    return span * rng.random()


def train(flow, geometry, coder, actions, reward_cfg, train_cfg, dt=None,
          progress_every=0):
    """Run n_episodes of on-policy one-step actor-critic training.

    Each episode starts uniformly inside the d_A disc, at flow time 0 for
    frozen flows or at a random phase of an unsteady flow's horizon.
    Returns (PolicyParams, TrainLog); everything is deterministic given
    train_cfg.seed.
    """
    params = PolicyParams.zeros(coder, actions)
    heads, engines = actions.control_arrays()
    dt, n_sub, cap = _resolve_steps(geometry, reward_cfg, dt)
    out_xy, out_act, out_rew, out_eng, out_rows = _episode_buffers(cap, n_sub)
    max_epochs = out_act.size
    rng = np.random.default_rng(train_cfg.seed)
    pk = flow._packed()
    n_ep = train_cfg.n_episodes
    log_reward = np.empty(n_ep)
    log_duration = np.empty(n_ep)
    log_tpow = np.empty(n_ep)
    log_reached = np.zeros(n_ep, dtype=bool)
    log_clamped = np.zeros(n_ep, dtype=np.int64)
    for ep in range(n_ep):
        start = sample_disc(rng, geometry.x_a, geometry.d_a)
        t0 = _flow_t0(flow, rng, cap, dt)
        uniforms = rng.random(max_epochs)
        a_act, a_crit = train_cfg.alphas(ep + 1)
        reached, duration, t_pow, total_r, _, clamped, _ = _kernels.rl_episode(
            *pk, params.H, params.V,
            coder.origin[0], coder.origin[1], 1.0 / coder.tile_size,
            coder.n_x, coder.n_y, heads, engines,
            start[0], start[1], t0, geometry.v_s, dt, n_sub, cap,
            geometry.x_b[0], geometry.x_b[1], geometry.d_b,
            reward_cfg.lam, reward_cfg.v_s_nominal,
            True, a_act, a_crit, False, uniforms,
            False, out_xy, out_act, out_rew, out_eng, out_rows)
        log_reward[ep] = total_r
        log_duration[ep] = duration
        log_tpow[ep] = t_pow
        log_reached[ep] = reached
        log_clamped[ep] = clamped
        if progress_every and (ep + 1) % progress_every == 0:
            tail = log_reached[max(0, ep - 99):ep + 1].mean()
            print(f"episode {ep + 1}/{n_ep}: reach rate (last 100) {tail:.2f}")
    log = TrainLog(total_reward=log_reward, duration=log_duration,
                   power_on_time=log_tpow, reached=log_reached,
                   n_clamped=log_clamped)
    return params, log


def _trajectory_from_buffers(start, t0, dt, reached, duration, t_pow,
                             n_epochs, n_rows, out_xy, out_act, out_rew,
                             out_eng, out_rows, heads):
    rows = out_rows[:n_epochs]
    acts = out_act[:n_epochs]
    engs = out_eng[:n_epochs].astype(bool)
    # Heading per epoch: engine-off actions keep the previous heading.
    ep_head = np.empty(n_epochs)
    h = 0.0
    for e in range(n_epochs):
        if engs[e]:
            h = heads[acts[e]]
        ep_head[e] = h
    times = dt * np.arange(1, n_rows + 1)
    if n_rows:
        times[-1] = duration
    rewards = np.zeros(n_rows)
    if n_epochs:
        rewards[np.cumsum(rows) - 1] = out_rew[:n_epochs]
    return Trajectory(
        times=np.concatenate([[0.0], times]),
        positions=np.vstack([np.asarray(start, float).reshape(1, 2),
                             out_xy[:n_rows]]).copy(),
        headings=np.concatenate([[0.0], np.repeat(ep_head, rows)]) % TWO_PI,
        engine_on=np.concatenate([[False], np.repeat(engs, rows)]),
        action_ids=np.concatenate(
            [[-1], np.repeat(acts, rows)]).astype(np.int64),
        rewards=np.concatenate([[0.0], rewards]),
        reached=bool(reached),
        arrival_time=duration if reached else math.nan,
        power_on_time=t_pow,
        flow_t0=t0,
    )


def evaluate(flow, params, geometry, reward_cfg, n_traj, mode="stochastic",
             seed=0, dt=None):
    """Roll out n_traj episodes without learning; returns Trajectories.

    stochastic mode samples from the softmax policy, greedy takes the
    argmax preference (ties to the lowest action id). Trajectory i uses
    an independent generator seeded with seed + i, so ensembles are
    reproducible and order-independent.
    """
    if mode not in ("stochastic", "greedy"):
        raise ValueError(f"mode must be stochastic or greedy, got {mode!r}")
    greedy = mode == "greedy"
    heads, engines = params.actions.control_arrays()
    dt, n_sub, cap = _resolve_steps(geometry, reward_cfg, dt)
    out_xy, out_act, out_rew, out_eng, out_rows = _episode_buffers(cap, n_sub)
    max_epochs = out_act.size
    coder = params.coder
    pk = flow._packed()
    trajectories = []
    for i in range(int(n_traj)):
        rng = np.random.default_rng(seed + i)
        start = sample_disc(rng, geometry.x_a, geometry.d_a)
        t0 = _flow_t0(flow, rng, cap, dt)
        uniforms = np.zeros(max_epochs) if greedy else rng.random(max_epochs)
        reached, duration, t_pow, _, n_epochs, _, n_rows = _kernels.rl_episode(
            *pk, params.H, params.V,
            coder.origin[0], coder.origin[1], 1.0 / coder.tile_size,
            coder.n_x, coder.n_y, heads, engines,
            start[0], start[1], t0, geometry.v_s, dt, n_sub, cap,
            geometry.x_b[0], geometry.x_b[1], geometry.d_b,
            reward_cfg.lam, reward_cfg.v_s_nominal,
            False, 0.1, 0.1, greedy, uniforms,
            True, out_xy, out_act, out_rew, out_eng, out_rows)
        trajectories.append(_trajectory_from_buffers(
            start, t0, dt, reached, duration, t_pow, n_epochs, n_rows,
            out_xy, out_act, out_rew, out_eng, out_rows, heads))
    return trajectories


def make_controller(params, mode="greedy", rng=None):
    """Adapt a policy into a navigator controller(state, t) -> action id."""
    if mode == "greedy":
        def controller(state, t):
            return _kernels.greedy_action(
                params.H, params.coder.state_of(state.position))
    else:
        if rng is None:
            raise ValueError("stochastic controller needs an rng")

        def controller(state, t):
            s = params.coder.state_of(state.position)
            return _kernels.select_action(params.H, s, rng.random())
    return controller


POLICY_MAGIC = "ZNAV-POLICY"
POLICY_VERSION = 1


def save_policy(params, path):
    """Versioned binary policy file: text header, then H and V as
    little-endian float64."""
    coder = params.coder
    actions = params.actions
    h_bytes = params.H.astype("<f8").tobytes()
    v_bytes = params.V.astype("<f8").tobytes()
    header = (
        f"{POLICY_MAGIC} {POLICY_VERSION}\n"
        f"n_states {coder.n_states}\n"
        f"n_actions {actions.n_actions}\n"
        f"coder {coder.origin[0]!r} {coder.origin[1]!r} "
        f"{coder.tile_size!r} {coder.n_x} {coder.n_y}\n"
        "angles " + " ".join(repr(float(a)) for a in actions.angles) + "\n"
        f"include_off {1 if actions.include_off else 0}\n"
        f"payload {len(h_bytes) + len(v_bytes)}\n\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(h_bytes)
        fh.write(v_bytes)


def load_policy(path, coder=None, actions=None):
    """Read a policy file; optional coder/actions declare what the caller
    expects and any mismatch raises PolicyFormatError."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head_end = blob.find(b"\n\n")
    if head_end < 0:
        raise PolicyFormatError(
            f"no header terminator found in first {len(blob)} bytes")
    fields = {}
    offset = 0
    for line in blob[:head_end].decode("ascii", "replace").split("\n"):
        if offset == 0:
            parts = line.split()
            if len(parts) != 2 or parts[0] != POLICY_MAGIC:
                raise PolicyFormatError(
                    f"bad magic line at byte 0: expected '{POLICY_MAGIC} "
                    f"<version>', got {line!r}")
            if parts[1] != str(POLICY_VERSION):
                raise PolicyVersionError(
                    f"unsupported policy version tag {parts[1]!r} "
                    f"(supported: {POLICY_VERSION})")
        else:
            key, _, val = line.partition(" ")
            fields[key] = val
        offset += len(line) + 1
    try:
        n_states = int(fields["n_states"])
        n_actions = int(fields["n_actions"])
        ox, oy, tile, n_x, n_y = fields["coder"].split()
        file_coder = TileCoder(origin=(float(ox), float(oy)),
                               tile_size=float(tile), n_x=int(n_x),
                               n_y=int(n_y))
        angles = np.array([float(a) for a in fields["angles"].split()])
        include_off = fields["include_off"] == "1"
        payload = int(fields["payload"])
    except (KeyError, ValueError) as exc:
        raise PolicyFormatError(f"bad policy header: {exc}") from exc
    file_actions = ActionSet(angles=angles, include_off=include_off)
    if file_coder.n_states != n_states:
        raise PolicyFormatError(
            f"header n_states {n_states} != coder grid {file_coder.n_states}")
    if file_actions.n_actions != n_actions:
        raise PolicyFormatError(
            f"header n_actions {n_actions} != action set {file_actions.n_actions}")
    body = blob[head_end + 2:]
    if len(body) != payload:
        raise PolicyFormatError(
            f"truncated payload at byte {head_end + 2 + len(body)}: "
            f"expected {payload} bytes, found {len(body)}")
    expect = n_states * n_actions * 8 + n_states * 8
    if payload != expect:
        raise PolicyFormatError(
            f"payload size {payload} does not match tables ({expect})")
    h_n = n_states * n_actions * 8
    H = np.frombuffer(body[:h_n], dtype="<f8").reshape(n_states, n_actions)
    V = np.frombuffer(body[h_n:], dtype="<f8")
    if coder is not None and coder != file_coder:
        raise PolicyFormatError(
            f"policy file coder {file_coder} does not match declared {coder}")
    if actions is not None and (
            actions.include_off != include_off
            or not np.array_equal(actions.angles, angles)):
        raise PolicyFormatError("policy file action set does not match declared")
    return PolicyParams(H=H.copy(), V=V.copy(), coder=file_coder,
                        actions=file_actions)
