"""Divergence-free 2D flow fields: analytic test flows, frozen synthetic
turbulence with a power-law spectrum, and a time-evolving surrogate.

All mode-sum fields derive from a streamfunction
``psi(x) = sum_m a_m sin(k_m . x + phi_m)`` with integer wavevectors, so
``u = (d psi/dy, -d psi/dx)`` is incompressible by construction and the
velocity gradient is available in closed form everywhere.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import KIND_GRIDDED, KIND_MODE_SUM, KIND_TAYLOR_GREEN, KIND_UNIFORM

TWO_PI = 2.0 * math.pi

_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_PATHS = np.empty((0, 0), dtype=np.float64)
_EMPTY_GRIDS = np.empty((0, 0, 0), dtype=np.float64)


@dataclass(frozen=True)
class SpectrumSpec:
    """Target shell spectrum for synthetic snapshots.

    Shell s collects every wavevector with s <= |k| < s+1 (k in units of
    2*pi/L) and receives total energy energy_scale * s**slope.
    """

    k_min: int
    k_max: int
    slope: float = -5.0 / 3.0
    energy_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.k_min < self.k_max):
            raise ValueError(
                f"spectrum needs 1 <= k_min < k_max, got ({self.k_min}, {self.k_max})")
        if not self.slope < 0:
            raise ValueError(f"spectral slope must be negative, got {self.slope}")
        if not self.energy_scale > 0:
            raise ValueError(f"energy_scale must be positive, got {self.energy_scale}")


@dataclass(frozen=True)
class FourierMode:
    """One streamfunction mode: amplitude, phase and (optional) phase
    decorrelation rate. A zero rate means the mode is frozen in time."""

    wavevector: tuple
    amplitude: float
    phase: float
    decorrelation_rate: float = 0.0

    def __post_init__(self):
        kx, ky = self.wavevector
        if int(kx) != kx or int(ky) != ky:
            raise ValueError(f"wavevector must be integer, got {self.wavevector}")
        if kx == 0 and ky == 0:
            raise ValueError("wavevector (0, 0) carries no velocity")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.decorrelation_rate < 0:
            raise ValueError(
                f"decorrelation_rate must be >= 0, got {self.decorrelation_rate}")
        object.__setattr__(self, "wavevector", (int(kx), int(ky)))


@dataclass(frozen=True)
class FlowSample:
    """Velocity and velocity-gradient (a_ij = d u_i / d x_j) at one point."""

    velocity: np.ndarray
    gradient: np.ndarray

    @property
    def divergence(self):
        return self.gradient[0, 0] + self.gradient[1, 1]


def okubo_weiss_parameter(gradient):
    """Strain-vs-rotation discriminant of a 2x2 velocity gradient.

    Positive in strain-dominated regions, negative inside vortices.
    """
    a = np.asarray(gradient, dtype=float)
    normal = a[0, 0] - a[1, 1]
    shear = a[1, 0] + a[0, 1]
    vort = a[1, 0] - a[0, 1]
    return normal * normal + shear * shear - vort * vort


class FlowField:
    """Base class: an L-periodic, divergence-free planar velocity field.

    Instances are immutable after construction and therefore safe to
    share between concurrent evaluators; unsteady fields precompute their
    stochastic phase paths so sampling is a pure function of (x, t).
    """

    kind = "abstract"

    def __init__(self, L=TWO_PI, time_dependent=False):
        if L <= 0:
            raise ValueError(f"period L must be positive, got {L}")
        self.L = float(L)
        self.time_dependent = bool(time_dependent)

    # Packed tuple consumed by the jitted kernels.
    def _packed(self):
        raise NotImplementedError

    def _scratch(self):
        """Phasor-table workspace matching this flow's packed layout."""
        return np.empty((4, self._packed()[-1]))

    def sample(self, x, t=0.0):
        """Velocity and gradient at position x (positions wrap mod L)."""
        px, py = float(x[0]), float(x[1])
        u, v, a11, a12, a21, a22 = _kernels.flow_eval(
            *self._packed(), self._scratch(), px, py, float(t), True)
        return FlowSample(velocity=np.array([u, v]),
                          gradient=np.array([[a11, a12], [a21, a22]]))

    def velocity(self, x, t=0.0):
        px, py = float(x[0]), float(x[1])
        u, v, _, _, _, _ = _kernels.flow_eval(
            *self._packed(), self._scratch(), px, py, float(t), False)
        return np.array([u, v])

    def okubo_weiss(self, x, t=0.0):
        return okubo_weiss_parameter(self.sample(x, t).gradient)

    def velocity_grid(self, n, t=0.0):
        """(u, v) arrays on the n x n grid x_i = i L / n, 'ij' indexed."""
        raise NotImplementedError

    def u_max(self, t=0.0, n_grid=256):
        """Max speed over a dense sampling grid (>= n_grid^2 per period)."""
        u, v = self.velocity_grid(max(int(n_grid), 2), t)
        return float(np.max(np.hypot(u, v)))


class AnalyticFlow(FlowField):
    """Named closed-form test flows: quiescent, uniform, taylor_green."""

    kind = "analytic"

    def __init__(self, name, params=None, L=TWO_PI):
        super().__init__(L=L, time_dependent=False)
        params = dict(params or {})
        if name == "quiescent":
            self._code = KIND_UNIFORM
            self._params = np.array([0.0, 0.0])
        elif name == "uniform":
            self._code = KIND_UNIFORM
            self._params = np.array([float(params.pop("ux", 0.0)),
                                     float(params.pop("uy", 0.0))])
        elif name == "taylor_green":
            if abs(self.L - TWO_PI) > 1e-12:
                raise ValueError("taylor_green flow is defined on L = 2*pi")
            self._code = KIND_TAYLOR_GREEN
            self._params = np.array([float(params.pop("amplitude", 1.0))])
        else:
            raise ValueError(f"unknown analytic flow name {name!r}")
        if params:
            raise ValueError(f"unused parameters for {name!r}: {sorted(params)}")
        self.name = name
        self._pk = (self._code, self._params,
                    _EMPTY_I, _EMPTY_I, _EMPTY_F, _EMPTY_F, _EMPTY_F,
                    _EMPTY_F, _EMPTY_F, _EMPTY_F, _EMPTY_F, _EMPTY_F,
                    _EMPTY_PATHS, 0.0, 0.0, _EMPTY_GRIDS, self.L, 1)

    @property
    def params(self):
        if self.name == "uniform":
            return {"ux": self._params[0], "uy": self._params[1]}
        if self.name == "taylor_green":
            return {"amplitude": self._params[0]}
        return {}

    def _packed(self):
        return self._pk

    def velocity_grid(self, n, t=0.0):
        xs = np.arange(n) * (self.L / n)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        if self._code == KIND_UNIFORM:
            return (np.full((n, n), self._params[0]),
                    np.full((n, n), self._params[1]))
        a = self._params[0]
        return a * np.sin(X) * np.cos(Y), -a * np.cos(X) * np.sin(Y)


class ModeSumFlow(FlowField):
    """Streamfunction mode sum; frozen, or unsteady via per-mode
    mean-reverting phase paths precomputed at construction."""

    kind = "modesum"

    def __init__(self, modes, L=TWO_PI, seed=None, phase_sigma=2.0,
                 horizon=None, path_dt=None, spec=None):
        if not modes:
            raise ValueError("a mode-sum flow needs at least one mode")
        modes = sorted(modes, key=lambda m: m.wavevector)
        rates = np.array([m.decorrelation_rate for m in modes])
        unsteady = bool(np.any(rates > 0))
        super().__init__(L=L, time_dependent=unsteady)
        self.modes = tuple(modes)
        self.spec = spec
        self.seed = seed
        self.phase_sigma = float(phase_sigma)
        ikx = np.array([m.wavevector[0] for m in modes], dtype=np.int64)
        iky = np.array([m.wavevector[1] for m in modes], dtype=np.int64)
        amp = np.array([m.amplitude for m in modes])
        phase0 = np.array([m.phase for m in modes])
        kscale = TWO_PI / self.L
        if abs(kscale - 1.0) > 1e-12:
            raise ValueError("mode-sum flows are defined on L = 2*pi")

        if unsteady:
            if seed is None:
                raise ValueError("unsteady mode sums need a seed for phase paths")
            gmax = float(np.max(rates))
            if horizon is None:
                gmin = float(np.min(rates[rates > 0]))
                horizon = 20.0 / gmin
            if path_dt is None:
                path_dt = 1.0 / (32.0 * gmax)
            n_nodes = int(math.ceil(horizon / path_dt)) + 1
            if n_nodes > 5_000_000:
                raise ValueError("phase-path grid too large; raise path_dt "
                                 "or lower the horizon")
            self.horizon = float(horizon)
            self.path_dt = float(path_dt)
            paths = _ou_phase_paths(phase0, rates, self.phase_sigma,
                                    self.path_dt, n_nodes, seed)
            path_inv_dt = 1.0 / self.path_dt
        else:
            self.horizon = None
            self.path_dt = None
            paths = _EMPTY_PATHS
            path_inv_dt = 0.0
        self._paths = paths
        kyabs = np.abs(iky)
        kysgn = np.where(iky >= 0, 1.0, -1.0)
        fkx = ikx.astype(np.float64)
        fky = iky.astype(np.float64)
        ktab = int(max(ikx.max(), kyabs.max())) + 1
        self._pk = (KIND_MODE_SUM, _EMPTY_F, ikx, kyabs, kysgn,
                    amp * fky, -amp * fkx, amp * fkx * fky,
                    -amp * fky * fky, amp * fkx * fkx,
                    np.cos(phase0), np.sin(phase0),
                    paths, 0.0, path_inv_dt, _EMPTY_GRIDS, self.L, ktab)

    def _packed(self):
        return self._pk

    def phases_at(self, t):
        """Instantaneous mode phases (base phases for frozen flows)."""
        base = np.array([m.phase for m in self.modes])
        if self._paths.shape[0] == 0:
            return base
        s = np.clip(t / self.path_dt, 0.0, self._paths.shape[0] - 1.0)
        i0 = min(int(s), self._paths.shape[0] - 2)
        f = s - i0
        return self._paths[i0] * (1.0 - f) + self._paths[i0 + 1] * f

    def velocity_grid(self, n, t=0.0):
        xs = np.arange(n) * (self.L / n)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        u = np.zeros((n, n))
        v = np.zeros((n, n))
        phases = self.phases_at(t)
        for m, ph in zip(self.modes, phases):
            kx, ky = m.wavevector
            c = np.cos(kx * X + ky * Y + ph)
            u += m.amplitude * ky * c
            v -= m.amplitude * kx * c
        return u, v


class GriddedFlow(FlowField):
    """Velocity known on an L-periodic node grid; bilinear interpolation
    for u and centered finite differences (then bilinear) for gradients."""

    kind = "gridded"

    def __init__(self, u, v, L=TWO_PI):
        super().__init__(L=L, time_dependent=False)
        u = np.ascontiguousarray(u, dtype=np.float64)
        v = np.ascontiguousarray(v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError("u and v must be equal-shape 2D arrays")
        if min(u.shape) < 4:
            raise ValueError("gridded flows need at least 4 nodes per axis")
        nx, ny = u.shape
        hx = self.L / nx
        hy = self.L / ny
        grids = np.empty((6, nx, ny))
        grids[0] = u
        grids[1] = v
        # Periodic centered differences at the nodes.
        grids[2] = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2 * hx)
        grids[3] = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * hy)
        grids[4] = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2 * hx)
        grids[5] = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * hy)
        self._grids = grids
        self._pk = (KIND_GRIDDED, _EMPTY_F,
                    _EMPTY_I, _EMPTY_I, _EMPTY_F, _EMPTY_F, _EMPTY_F,
                    _EMPTY_F, _EMPTY_F, _EMPTY_F, _EMPTY_F, _EMPTY_F,
                    _EMPTY_PATHS, 0.0, 0.0, grids, self.L, 1)

    @property
    def grid_shape(self):
        return self._grids.shape[1:]

    def _packed(self):
        return self._pk

    def velocity_grid(self, n, t=0.0):
        nx, ny = self.grid_shape
        if n == nx and n == ny:
            return self._grids[0].copy(), self._grids[1].copy()
        xs = np.arange(n) * (self.L / n)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return (_bilinear_periodic(self._grids[0], X, Y, self.L),
                _bilinear_periodic(self._grids[1], X, Y, self.L))

    def u_max(self, t=0.0, n_grid=256):
        # Bilinear interpolants never exceed their node values per
        # component, so the node scan is the honest maximum.
        return float(np.max(np.hypot(self._grids[0], self._grids[1])))


def _bilinear_periodic(g, X, Y, L):
    nx, ny = g.shape
    gx = (X % L) / L * nx
    gy = (Y % L) / L * ny
    i0 = np.minimum(gx.astype(np.int64), nx - 1)
    j0 = np.minimum(gy.astype(np.int64), ny - 1)
    fx = gx - i0
    fy = gy - j0
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % ny
    return ((1 - fx) * (1 - fy) * g[i0, j0] + fx * (1 - fy) * g[i1, j0]
            + (1 - fx) * fy * g[i0, j1] + fx * fy * g[i1, j1])


def _ou_phase_paths(phase0, rates, sigma, path_dt, n_nodes, seed):
    """Exact-discretization Ornstein-Uhlenbeck phase paths, one column per
    mode, mean phase0 and stationary standard deviation sigma."""
    n_modes = phase0.size
    rng = np.random.default_rng([int(seed), 0x0D])
    noise = rng.standard_normal((n_nodes, n_modes))
    rho = np.exp(-np.asarray(rates) * path_dt)
    diff = sigma * np.sqrt(np.maximum(0.0, 1.0 - rho * rho))
    paths = np.empty((n_nodes, n_modes))
    paths[0] = phase0 + sigma * noise[0]
    for i in range(1, n_nodes):
        paths[i] = phase0 + (paths[i - 1] - phase0) * rho + diff * noise[i]
    return paths


def _shell_modes(spec):
    """Half-plane integer wavevectors grouped into unit shells
    s = floor(|k|), for s in [k_min, k_max]."""
    shells = {}
    for kx in range(0, spec.k_max + 2):
        ky_lo = 1 if kx == 0 else -(spec.k_max + 1)
        for ky in range(ky_lo, spec.k_max + 2):
            if kx == 0 and ky <= 0:
                continue
            s = int(math.floor(math.hypot(kx, ky)))
            if spec.k_min <= s <= spec.k_max:
                shells.setdefault(s, []).append((kx, ky))
    return shells


def generate_snapshot(spec):
    """Frozen mode-sum field with shell spectrum energy_scale * s**slope.

    Every mode of a shell carries the same energy; phases are uniform
    random, drawn from a generator seeded with spec.seed, so equal specs
    produce bit-identical fields.
    """
    shells = _shell_modes(spec)
    wavevectors = []
    amplitudes = []
    for s in sorted(shells):
        kvs = shells[s]
        e_mode = spec.energy_scale * float(s) ** spec.slope / len(kvs)
        for kx, ky in kvs:
            wavevectors.append((kx, ky))
            amplitudes.append(math.sqrt(2.0 * e_mode) / math.hypot(kx, ky))
    order = sorted(range(len(wavevectors)), key=lambda i: wavevectors[i])
    rng = np.random.default_rng(spec.seed)
    phases = rng.uniform(0.0, TWO_PI, len(wavevectors))
    modes = [FourierMode(wavevectors[i], amplitudes[i], phases[j])
             for j, i in enumerate(order)]
    return ModeSumFlow(modes, spec=spec)


def generate_unsteady(spec, decorrelation_time_at_kmin, horizon=None,
                      path_dt=None, phase_sigma=2.0):
    """Time-evolving surrogate: the snapshot's modes with mean-reverting
    phases whose rates follow eddy-turnover scaling (|k| / k_min)^(2/3)
    over the large-scale decorrelation time.

    The shell spectrum is preserved exactly at every instant and the
    field stays divergence-free. Phase paths cover [0, horizon] (sampling
    outside clamps to the endpoints) and are regenerated bit-identically
    from (spec.seed, phase_sigma, horizon, path_dt).
    """
    tau = float(decorrelation_time_at_kmin)
    if not tau > 0:
        raise ValueError(f"decorrelation time must be positive, got {tau}")
    base = generate_snapshot(spec)
    if not math.isfinite(tau):
        return base  # frozen limit: every decorrelation rate is zero
    modes = []
    for m in base.modes:
        knorm = math.hypot(*m.wavevector)
        rate = (knorm / spec.k_min) ** (2.0 / 3.0) / tau
        modes.append(FourierMode(m.wavevector, m.amplitude, m.phase, rate))
    if horizon is None:
        horizon = 20.0 * tau
    return ModeSumFlow(modes, seed=spec.seed, phase_sigma=phase_sigma,
                       horizon=horizon, path_dt=path_dt, spec=spec)


def measure_spectrum(flow, n_grid=256, t=0.0):
    """Shell-summed velocity spectrum E(s) = sum_{s <= |k| < s+1} |u_k|^2
    measured by FFT of the rasterized field. Returns (shells, energy)."""
    u, v = flow.velocity_grid(n_grid, t)
    n = n_grid
    uh = np.fft.rfft2(u) / (n * n)
    vh = np.fft.rfft2(v) / (n * n)
    e = np.abs(uh) ** 2 + np.abs(vh) ** 2
    weight = np.full(e.shape, 2.0)
    weight[:, 0] = 1.0
    if n % 2 == 0:
        weight[:, -1] = 1.0
    e *= weight
    kx = np.fft.fftfreq(n, d=1.0 / n)[:, None]
    ky = np.fft.rfftfreq(n, d=1.0 / n)[None, :]
    shell = np.floor(np.hypot(kx, ky)).astype(np.int64)
    n_shell = shell.max() + 1
    spectrum = np.bincount(shell.ravel(), weights=e.ravel(), minlength=n_shell)
    return np.arange(n_shell), spectrum


def fit_spectrum_slope(flow, k_lo=None, k_hi=None, n_grid=256, t=0.0):
    """Least-squares log-log slope of the measured shell spectrum over
    shells [k_lo, k_hi] (defaults to the generating spec's range)."""
    if (k_lo is None or k_hi is None):
        spec = getattr(flow, "spec", None)
        if spec is None:
            raise ValueError("flow has no spectrum spec; pass k_lo and k_hi")
        k_lo = spec.k_min if k_lo is None else k_lo
        k_hi = spec.k_max if k_hi is None else k_hi
    shells, energy = measure_spectrum(flow, n_grid=n_grid, t=t)
    sel = (shells >= k_lo) & (shells <= k_hi) & (energy > 0)
    if sel.sum() < 2:
        raise ValueError("not enough occupied shells to fit a slope")
    return float(np.polyfit(np.log(shells[sel]), np.log(energy[sel]), 1)[0])


def okubo_weiss_grid(flow, n=256, t=0.0):
    """Okubo-Weiss parameter on the n x n grid x_i = i L / n ('ij')."""
    xs = np.arange(n) * (flow.L / n)
    out = np.empty((n, n))
    pk = flow._packed()
    scratch = flow._scratch()
    for i, x in enumerate(xs):
        for j, y in enumerate(xs):
            _, _, a11, a12, a21, a22 = _kernels.flow_eval(
                *pk, scratch, float(x), float(y), float(t), True)
            normal = a11 - a22
            shear = a21 + a12
            vort = a21 - a12
            out[i, j] = normal * normal + shear * shear - vort * vort
    return out
