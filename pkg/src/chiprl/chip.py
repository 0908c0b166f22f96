"""Simulated two-waveguide chip: the reinforcement-learning environment.

The chip takes a pair of electrode voltages, passes each through an unknown
(to the controller) second-order low-pass distortion, maps the distorted
voltages to an effective coupled-mode Hamiltonian, and reports the optical
power emerging from the first waveguide, sampled 50 times per control step.

The voltage-to-Hamiltonian map is a configurable surrogate
    H = [[d(V1), theta_c], [theta_c, d(V2)]],   d(v) = a1*v + a2*v*|v|
with a fixed inter-waveguide coupling and a mildly nonlinear, odd
electro-optic detuning per electrode. Default constants are chosen so the
reachable first-waveguide power spans the full [0, 1] range within the
+/-10 V actuator limit (the power ceiling is sin^2(theta_c), so theta_c
defaults to pi/2, and the detuning swing exceeds the sqrt(3)/2*pi rad
needed to reach zero output).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .quantum import measure

VOLTAGE_LIMIT = 10.0


def _as_pair(value, name):
    """Normalize a scalar-or-pair config entry to a 2-tuple of floats."""
    if np.isscalar(value):
        return (float(value), float(value))
    pair = tuple(float(v) for v in value)
    if len(pair) != 2:
        raise ValueError(f"{name} must be a scalar or a pair, got {value!r}")
    return pair


@dataclass(frozen=True)
class ChipConfig:
    """Physical and sampling constants of the simulated chip.

    `filter_natural_freq` and `filter_damping` accept either a scalar
    (identical distortion on both electrodes, the default) or a pair of
    per-electrode values.
    """

    coupling_theta: float = math.pi / 2
    eo_linear: float = 0.5
    eo_quadratic: float = 0.03
    filter_natural_freq: object = 2.0 * math.pi * 250.0
    filter_damping: object = 0.3
    sample_rate: float = 2.5e6
    step_duration: float = 2e-5
    samples_per_step: int = 50
    input_distribution: tuple = (0.0, 1.0)

    def __post_init__(self):
        wn = _as_pair(self.filter_natural_freq, "filter_natural_freq")
        zeta = _as_pair(self.filter_damping, "filter_damping")
        if min(wn) <= 0.0:
            raise ValueError("filter_natural_freq must be positive")
        if min(zeta) <= 0.0:
            raise ValueError("filter_damping must be positive")
        if self.sample_rate <= 0.0 or self.step_duration <= 0.0:
            raise ValueError("sample_rate and step_duration must be positive")
        if self.samples_per_step < 1:
            raise ValueError("samples_per_step must be at least 1")
        product = self.sample_rate * self.step_duration
        if abs(product - self.samples_per_step) > 1e-9 * self.samples_per_step:
            raise ValueError(
                f"sample_rate * step_duration = {product} does not equal "
                f"samples_per_step = {self.samples_per_step}"
            )
        dist = np.asarray(self.input_distribution, dtype=float)
        if dist.shape != (2,) or np.any(dist < 0.0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(
                f"input_distribution must be two non-negative entries summing "
                f"to 1, got {self.input_distribution!r}"
            )
        object.__setattr__(self, "input_distribution", (float(dist[0]), float(dist[1])))

    def filter_params(self, channel):
        """(natural frequency, damping) of one electrode's distortion."""
        wn = _as_pair(self.filter_natural_freq, "filter_natural_freq")
        zeta = _as_pair(self.filter_damping, "filter_damping")
        return wn[channel], zeta[channel]

    @property
    def sample_period(self):
        return 1.0 / self.sample_rate


def discretize_second_order(natural_freq, damping, period):
    """Exact zero-order-hold discretization of a unity-DC-gain low-pass.

    Continuous model: G(s) = wn^2 / (s^2 + 2*zeta*wn*s + wn^2) in
    controllable canonical state-space form. Returns (a_d, b_d, c_d, d_d).
    """
    if natural_freq <= 0.0 or damping <= 0.0:
        raise ValueError("natural frequency and damping must be positive")
    wn2 = natural_freq * natural_freq
    a = np.array([[0.0, 1.0], [-wn2, -2.0 * damping * natural_freq]])
    b = np.array([0.0, 1.0])
    c = np.array([wn2, 0.0])
    # expm of the augmented [[A, B], [0, 0]] block gives A_d and B_d at once
    block = np.zeros((3, 3))
    block[:2, :2] = a
    block[:2, 2] = b
    disc = expm(block * period)
    return disc[:2, :2], disc[:2, 2].copy(), c, 0.0


def discretize_filter(config, channel=0):
    """Discrete state-space matrices of one electrode's distortion filter."""
    wn, zeta = config.filter_params(channel)
    return discretize_second_order(wn, zeta, config.sample_period)


class DistortionFilter:
    """One electrode's discrete-time distortion, stepped sample by sample.

    The internal state is a real 2-vector, reset value [0, 0]. The filter is
    stateless as an object: `step` takes and returns the state explicitly.
    """

    def __init__(self, config, channel=0):
        self.a_d, self.b_d, self.c_d, self.d_d = discretize_filter(config, channel)

    def step(self, state, v_applied):
        """Advance one sample period; returns (new state, distorted voltage).

        The output is the filter response at the new sample instant with the
        input held constant over the elapsed period (zero-order hold).
        """
        state = np.asarray(state, dtype=float)
        new_state = self.a_d @ state + self.b_d * v_applied
        return new_state, float(self.c_d @ new_state)

    def run(self, state, v_sequence):
        """Step through a whole input sequence; returns the output sequence."""
        out = np.empty(len(v_sequence))
        for k, v in enumerate(np.asarray(v_sequence, dtype=float)):
            state, out[k] = self.step(state, v)
        return out


def detuning(v, config):
    """Electro-optic detuning (rad) produced by a distorted voltage."""
    v = np.asarray(v, dtype=float)
    return config.eo_linear * v + config.eo_quadratic * v * np.abs(v)


def hamiltonian_from_voltages(v_distorted, config):
    """Effective 2x2 Hamiltonian for a pair of distorted electrode voltages."""
    v = np.asarray(v_distorted, dtype=float)
    if v.shape != (2,) or not np.all(np.isfinite(v)):
        raise ValueError(f"expected two finite voltages, got {v_distorted!r}")
    d = detuning(v, config)
    theta = config.coupling_theta
    return np.array([[d[0], theta], [theta, d[1]]], dtype=complex)


def coupler_alpha(delta1, delta2, theta, input_distribution):
    """First-waveguide output power of the two-mode coupler, vectorized.

    Closed form of |<1| exp(-iH) |psi0>|^2 for H as built above; the common
    detuning (d1+d2)/2 is a global phase and drops out. Amplitudes of the
    injected light are the real square roots of `input_distribution`.
    """
    delta = (np.asarray(delta1, dtype=float) - np.asarray(delta2, dtype=float)) / 2.0
    omega = np.hypot(delta, theta)
    sinc = np.sinc(omega / np.pi)  # sin(omega)/omega, exact at omega = 0
    sp = math.sqrt(input_distribution[0])
    sq = math.sqrt(input_distribution[1])
    alpha = input_distribution[0] * np.cos(omega) ** 2
    alpha = alpha + (delta * sp + theta * sq) ** 2 * sinc * sinc
    return np.clip(alpha, 0.0, 1.0)


def static_alpha(v_pair, config):
    """Steady-state first-waveguide power for constant undistorted voltages.

    The distortion has unity DC gain, so a held voltage pair eventually
    reaches the chip undistorted; this is the corresponding output power.
    """
    d = detuning(np.asarray(v_pair, dtype=float), config)
    return float(
        coupler_alpha(d[..., 0], d[..., 1], config.coupling_theta, config.input_distribution)
    )


class WaveguideChip:
    """The simulated device: distortion filters + surrogate Hamiltonian map.

    Holds mutable per-electrode filter state between steps; a single
    instance must not be shared across threads, but independent instances
    are cheap.
    """

    def __init__(self, config=None):
        self.config = config or ChipConfig()
        cfg = self.config
        n = cfg.samples_per_step
        self._theta = cfg.coupling_theta
        self._input = cfg.input_distribution
        # Per-electrode within-step propagators for a constant held voltage:
        # x_{k+j} = A^j x_k + S_j B u,  S_j = sum_{i<j} A^i, output y = C x.
        self._ca = []      # (n, 2): C A^j for j = 1..n
        self._csb = []     # (n,):   C S_j B
        self._a_full = []  # (2, 2): A^n
        self._sb_full = []  # (2,):  S_n B
        for channel in range(2):
            a_d, b_d, c_d, _ = discretize_filter(cfg, channel)
            ca = np.empty((n, 2))
            csb = np.empty(n)
            a_pow = np.eye(2)
            s = np.zeros((2, 2))
            for j in range(n):
                s = s + a_pow
                a_pow = a_d @ a_pow
                ca[j] = c_d @ a_pow
                csb[j] = c_d @ (s @ b_d)
            self._ca.append(ca)
            self._csb.append(csb)
            self._a_full.append(a_pow)
            self._sb_full.append(s @ b_d)
        self._x = np.zeros((2, 2))  # row e: filter state of electrode e
        self._ready = False
        self._window = None
        self._last_action = None
        self.last_saturated = False

    def reset(self):
        """Zero the distortion state and settle one step at zero voltage."""
        self._x[:] = 0.0
        obs, _ = self.step((0.0, 0.0))
        return obs

    def step(self, action):
        """Hold a voltage pair for one control step of 50 sample periods.

        Returns (observation window, last-sample first-waveguide power).
        Voltages are clamped to the +/-10 V actuator limit; clamping is
        recorded in `last_saturated`.
        """
        v = np.asarray(action, dtype=float)
        if v.shape != (2,) or not np.all(np.isfinite(v)):
            raise ValueError(f"action must be two finite voltages, got {action!r}")
        u = np.clip(v, -VOLTAGE_LIMIT, VOLTAGE_LIMIT)
        self.last_saturated = bool(np.any(u != v))
        cfg = self.config
        distorted = np.empty((cfg.samples_per_step, 2))
        for e in range(2):
            distorted[:, e] = self._ca[e] @ self._x[e] + self._csb[e] * u[e]
            self._x[e] = self._a_full[e] @ self._x[e] + self._sb_full[e] * u[e]
        d = detuning(distorted, cfg)
        alpha = coupler_alpha(d[:, 0], d[:, 1], self._theta, self._input)
        self._window = alpha
        self._last_action = u
        self._ready = True
        return alpha, float(alpha[-1])

    @property
    def observation(self):
        """The most recent 50-sample window of first-waveguide power."""
        if not self._ready:
            raise RuntimeError("environment not reset: no observation yet")
        return self._window

    @property
    def last_action(self):
        """The most recent clamped voltage pair actually applied."""
        if not self._ready:
            raise RuntimeError("environment not reset: no action applied yet")
        return self._last_action

    def peek_distribution(self):
        """Full output distribution [alpha, beta] of the most recent sample."""
        if not self._ready:
            raise RuntimeError("environment not reset: no distribution yet")
        a = float(self._window[-1])
        return np.array([a, 1.0 - a])

    def sample_pipeline_alpha(self, v_distorted):
        """Reference single-sample output via the generic quantum pipeline.

        Used to cross-check the vectorized closed form in `step` against the
        eigendecomposition path; not called in the control loop.
        """
        from .quantum import evolve, unitary_from_hamiltonian

        h = hamiltonian_from_voltages(v_distorted, self.config)
        psi0 = np.sqrt(np.asarray(self._input, dtype=complex))
        return float(measure(evolve(unitary_from_hamiltonian(h), psi0))[0])
