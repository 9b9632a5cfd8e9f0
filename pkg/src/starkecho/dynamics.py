"""Piecewise-constant propagation of three-level density matrices.

Basis order is |1> (ground), |2> (excited), |3> (auxiliary ground). The
RWA Hamiltonian for one atom group is

    [[delta1, omega1, 0     ],
     [omega1, delta2, omega2],
     [0,      omega2, 0     ]]

in angular units (rad/us, hbar = 1), and the equation solved is
``d rho/dt = -i[H, rho] - (gamma rho + rho gamma)/2``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .ensemble import AtomGroup, Ensemble, build_ensemble
from .sequence import Channel, PulseSequence

TWO_PI = 2.0 * math.pi
METHODS = ("exact_piecewise", "rk4")
CONTROL_DETUNING = ("none", "group")
CHUNK = 64  # groups per work unit; fixed so results never depend on worker count
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class HamiltonianFrame:
    omega1: float
    omega2: float
    delta1: float
    delta2: float

    def matrix(self) -> np.ndarray:
        return np.array([
            [self.delta1, self.omega1, 0.0],
            [self.omega1, self.delta2, self.omega2],
            [0.0, self.omega2, 0.0],
        ])


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.01
    t_end: float = 25.0
    method: str = "exact_piecewise"
    control_detuning: str = "none"
    # RK4 splits a grid step so |generator| * h stays below this
    rk4_max_phase: float = 0.15
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.t_end / self.dt > 1e7:
            raise ValueError("t_end/dt exceeds 1e7 steps")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.control_detuning not in CONTROL_DETUNING:
            raise ValueError(f"control_detuning must be one of {CONTROL_DETUNING}")

    @classmethod
    def from_sequence(cls, sequence: PulseSequence, **overrides) -> "PropagationConfig":
        kw = {"dt": sequence.dt, "t_end": sequence.t_end}
        kw.update(overrides)
        return cls(**kw)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


def ground_state() -> np.ndarray:
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def decay_rates(gamma=None) -> np.ndarray:
    """Validated 3x3 decay matrix (1/us); ``None`` means no decay."""
    if gamma is None:
        return np.zeros((3, 3))
    g = np.asarray(gamma, dtype=float)
    if g.shape != (3, 3):
        raise ValueError(f"decay matrix must be 3x3, got shape {g.shape}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("decay rates must be finite and non-negative")
    return g


def frame_at(t: float, sequence: PulseSequence, group: AtomGroup, control_detuning: str = "none") -> HamiltonianFrame:
    """Hamiltonian parameters seen by ``group`` at time ``t``."""
    omega1 = omega2 = 0.0
    detune = 0.0
    control_on = False
    for p in sequence.pulses:
        if not p.active(t):
            continue
        if p.channel is Channel.PROBE:
            omega1 += TWO_PI * p.rabi
            detune += p.detune
        else:
            omega2 += TWO_PI * p.rabi
            control_on = True
    d = group.delta * 1e-3
    delta2 = TWO_PI * d if control_on and control_detuning == "group" else 0.0
    return HamiltonianFrame(omega1, omega2, TWO_PI * (d + detune), delta2)


def _hermitize(rho):
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def _unitary(H, h):
    lam, V = np.linalg.eigh(H)
    return np.einsum("...ij,...j,...kj->...ik", V, np.exp(-1j * lam * h), V)


def _rhs(rho, H, gamma, decays):
    out = -1j * (H @ rho - rho @ H)
    if decays:
        out -= 0.5 * (gamma @ rho + rho @ gamma)
    return out


def _rk4(rho, H, gamma, h, decays):
    k1 = _rhs(rho, H, gamma, decays)
    k2 = _rhs(rho + 0.5 * h * k1, H, gamma, decays)
    k3 = _rhs(rho + 0.5 * h * k2, H, gamma, decays)
    k4 = _rhs(rho + h * k3, H, gamma, decays)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def step(rho, frame: HamiltonianFrame, gamma=None, dt: float = 0.01, method: str = "exact_piecewise") -> np.ndarray:
    """Advance one density matrix by ``dt`` under a constant frame.

    ``exact_piecewise`` applies the matrix exponential (eigendecomposition
    when there is no decay); ``rk4`` is one classical fourth-order step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = decay_rates(gamma)
    H = frame.matrix()
    rho = np.asarray(rho, dtype=complex)
    decays = bool(np.any(g))
    if method == "rk4":
        out = _rk4(rho, H, g, dt, decays)
    elif method == "exact_piecewise":
        if decays:
            out = expm((-1j * H - 0.5 * g) * dt) @ rho @ expm((1j * H - 0.5 * g) * dt)
        else:
            U = _unitary(H, dt)
            out = U @ rho @ U.conj().T
    else:
        raise ValueError(f"unknown method {method!r}")
    return _hermitize(out)


# ---------------------------------------------------------------------------
# batched propagation over many groups

def _snap(t, dt):
    k = round(t / dt)
    return k * dt if abs(t - k * dt) < _EDGE_TOL else t


def _schedule(sequence: PulseSequence, config: PropagationConfig):
    """Sub-steps ``(active, h, record)`` covering the output grid.

    No sub-step straddles a pulse edge; ``record`` is the output index
    reached at the end of the sub-step, or -1.
    """
    dt = config.dt
    edges = sorted({_snap(t, dt) for p in sequence.pulses for t in (p.t_on, p.t_off)})
    pulses = sequence.pulses
    out = []
    j = 0
    for k in range(1, config.n_steps + 1):
        a, b = (k - 1) * dt, k * dt
        while j < len(edges) and edges[j] <= a + _EDGE_TOL:
            j += 1
        cuts = [a]
        while j < len(edges) and edges[j] < b - _EDGE_TOL:
            cuts.append(edges[j])
            j += 1
        cuts.append(b)
        for i, (lo, hi) in enumerate(zip(cuts[:-1], cuts[1:])):
            mid = 0.5 * (lo + hi)
            active = tuple(n for n, p in enumerate(pulses) if p.active(mid))
            out.append((active, hi - lo, k if i == len(cuts) - 2 else -1))
    return out


def _hamiltonians(sequence, active, deltas_khz, control_detuning):
    G = len(deltas_khz)
    H = np.zeros((G, 3, 3))
    d = TWO_PI * deltas_khz * 1e-3
    H[:, 0, 0] = d
    control_on = False
    for n in active:
        p = sequence.pulses[n]
        if p.channel is Channel.PROBE:
            H[:, 0, 1] += TWO_PI * p.rabi
            H[:, 1, 0] += TWO_PI * p.rabi
            H[:, 0, 0] += TWO_PI * p.detune
        else:
            H[:, 1, 2] += TWO_PI * p.rabi
            H[:, 2, 1] += TWO_PI * p.rabi
            control_on = True
    if control_on and control_detuning == "group":
        H[:, 1, 1] = d
    return H


def propagate_groups(sequence: PulseSequence, deltas_khz, gamma=None, config: PropagationConfig | None = None, schedule=None):
    """Density matrices of every group on the output grid.

    Returns ``(times, rho)`` with ``rho`` of shape (groups, times, 3, 3).
    All groups start in |1><1|.
    """
    config = config or PropagationConfig.from_sequence(sequence)
    deltas = np.atleast_1d(np.asarray(deltas_khz, dtype=float))
    g = decay_rates(gamma)
    decays = bool(np.any(g))
    G = len(deltas)
    times = config.times()
    rho = np.zeros((G, 3, 3), dtype=complex)
    rho[:, 0, 0] = 1.0
    out = np.empty((G, len(times), 3, 3), dtype=complex)
    out[:, 0] = rho
    cache = {}
    if schedule is None:
        schedule = _schedule(sequence, config)
    for active, h, record in schedule:
        key = (active, round(h, 12))
        if key not in cache:
            H = _hamiltonians(sequence, active, deltas, config.control_detuning)
            if config.method == "rk4":
                bound = 2 * np.abs(H).sum(axis=2).max() + np.abs(g).sum(axis=1).max()
                n_sub = max(1, math.ceil(h * bound / config.rk4_max_phase))
                cache[key] = (H, n_sub)
            elif decays:
                cache[key] = (expm((-1j * H - 0.5 * g) * h), expm((1j * H - 0.5 * g) * h))
            else:
                U = _unitary(H, h)
                cache[key] = (U, np.conj(np.swapaxes(U, -1, -2)))
        if config.method == "rk4":
            H, n_sub = cache[key]
            for _ in range(n_sub):
                rho = _rk4(rho, H, g, h / n_sub, decays)
        else:
            L, R = cache[key]
            rho = L @ rho @ R
        rho = _hermitize(rho)
        if record >= 0:
            out[:, record] = rho
    return times, out


@dataclass
class GroupTrace:
    delta: float
    times: np.ndarray
    rho: np.ndarray  # (times, 3, 3)


def propagate_group(sequence: PulseSequence, group: AtomGroup, gamma=None, config: PropagationConfig | None = None) -> GroupTrace:
    times, rho = propagate_groups(sequence, [group.delta], gamma, config)
    return GroupTrace(group.delta, times, rho[0])


@dataclass
class TraceSet:
    """Macroscopic (weighted) density matrix on the time grid.

    ``per_group`` holds rho_12 of every group, shape (groups, times), when
    it was requested.
    """
    times: np.ndarray
    macro: np.ndarray  # (times, 3, 3)
    deltas: np.ndarray
    weights: np.ndarray
    per_group: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def rho12(self) -> np.ndarray:
        return self.macro[:, 0, 1]

    def index(self, t: float) -> int:
        return int(round((t - self.times[0]) / self.dt))

    def columns(self) -> dict[str, np.ndarray]:
        m = self.macro
        return {
            "time_us": self.times,
            "re12": m[:, 0, 1].real, "im12": m[:, 0, 1].imag,
            "re13": m[:, 0, 2].real, "im13": m[:, 0, 2].imag,
            "re23": m[:, 1, 2].real, "im23": m[:, 1, 2].imag,
            "p11": m[:, 0, 0].real, "p22": m[:, 1, 1].real, "p33": m[:, 2, 2].real,
        }


def propagate_ensemble(
    sequence: PulseSequence,
    ensemble: Ensemble | None = None,
    gamma=None,
    config: PropagationConfig | None = None,
    per_group: bool = False,
) -> TraceSet:
    """Propagate every group and reduce to the weighted macroscopic trace.

    Groups are processed in fixed chunks and summed in ascending-delta
    order, so the result is bitwise identical for any ``config.workers``.
    """
    ensemble = ensemble or build_ensemble(sequence.ensemble_spec)
    config = config or PropagationConfig.from_sequence(sequence)
    deltas = ensemble.deltas
    weights = ensemble.weights
    chunks = [slice(i, i + CHUNK) for i in range(0, len(deltas), CHUNK)]
    schedule = _schedule(sequence, config)

    def work(sl):
        return propagate_groups(sequence, deltas[sl], gamma, config, schedule)[1]

    if config.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(sl) for sl in chunks]

    times = config.times()
    macro = np.zeros((len(times), 3, 3), dtype=complex)
    rho12 = np.empty((len(deltas), len(times)), dtype=complex) if per_group else None
    for sl, rho in zip(chunks, results):
        for i, r in enumerate(rho):
            j = sl.start + i
            macro += weights[j] * r
            if per_group:
                rho12[j] = r[:, 0, 1]
    return TraceSet(times, macro, deltas, weights, rho12)
