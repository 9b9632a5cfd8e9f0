"""Echo detection, the cos-phi efficiency sweeps, and the phase-ledger oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dynamics import PropagationConfig, TraceSet, propagate_ensemble
from .ensemble import Ensemble, build_ensemble, resonant_only
from .sequence import (
    Channel,
    Pulse,
    PulseSequence,
    duration_for_phase,
    pulse_area,
    stark_phase,
    validate,
)

SILENCE_FRACTION = 0.05
REFERENCE_DELAY = 0.05   # us after the data pulse where the reference sign is read
WINDOW_HALFWIDTH = 1.0
AREA_TOLERANCE = 0.10
BALANCED_TOLERANCE = 0.02

__all__ = [
    "TraceSet", "run", "EchoReport", "detect_echo", "silence_threshold", "bare_sequence",
    "data_pulse", "truncate", "SweepTable", "efficiency_sweep", "sweep_2d", "cosine_fit",
    "ClassificationError", "classify", "OraclePrediction", "PredictedEcho", "LedgerEntry",
    "oracle_predict", "EchoCheck", "CompareReport", "compare", "relative_linf",
]


# ---------------------------------------------------------------------------
# pulse roles

class ClassificationError(ValueError):
    def __init__(self, pulse: Pulse, reason: str):
        self.pulse = pulse
        super().__init__(f"cannot classify pulse {pulse.name}: {reason}")


def _near(area, nominal):
    return abs(area - nominal) <= AREA_TOLERANCE * nominal


def classify(p: Pulse) -> str:
    """Role of a pulse: data, rephasing, stark, control or identity."""
    area = pulse_area(p)
    if p.channel is Channel.CONTROL:
        if _near(area, 2 * math.pi):
            return "control"
        raise ClassificationError(p, f"control pulse area {area / math.pi:.3g}pi is not 2pi")
    if p.detune != 0:
        return "stark"
    if _near(area, math.pi / 2):
        return "data"
    if _near(area, math.pi):
        return "rephasing"
    if _near(area, 2 * math.pi):
        return "identity"
    raise ClassificationError(p, f"probe area {area / math.pi:.3g}pi is not pi/2, pi or 2pi")


def data_pulse(sequence: PulseSequence) -> Pulse:
    """The first resonant pi/2 probe pulse."""
    for p in sequence.pulses:
        if p.channel is Channel.PROBE and p.detune == 0 and _near(pulse_area(p), math.pi / 2):
            return p
    raise ValueError("sequence has no data (pi/2 probe) pulse")


def bare_sequence(sequence: PulseSequence) -> PulseSequence:
    """Same program with Stark and control pulses removed."""
    keep = [p for p in sequence.pulses if p.channel is Channel.PROBE and p.detune == 0]
    return sequence.replace_pulses(keep)


def truncate(sequence: PulseSequence, t_stop: float) -> PulseSequence:
    """Drop pulses starting at or after ``t_stop`` and end the grid there."""
    keep = [p for p in sequence.pulses if p.t_on < t_stop]
    t_end = max([t_stop] + [p.t_off for p in keep])
    n = math.ceil(t_end / sequence.dt - 1e-9)
    t_end = min(n * sequence.dt, sequence.t_end)
    return PulseSequence(tuple(keep), t_end, sequence.dt, sequence.ensemble_spec)


def _config_for(sequence, config):
    if config is None:
        return PropagationConfig.from_sequence(sequence)
    return PropagationConfig(
        dt=config.dt, t_end=sequence.t_end, method=config.method,
        control_detuning=config.control_detuning, rk4_max_phase=config.rk4_max_phase,
        workers=config.workers,
    )


def _gamma_key(gamma):
    return None if gamma is None else tuple(map(float, np.asarray(gamma, dtype=float).ravel()))


@lru_cache(maxsize=64)
def _cached_run(sequence, ensemble, config, gamma_key):
    gamma = None if gamma_key is None else np.array(gamma_key).reshape(3, 3)
    return propagate_ensemble(sequence, ensemble, gamma, config)


def run(sequence, ensemble=None, config=None, gamma=None, until=None) -> TraceSet:
    """Cached ensemble run, optionally stopped right after ``until``."""
    if until is not None:
        sequence = truncate(sequence, until)
    ensemble = ensemble or build_ensemble(sequence.ensemble_spec)
    return _cached_run(sequence, ensemble, _config_for(sequence, config), _gamma_key(gamma))


# ---------------------------------------------------------------------------
# echo detection

@dataclass
class EchoReport:
    echo_time: float
    amplitude: float
    character: str  # emissive | absorptive | silent
    reference_sign: int
    signed_im: float = 0.0
    threshold: float = 0.0

    def to_dict(self, label=None):
        d = {
            "echo_time_us": round(self.echo_time, 9),
            "amplitude": self.amplitude,
            "character": self.character,
            "reference_sign": self.reference_sign,
            "im12_at_peak": self.signed_im,
            "silence_threshold": self.threshold,
        }
        if label is not None:
            d = {"label": label, **d}
        return d


def _check_window(sequence, times, lo, hi):
    if lo < times[0] - 1e-9 or hi > times[-1] + 1e-9:
        raise ValueError(f"window [{lo:g}, {hi:g}] lies outside the grid [{times[0]:g}, {times[-1]:g}]")
    for p in sequence.pulses:
        if p.t_on < hi and lo < p.t_off:
            raise ValueError(f"window [{lo:g}, {hi:g}] overlaps pulse {p.name}")


def free_halfwidth(sequence, center, halfwidth=WINDOW_HALFWIDTH, t_end=None):
    """Largest half-width <= ``halfwidth`` keeping the window clear of pulses and the grid."""
    hw = halfwidth
    for p in sequence.pulses:
        if p.t_off <= center:
            hw = min(hw, center - p.t_off)
        elif p.t_on >= center:
            hw = min(hw, p.t_on - center)
        else:
            return 0.0
    t_end = sequence.t_end if t_end is None else t_end
    return max(0.0, min(hw, center, t_end - center))


def reference_sign(traces: TraceSet, sequence: PulseSequence) -> int:
    t = data_pulse(sequence).t_off + REFERENCE_DELAY
    value = traces.rho12[traces.index(t)].imag
    return 1 if value >= 0 else -1


def _window_peak(traces, lo, hi):
    i0 = traces.index(lo)
    i1 = traces.index(hi)
    im = traces.rho12[i0:i1 + 1].imag
    k = int(np.argmax(np.abs(im)))
    return i0 + k, float(abs(im[k])), float(im[k])


def silence_threshold(sequence, window_center, window_halfwidth=WINDOW_HALFWIDTH, ensemble=None, config=None, gamma=None) -> float:
    """5% of the bare program's peak |Im rho_12| in the same window."""
    lo, hi = window_center - window_halfwidth, window_center + window_halfwidth
    bare = run(bare_sequence(sequence), ensemble, config, gamma, until=hi)
    return SILENCE_FRACTION * _window_peak(bare, lo, hi)[1]


def detect_echo(
    traces: TraceSet,
    sequence: PulseSequence,
    window_center: float,
    window_halfwidth: float = WINDOW_HALFWIDTH,
    threshold: float | None = None,
    ensemble: Ensemble | None = None,
    config: PropagationConfig | None = None,
    gamma=None,
) -> EchoReport:
    """Peak |Im rho_12| in a pulse-free window and its character.

    ``threshold`` defaults to the silence threshold of the bare program
    run on the same ensemble and grid.
    """
    lo, hi = window_center - window_halfwidth, window_center + window_halfwidth
    _check_window(sequence, traces.times, lo, hi)
    if threshold is None:
        threshold = silence_threshold(sequence, window_center, window_halfwidth, ensemble, config, gamma)
    ref = reference_sign(traces, sequence)
    k, amplitude, im = _window_peak(traces, lo, hi)
    if amplitude < threshold:
        character = "silent"
    elif np.sign(im) == -ref:
        character = "emissive"
    else:
        character = "absorptive"
    return EchoReport(float(traces.times[k]), amplitude, character, ref, im, threshold)


# ---------------------------------------------------------------------------
# phase-ledger oracle

@dataclass
class LedgerEntry:
    pulse: str
    role: str
    t_on: float
    transformation: str
    coherence: complex | None
    quadrature: str  # i | r | mixed | -

    def to_dict(self):
        c = self.coherence
        return {
            "pulse": self.pulse,
            "role": self.role,
            "t_on_us": self.t_on,
            "transformation": self.transformation,
            "coherence": None if c is None else [round(c.real, 12), round(c.imag, 12)],
            "quadrature": self.quadrature,
        }


@dataclass
class PredictedEcho:
    label: str
    time: float
    coherence: complex

    @property
    def quadrature(self) -> str:
        return "real" if abs(self.coherence.imag) < SILENCE_FRACTION * abs(self.coherence) else "imaginary"

    @property
    def character(self) -> str:
        # the data pulse leaves +i; radiation needs the opposite sign
        if self.quadrature == "real":
            return "silent"
        return "emissive" if self.coherence.imag < 0 else "absorptive"

    def to_dict(self):
        return {
            "label": self.label,
            "time_us": round(self.time, 9),
            "quadrature": self.quadrature,
            "character": self.character,
        }


@dataclass
class OraclePrediction:
    echoes: list[PredictedEcho]
    phase_ledger: list[LedgerEntry]

    @property
    def echo_times(self) -> list[float]:
        return [e.time for e in self.echoes]

    def echo(self, label):
        for e in self.echoes:
            if e.label == label:
                return e
        raise KeyError(label)

    @property
    def e1_quadrature(self) -> str:
        return self.echo("e1").quadrature

    @property
    def e2_character(self) -> str:
        return self.echo("e2").character

    def to_dict(self):
        return {
            "echoes": [e.to_dict() for e in self.echoes],
            "phase_ledger": [entry.to_dict() for entry in self.phase_ledger],
        }


def _marker(c):
    if c is None:
        return "-"
    if abs(c.real) < SILENCE_FRACTION * abs(c):
        return "i"
    if abs(c.imag) < SILENCE_FRACTION * abs(c):
        return "r"
    return "mixed"


def _excitation_origin(p: Pulse) -> float:
    # finite pulse of area theta: free precession effectively starts
    # tau*(1 - cos theta)/(theta sin theta) before the pulse ends
    theta = pulse_area(p)
    return p.t_off - p.duration * (1 - math.cos(theta)) / (theta * math.sin(theta))


def oracle_predict(sequence: PulseSequence) -> OraclePrediction:
    """Track the data coherence symbolically through the pulse program.

    A rephasing pulse conjugates it and mirrors the rephasing time about
    its centre, a Stark pulse multiplies it by exp(-i sign(detune) phi),
    and a 2pi control pulse flips its sign. Echoes fall where the
    mirrored time lands after the rephasing pulse.
    """
    roles = [(p, classify(p)) for p in sequence.pulses]
    ledger, echoes = [], []
    c = None
    t_ref = None
    pending = None  # (label, time) of the next echo not yet reached
    n_echo = 0

    def flush(upto):
        nonlocal pending
        if pending is not None and pending[1] <= upto:
            echoes.append(PredictedEcho(pending[0], pending[1], c))
            pending = None

    for p, role in roles:
        flush(p.t_on)
        if role == "data":
            if c is not None:
                raise ClassificationError(p, "second data pulse")
            c = 1j
            t_ref = _excitation_origin(p)
            text = "creates i*rho"
        elif c is None:
            text = "no coherence yet"
        elif role == "stark":
            phi = stark_phase(p)
            c = c * complex(math.cos(phi), -math.copysign(1.0, p.detune) * math.sin(phi))
            sign = "-" if p.detune > 0 else "+"
            text = f"e^(+-i d t) -> e^(+-i d t {sign} i*{phi / math.pi:.4g}pi)"
        elif role == "rephasing":
            c = c.conjugate()
            center = p.t_on + 0.5 * p.duration
            t_ref = 2 * center - t_ref
            text = "conjugate: rho -> rho*"
            if t_ref > p.t_off and t_ref <= sequence.t_end + 1e-9:
                n_echo += 1
                pending = (f"e{n_echo}", t_ref)
            else:
                pending = None
        elif role == "control":
            c = -c
            text = "sign flip: rho -> -rho"
        else:
            text = "identity"
        ledger.append(LedgerEntry(p.name, role, p.t_on, text, c, _marker(c)))
    flush(math.inf)
    return OraclePrediction(echoes, ledger)


# ---------------------------------------------------------------------------
# simulation vs oracle

@dataclass
class EchoCheck:
    label: str
    predicted_time: float
    simulated_time: float
    predicted_character: str
    simulated_character: str
    amplitude: float
    threshold: float
    time_ok: bool
    character_ok: bool

    @property
    def passed(self) -> bool:
        return self.time_ok and self.character_ok

    def to_dict(self):
        return {
            "label": self.label,
            "predicted_time_us": round(self.predicted_time, 9),
            "simulated_time_us": round(self.simulated_time, 9),
            "predicted_character": self.predicted_character,
            "simulated_character": self.simulated_character,
            "amplitude": self.amplitude,
            "silence_threshold": self.threshold,
            "time_ok": self.time_ok,
            "character_ok": self.character_ok,
            "passed": self.passed,
        }


@dataclass
class CompareReport:
    checks: list[EchoCheck]
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "notes": self.notes}

    def lines(self):
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(
                f"{status} {c.label}: predicted {c.predicted_character} @ {c.predicted_time:.3f} us, "
                f"simulated {c.simulated_character} @ {c.simulated_time:.2f} us "
                f"(|Im rho12| {c.amplitude:.4g}, threshold {c.threshold:.3g})"
            )
        out += self.notes
        return out


def relative_linf(a, b) -> float:
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def echo_reports(traces, sequence, prediction, ensemble=None, config=None, gamma=None):
    """(predicted echo, EchoReport) pairs, each in its own pulse-free window."""
    out = []
    for e in prediction.echoes:
        hw = free_halfwidth(sequence, e.time, WINDOW_HALFWIDTH, traces.times[-1])
        if hw <= 2 * traces.dt:
            continue
        out.append((e, detect_echo(traces, sequence, e.time, hw, ensemble=ensemble, config=config, gamma=gamma)))
    return out


def compare(
    traces: TraceSet,
    prediction: OraclePrediction,
    sequence: PulseSequence,
    ensemble=None,
    config=None,
    gamma=None,
) -> CompareReport:
    """Check simulated echoes against the oracle.

    Timing is checked (within one grid step) for radiating echoes only;
    a silenced echo has no meaningful peak time.
    """
    checks = []
    for e, rep in echo_reports(traces, sequence, prediction, ensemble, config, gamma):
        time_ok = e.character == "silent" or abs(rep.echo_time - e.time) <= traces.dt + 1e-9
        checks.append(EchoCheck(
            e.label, e.time, rep.echo_time, e.character, rep.character,
            rep.amplitude, rep.threshold, time_ok, rep.character == e.character,
        ))
    notes = []
    starks = [p for p in sequence.pulses if p.channel is Channel.PROBE and p.detune != 0]
    controls = [p for p in sequence.pulses if p.channel is Channel.CONTROL]
    if starks and not controls and prediction.echoes:
        # balanced: every echo keeps its bare character and the trace after
        # the last Stark pulse is the bare trace
        bare_seq = bare_sequence(sequence)
        same_echoes = [e.character for e in prediction.echoes] == [
            e.character for e in oracle_predict(bare_seq).echoes
        ]
        after = max(p.t_off for p in starks)
        bare = run(bare_seq, ensemble, config, gamma)
        i = traces.index(after)
        n = min(len(traces.times), len(bare.times))
        dev = relative_linf(traces.rho12[i:n], bare.rho12[i:n])
        if same_echoes and dev <= BALANCED_TOLERANCE:
            notes.append(f"balanced: matches bare (relative deviation {dev:.2%} after {after:g} us)")
        else:
            notes.append(f"unbalanced: echoes differ from bare (trace deviation {dev:.1%} after {after:g} us)")
    return CompareReport(checks, notes)


# ---------------------------------------------------------------------------
# cos-phi sweeps

@dataclass
class SweepTable:
    phi: np.ndarray
    amplitude: np.ndarray
    signed: np.ndarray           # Im rho_12 at the peak, positive when emissive
    amplitude_homogeneous: np.ndarray
    threshold: float
    window: tuple[float, float]

    @property
    def intensity(self) -> np.ndarray:
        return self.amplitude**2


def _stark_before_first_rephasing(base: PulseSequence) -> Pulse:
    rephase = [p for p in base.pulses if p.channel is Channel.PROBE and p.detune == 0
               and _near(pulse_area(p), math.pi)]
    if not rephase:
        raise ValueError("sequence has no rephasing pulse")
    t_r1 = rephase[0].t_on
    starks = [p for p in base.pulses if p.channel is Channel.PROBE and p.detune != 0 and p.t_on < t_r1]
    if len(starks) != 1:
        raise ValueError(f"expected exactly one Stark pulse before the first rephasing pulse, found {len(starks)}")
    return starks[0]


def _e1_window(base):
    e1 = oracle_predict(bare_sequence(base)).echo("e1").time
    return e1, free_halfwidth(base, e1)


def _with_phase(base, stark, phi, offset=0.0):
    if phi < 0:
        raise ValueError(f"Stark phase must be non-negative, got {phi:g}")
    others = [p for p in base.pulses if p.name != stark.name]
    tau = duration_for_phase(stark, phi)
    if tau > 1e-12:
        others.append(Pulse(stark.name, stark.channel, stark.t_on, tau, stark.rabi, stark.detune + offset))
    seq = base.replace_pulses(others)
    problems = validate(seq)
    if problems:
        raise ValueError(f"phi={phi:g}: " + "; ".join(map(str, problems)))
    return seq


def _e1_peak(seq, center, hw, ensemble, config, gamma):
    traces = run(seq, ensemble, config, gamma, until=center + hw)
    ref = reference_sign(traces, seq)
    _, amplitude, im = _window_peak(traces, center - hw, center + hw)
    return amplitude, -ref * im


def efficiency_sweep(base: PulseSequence, phis, ensemble=None, config=None, gamma=None) -> SweepTable:
    """e1 amplitude versus Stark phase, set by the Stark pulse duration.

    The generalized Rabi frequency of the single pre-rephasing Stark
    pulse is held fixed. The resonant-only (homogeneous) sweep is
    returned alongside.
    """
    stark = _stark_before_first_rephasing(base)
    center, hw = _e1_window(base)
    ensemble = ensemble or build_ensemble(base.ensemble_spec)
    homogeneous = resonant_only(ensemble)
    amp, signed, amp_h = [], [], []
    for phi in phis:
        seq = _with_phase(base, stark, float(phi))
        a, s = _e1_peak(seq, center, hw, ensemble, config, gamma)
        amp.append(a)
        signed.append(s)
        amp_h.append(_e1_peak(seq, center, hw, homogeneous, config, gamma)[0])
    threshold = silence_threshold(base, center, hw, ensemble, config, gamma)
    return SweepTable(
        np.asarray(phis, dtype=float), np.array(amp), np.array(signed), np.array(amp_h),
        threshold, (center - hw, center + hw),
    )


def sweep_2d(base: PulseSequence, phi_grid, offset_grid, ensemble=None, config=None, gamma=None) -> np.ndarray:
    """e1 amplitude on a (Stark detuning offset, phase) grid.

    Rows follow ``offset_grid`` (MHz added to the Stark detuning), columns
    follow ``phi_grid``. The duration for each phase is taken at the
    un-offset generalized Rabi frequency.
    """
    stark = _stark_before_first_rephasing(base)
    center, hw = _e1_window(base)
    ensemble = ensemble or build_ensemble(base.ensemble_spec)
    out = np.empty((len(offset_grid), len(phi_grid)))
    for i, off in enumerate(offset_grid):
        for j, phi in enumerate(phi_grid):
            seq = _with_phase(base, stark, float(phi), float(off))
            out[i, j] = _e1_peak(seq, center, hw, ensemble, config, gamma)[0]
    return out


def cosine_fit(phi, values):
    """Least-squares ``values ~ a cos(phi) + b``; returns (a, b, r_squared)."""
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(values, dtype=float)
    A = np.column_stack([np.cos(phi), np.ones_like(phi)])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([a, b])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2
