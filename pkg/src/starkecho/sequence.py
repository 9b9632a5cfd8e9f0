"""Timed square-pulse programs, the stock sequences, and their text format.

User-facing pulse frequencies are linear MHz and times are microseconds.
``rabi`` is the off-diagonal coupling of the RWA Hamiltonian, so a
resonant pulse flops population at twice that frequency and its rotation
angle is ``2 * (2*pi*rabi) * duration``.

Text format, one directive per line, ``#`` starts a comment::

    dt 0.01us
    end 25us
    ensemble fwhm=850khz spacing=10khz groups=201
    pulse name=D channel=probe at=1us dur=0.1us rabi=1.25mhz detune=0mhz
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .ensemble import EnsembleSpec

TWO_PI = 2.0 * math.pi

# Stark pulse used by the stock sequences: generalized Rabi frequency of
# 2.5 MHz over 0.1 us accrues pi/2; the flopping Rabi frequency is 1/16
# of that so the pulse is far off resonance.
STARK_GENERALIZED = 2.5
STARK_FLOP = STARK_GENERALIZED / 16.0
STARK_RABI = STARK_FLOP / 2.0
STARK_DETUNE = math.sqrt(STARK_GENERALIZED**2 - STARK_FLOP**2)

PULSE_DURATION = 0.1


class Channel(str, Enum):
    PROBE = "probe"      # |1> <-> |2>
    CONTROL = "control"  # |3> <-> |2>


_CHANNEL_ORDER = {Channel.PROBE: 0, Channel.CONTROL: 1}


@dataclass(frozen=True)
class Pulse:
    name: str
    channel: Channel
    t_on: float
    duration: float
    rabi: float
    detune: float = 0.0

    def __post_init__(self):
        if not isinstance(self.channel, Channel):
            object.__setattr__(self, "channel", Channel(self.channel))

    @property
    def t_off(self) -> float:
        return self.t_on + self.duration

    def active(self, t: float) -> bool:
        return self.t_on <= t < self.t_off


def _sort_key(p: Pulse):
    return (p.t_on, _CHANNEL_ORDER[p.channel], p.name)


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...] = ()
    t_end: float = 25.0
    dt: float = 0.01
    ensemble_spec: EnsembleSpec = field(default_factory=EnsembleSpec)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(sorted(self.pulses, key=_sort_key)))

    def pulse(self, name: str) -> Pulse:
        for p in self.pulses:
            if p.name == name:
                return p
        raise KeyError(name)

    def replace_pulses(self, pulses) -> "PulseSequence":
        return PulseSequence(tuple(pulses), self.t_end, self.dt, self.ensemble_spec)


@dataclass(frozen=True)
class Violation:
    code: str  # overlap | out-of-range | bad-ensemble | bad-pulse | bad-grid
    pulses: tuple[str, ...]
    message: str

    def __str__(self):
        names = ", ".join(self.pulses)
        return f"{self.code}({names}): {self.message}" if names else f"{self.code}: {self.message}"


def validate(sequence: PulseSequence) -> list[Violation]:
    """Every invariant breach of ``sequence``; empty when it is valid."""
    out = []
    if not sequence.dt > 0 or not sequence.t_end > 0:
        out.append(Violation("bad-grid", (), f"dt={sequence.dt}, end={sequence.t_end} must be positive"))
    elif sequence.t_end / sequence.dt > 1e7:
        out.append(Violation("bad-grid", (), "more than 1e7 time steps"))
    for problem in sequence.ensemble_spec.problems():
        out.append(Violation("bad-ensemble", (), problem))
    seen = set()
    for p in sequence.pulses:
        if p.name in seen:
            out.append(Violation("bad-pulse", (p.name,), "duplicate pulse name"))
        seen.add(p.name)
        if not p.duration > 0:
            out.append(Violation("bad-pulse", (p.name,), f"duration {p.duration} must be positive"))
        if p.rabi < 0:
            out.append(Violation("bad-pulse", (p.name,), f"rabi {p.rabi} must be non-negative"))
        if p.t_on < 0:
            out.append(Violation("out-of-range", (p.name,), f"starts at {p.t_on} before t=0"))
        if p.t_off > sequence.t_end + 1e-9:
            out.append(Violation("out-of-range", (p.name,), f"ends at {p.t_off:g} after end={sequence.t_end:g}"))
    for ch in Channel:
        on_ch = [p for p in sequence.pulses if p.channel is ch]
        for i, a in enumerate(on_ch):
            for b in on_ch[i + 1:]:
                if a.t_on < b.t_off - 1e-9 and b.t_on < a.t_off - 1e-9:
                    out.append(Violation("overlap", (a.name, b.name), f"both on the {ch.value} channel"))
    return out


def flopping_rabi(p: Pulse) -> float:
    """Resonant population-flopping frequency in MHz."""
    return 2.0 * p.rabi


def generalized_rabi(p: Pulse) -> float:
    """sqrt(flop^2 + detune^2) in MHz."""
    return math.hypot(flopping_rabi(p), p.detune)


def pulse_area(p: Pulse) -> float:
    return TWO_PI * flopping_rabi(p) * p.duration


def stark_phase(p: Pulse) -> float:
    """Phase a detuned probe pulse writes onto a resonant atom's coherence.

    This is the generalized rotation angle; the radiating quadrature of a
    resonant atom is scaled by exactly ``cos`` of it.
    """
    if p.channel is not Channel.PROBE:
        raise ValueError(f"pulse {p.name} is on the control channel, not a Stark pulse")
    if p.detune == 0:
        raise ValueError(f"pulse {p.name} is resonant, not a Stark pulse")
    return TWO_PI * generalized_rabi(p) * p.duration


def duration_for_phase(p: Pulse, phi: float) -> float:
    """Duration giving ``stark_phase == phi`` at the pulse's generalized Rabi frequency."""
    return phi / (TWO_PI * generalized_rabi(p))


# ---------------------------------------------------------------------------
# stock sequences

def _probe(name, t_on, rabi, detune=0.0, duration=PULSE_DURATION):
    return Pulse(name, Channel.PROBE, t_on, duration, rabi, detune)


def _stark(name, t_on):
    return _probe(name, t_on, STARK_RABI, STARK_DETUNE)


def _bare():
    return [_probe("D", 1.0, 1.25), _probe("R1", 7.0, 2.5), _probe("R2", 17.0, 2.5)]


PRESETS = ("figS1a", "fig1b", "fig3a", "fig3b", "fig4a", "figS2_resonant", "figS2_detuned")
ECHO_PRESETS = ("figS1a", "fig1b", "fig3a", "fig3b", "fig4a")

_DETUNED_RE = re.compile(r"^figS2_detuned(?:\((?:sqrt\s*(?P<sq>[0-9.]+)|(?P<num>[0-9.eE+-]+))\))?$")


def preset(name: str, ratio: float | None = None) -> PulseSequence:
    """Stock pulse program by name.

    ``figS2_detuned`` takes the detuning-to-flopping-Rabi ratio either as
    ``ratio`` or in the name, e.g. ``figS2_detuned(sqrt15)``; it defaults
    to sqrt(3).
    """
    m = _DETUNED_RE.match(name)
    if m:
        if m.group("sq"):
            ratio = math.sqrt(float(m.group("sq")))
        elif m.group("num"):
            ratio = float(m.group("num"))
        elif ratio is None:
            ratio = math.sqrt(3.0)
        ac = _probe("AC", 1.0, 1.25, ratio * 2 * 1.25, duration=1.0)
        return PulseSequence((ac,))
    if name == "figS2_resonant":
        return PulseSequence((_probe("D", 1.0, 5.0),))
    pulses = _bare()
    if name == "figS1a":
        pass
    elif name == "fig1b":
        pulses.append(_stark("AC", 3.0))
    elif name == "fig3a":
        pulses += [_stark("AC1", 3.0), _stark("AC2", 15.0)]
    elif name == "fig3b":
        pulses += [_stark("AC1", 3.0), _stark("AC2", 10.0)]
    elif name == "fig4a":
        pulses += [
            _stark("AC1", 3.0),
            _stark("AC2", 15.0),
            Pulse("C", Channel.CONTROL, 17.1, 0.2, 2.5),
        ]
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PulseSequence(tuple(pulses))


# ---------------------------------------------------------------------------
# text format

class SequenceError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


_UNITS = {
    "time": {"us": 1.0, "ns": 1e-3, "ms": 1e3},
    "freq_mhz": {"mhz": 1.0, "khz": 1e-3, "hz": 1e-6, "ghz": 1e3},
    "freq_khz": {"khz": 1.0, "mhz": 1e3, "hz": 1e-3, "ghz": 1e6},
}
_QUANTITY = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)([A-Za-z]*)$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_PULSE_KEYS = {"name", "channel", "at", "dur", "rabi", "detune"}
_ENSEMBLE_KEYS = {"fwhm", "spacing", "groups"}


def _quantity(text, kind, line, col):
    m = _QUANTITY.match(text)
    if not m:
        raise SequenceError(f"expected a number with unit, got {text!r}", line, col)
    value, unit = m.groups()
    if not unit:
        raise SequenceError(f"missing unit on {text!r}", line, col)
    scale = _UNITS[kind].get(unit.lower())
    if scale is None:
        allowed = ", ".join(_UNITS[kind])
        raise SequenceError(f"unknown unit {unit!r} (expected one of {allowed})", line, col)
    return float(value) * scale


def _tokens(line):
    """(column, token) pairs, 1-based columns."""
    return [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", line)]


def _keyvals(tokens, allowed, lineno):
    out = {}
    for col, tok in tokens:
        if "=" not in tok:
            raise SequenceError(f"expected key=value, got {tok!r}", lineno, col)
        key, _, value = tok.partition("=")
        if key not in allowed:
            raise SequenceError(f"unknown key {key!r}", lineno, col)
        if key in out:
            raise SequenceError(f"duplicate key {key!r}", lineno, col)
        out[key] = (value, col + len(key) + 1)
    return out


def _require(kv, keys, lineno, col):
    for key in keys:
        if key not in kv:
            raise SequenceError(f"missing key {key!r}", lineno, col)


def parse_sequence(text: str) -> PulseSequence:
    """Parse and validate a pulse program; errors carry line and column."""
    dt, t_end, spec = None, None, None
    pulses, where = [], {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokens(raw.split("#", 1)[0])
        if not tokens:
            continue
        col0, head = tokens[0]
        rest = tokens[1:]
        if head in ("dt", "end"):
            if len(rest) != 1:
                raise SequenceError(f"{head} takes exactly one value", lineno, col0)
            if (dt if head == "dt" else t_end) is not None:
                raise SequenceError(f"duplicate {head} directive", lineno, col0)
            value = _quantity(rest[0][1], "time", lineno, rest[0][0])
            if head == "dt":
                dt = value
            else:
                t_end = value
        elif head == "ensemble":
            if spec is not None:
                raise SequenceError("duplicate ensemble directive", lineno, col0)
            kv = _keyvals(rest, _ENSEMBLE_KEYS, lineno)
            _require(kv, ("fwhm", "spacing", "groups"), lineno, col0)
            groups_text, gcol = kv["groups"]
            if not re.fullmatch(r"\d+", groups_text):
                raise SequenceError(f"groups must be a positive integer, got {groups_text!r}", lineno, gcol)
            spec = EnsembleSpec(
                fwhm=_quantity(kv["fwhm"][0], "freq_khz", lineno, kv["fwhm"][1]),
                spacing=_quantity(kv["spacing"][0], "freq_khz", lineno, kv["spacing"][1]),
                group_count=int(groups_text),
            )
        elif head == "pulse":
            kv = _keyvals(rest, _PULSE_KEYS, lineno)
            _require(kv, ("name", "channel", "at", "dur", "rabi"), lineno, col0)
            name, ncol = kv["name"]
            if not _NAME.match(name):
                raise SequenceError(f"bad pulse name {name!r}", lineno, ncol)
            if name in where:
                raise SequenceError(f"duplicate pulse name {name!r} (first on line {where[name]})", lineno, ncol)
            channel_text, ccol = kv["channel"]
            try:
                channel = Channel(channel_text)
            except ValueError:
                raise SequenceError(f"unknown channel {channel_text!r} (expected probe or control)", lineno, ccol) from None
            detune = 0.0
            if "detune" in kv:
                detune = _quantity(kv["detune"][0], "freq_mhz", lineno, kv["detune"][1])
            pulses.append(Pulse(
                name=name,
                channel=channel,
                t_on=_quantity(kv["at"][0], "time", lineno, kv["at"][1]),
                duration=_quantity(kv["dur"][0], "time", lineno, kv["dur"][1]),
                rabi=_quantity(kv["rabi"][0], "freq_mhz", lineno, kv["rabi"][1]),
                detune=detune,
            ))
            where[name] = lineno
        else:
            raise SequenceError(f"unknown directive {head!r}", lineno, col0)
    if t_end is None:
        raise SequenceError("missing 'end' directive")
    seq = PulseSequence(
        tuple(pulses),
        t_end=t_end,
        dt=0.01 if dt is None else dt,
        ensemble_spec=EnsembleSpec() if spec is None else spec,
    )
    violations = validate(seq)
    if violations:
        names = [n for v in violations for n in v.pulses]
        line = where.get(names[0]) if names else None
        raise SequenceError("invalid sequence: " + "; ".join(map(str, violations)), line, 1 if line else None)
    return seq


def _num(x) -> str:
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def serialize_sequence(sequence: PulseSequence) -> str:
    """Canonical text; ``parse_sequence`` inverts it exactly."""
    spec = sequence.ensemble_spec
    lines = [
        f"dt {_num(sequence.dt)}us",
        f"end {_num(sequence.t_end)}us",
        f"ensemble fwhm={_num(spec.fwhm)}khz spacing={_num(spec.spacing)}khz groups={int(spec.group_count)}",
    ]
    for p in sequence.pulses:
        lines.append(
            f"pulse name={p.name} channel={p.channel.value} at={_num(p.t_on)}us "
            f"dur={_num(p.duration)}us rabi={_num(p.rabi)}mhz detune={_num(p.detune)}mhz"
        )
    return "\n".join(lines) + "\n"
