"""Gaussian inhomogeneous line discretized into weighted atom groups.

Detunings are linear frequencies in kHz throughout this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class EnsembleSpec:
    fwhm: float = 850.0
    spacing: float = 10.0
    group_count: int = 201

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    def problems(self) -> list[str]:
        out = []
        if not self.fwhm > 0:
            out.append(f"fwhm must be positive, got {self.fwhm}")
        if not self.spacing > 0:
            out.append(f"spacing must be positive, got {self.spacing}")
        if not isinstance(self.group_count, (int, np.integer)) or self.group_count < 1:
            out.append(f"group_count must be a positive integer, got {self.group_count}")
        elif self.group_count % 2 == 0:
            out.append(f"group_count must be odd, got {self.group_count}")
        return out


@dataclass(frozen=True)
class AtomGroup:
    delta: float  # kHz
    weight: float


@dataclass(frozen=True)
class Ensemble:
    spec: EnsembleSpec
    groups: tuple[AtomGroup, ...]
    raw_coverage: float

    @property
    def deltas(self) -> np.ndarray:
        return np.array([g.delta for g in self.groups])

    @property
    def weights(self) -> np.ndarray:
        return np.array([g.weight for g in self.groups])

    def __len__(self) -> int:
        return len(self.groups)


def build_ensemble(spec: EnsembleSpec, rule: str = "midpoint") -> Ensemble:
    """Discretize the Gaussian line on a symmetric uniform grid.

    ``rule="midpoint"`` gives each group density(delta_j) * spacing;
    ``rule="integral"`` integrates the density exactly over the
    spacing-wide bin centred on delta_j. Weights are renormalized to sum
    to one after truncation; the pre-normalization sum is kept as
    ``raw_coverage``.
    """
    problems = spec.problems()
    if problems:
        raise ValueError("; ".join(problems))
    half = (spec.group_count - 1) // 2
    j = np.arange(-half, half + 1)
    deltas = j * spec.spacing
    sigma = spec.sigma
    if rule == "midpoint":
        density = np.exp(-(deltas**2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
        mass = density * spec.spacing
    elif rule == "integral":
        from scipy.special import ndtr

        lo = (deltas - spec.spacing / 2) / sigma
        hi = (deltas + spec.spacing / 2) / sigma
        mass = ndtr(hi) - ndtr(lo)
    else:
        raise ValueError(f"unknown bin rule {rule!r}")
    # fold the two halves so w(+d) == w(-d) bit for bit
    mass = 0.5 * (mass + mass[::-1])
    raw = float(mass.sum())
    weights = mass / raw
    groups = tuple(AtomGroup(float(d), float(w)) for d, w in zip(deltas, weights))
    return Ensemble(spec=spec, groups=groups, raw_coverage=min(raw, 1.0))


def resonant_only(ensemble: Ensemble | None = None) -> Ensemble:
    """One resonant group of unit weight (the homogeneous reference)."""
    if ensemble is not None and len(ensemble) == 1 and ensemble.groups[0].delta == 0.0:
        return ensemble
    spec = ensemble.spec if ensemble is not None else EnsembleSpec()
    return Ensemble(
        spec=EnsembleSpec(spec.fwhm, spec.spacing, 1),
        groups=(AtomGroup(0.0, 1.0),),
        raw_coverage=1.0,
    )
