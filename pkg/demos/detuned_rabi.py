"""
Detuned Rabi flopping of one resonant atom
==========================================

A 5 MHz, 0.1 us pulse on resonance is a full 2pi turn. Detuning the
drive by sqrt(3) or sqrt(15) times the flopping Rabi frequency caps the
excited population at 1/4 or 1/16, which is why a far-detuned Stark
pulse leaves populations almost untouched.
"""
import math

from starkecho import preset, propagate_ensemble, resonant_only

one = resonant_only()

seq = preset("figS2_resonant")
tr = propagate_ensemble(seq, one)
print(f"resonant 2pi pulse: max rho22 = {tr.macro[:, 1, 1].real.max():.6f}, "
      f"rho11 after = {tr.macro[tr.index(1.1), 0, 0].real:.12f}")

for k in (3, 15):
    seq = preset("figS2_detuned", ratio=math.sqrt(k))
    tr = propagate_ensemble(seq, one)
    print(f"detuning sqrt({k}) x flop: max rho22 = {tr.macro[:, 1, 1].real.max():.6f}  (1/(1+{k}) = {1 / (1 + k):.6f})")
