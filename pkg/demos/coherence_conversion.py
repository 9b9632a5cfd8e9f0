"""
Turning an absorptive echo into an emissive one
===============================================

With the second Stark pulse placed after e1 (unbalanced), e1 is silent
and e2 comes back absorptive. A 2pi pulse on the control transition
right after R2 sends the excited-state amplitude round the auxiliary
level and back with a sign change, which flips the coherence and makes
e2 emissive. Moving AC2 before e1 (balanced) instead undoes the Stark
phase and the program behaves like the bare one.
"""
import numpy as np

from starkecho import preset
from starkecho.analysis import compare, detect_echo, oracle_predict, run

for name in ("fig3a", "fig3b", "fig4a"):
    seq = preset(name)
    tr = run(seq)
    rep = compare(tr, oracle_predict(seq), seq)
    print(f"{name}:")
    for line in rep.lines():
        print("   ", line)

a, c = run(preset("fig3a")), run(preset("fig4a"))
after = a.times > preset("fig4a").pulse("C").t_off
print("max |Im(fig4a) + Im(fig3a)| after C:", np.abs(c.rho12.imag[after] + a.rho12.imag[after]).max())
e2a = detect_echo(a, preset("fig3a"), 21.0, 1.0)
e2c = detect_echo(c, preset("fig4a"), 21.0, 1.0)
print(f"e2: {e2a.character} {e2a.amplitude:.4f} -> {e2c.character} {e2c.amplitude:.4f}")
