"""Wave-side effect of truncating the amplitude: pairings with S_h and with S_h built from A_R0.

    python3 scripts/truncation_wave.py [scenario] [h ...]     (default: affine_line at its h list)
"""
import sys

from helmlab import harness as H
from helmlab.raymeasure import truncation_compare
from helmlab.scenarios import load_scenario
from helmlab.source import truncate_amplitude

name = sys.argv[1] if len(sys.argv) > 1 else "affine_line"
scn = load_scenario(name)
R0, R = scn.truncation["R0"], scn.truncation["R"]
q = scn.observable(scn.truncation["observable"])
res = truncation_compare(q, scn.ray_setup(), R=R, R0=R0, budget=scn.ray_budget)
print(f"rays: value(R0={R0:g}) {res.value_R0!r}  value(R={R:g}) {res.value_R!r}  diff {res.difference:.3e}  "
      f"tol {res.tolerance:.3e}")
T = H.auto_T(scn, H.run_rays(scn))
hs = [float(h) for h in sys.argv[2:]] or scn.h_list
AR = truncate_amplitude(scn.A, R0)
print(f"T = {T:.4f}")
print("h, full, truncated, rel_diff")
for h in hs:
    full = H.wave_values(scn, H.wave_solution(scn, h, T).field, [q])[q.name]
    cut = H.wave_values(scn, H.wave_solution(scn, h, T, A=AR).field, [q])[q.name]
    print(f"{h:g}, {full:.10e}, {cut:.10e}, {abs(full - cut) / abs(full):.3e}")
