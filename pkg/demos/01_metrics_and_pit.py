"""SI-SNR, label assignment and the permutation problem on a toy pair of sources.

Run: python demos/01_metrics_and_pit.py
"""

import numpy as np

from pitlab import assign
from pitlab.signal import si_snr, si_snr_improvement

rng = np.random.default_rng(0)
t = np.arange(4000) / 8000.0
s1 = np.sin(2 * np.pi * 140 * t)          # low voice
s2 = 0.6 * np.sign(np.sin(2 * np.pi * 230 * t))  # buzzy high voice
mix = s1 + s2

# SI-SNR ignores gain, so a louder copy scores the same as the original
print("si_snr(s1, s1)        =", si_snr(s1, s1), "dB (capped)")
print("si_snr(3*s1, s1)      =", si_snr(3 * s1, s1))
print("si_snr(mix, s1)       = %.2f dB" % si_snr(mix, s1))

# a "separator" whose outputs come out in the wrong order
outs = [s2 + 0.1 * rng.standard_normal(t.size), s1 + 0.1 * rng.standard_normal(t.size)]
m = assign.pairwise_loss_matrix(outs, [s1, s2])
print("\nloss matrix (rows = outputs, cols = targets), negative SI-SNR:")
print(np.round(m, 2))

loss, a = assign.pit_loss(outs, [s1, s2])
print("PIT picks permutation", a.perm, "with mean loss %.2f" % loss)
print("fixed order would have cost %.2f" % (np.trace(m) / 2))

for j, k in enumerate(a.perm):
    print("target %d <- output %d: SI-SNRi %.2f dB" % (k, j, si_snr_improvement(outs[j], [s1, s2][k], mix)))

# the solvers agree; brute force stops being an option past 8 sources
big = rng.random((64, 64))
h = assign.best_assignment_hungarian(big)
print("\nHungarian on 64x64: total %.4f, first entries of perm %s" % (h.total_loss, h.perm[:6]))
small = rng.random((6, 6))
print("6x6 brute force == Hungarian:",
      assign.best_assignment_bruteforce(small) == assign.best_assignment_hungarian(small))

# switches: the same example assigned differently in two epochs
log = assign.SwitchLog()
for k in range(4):
    log.record(1, f"utt{k}", (0, 1))
    log.record(2, f"utt{k}", (1, 0) if k == 0 else (0, 1))
print("switch percentage between epochs 1 and 2:", assign.switch_percentage(log, 1, 2), "%")
