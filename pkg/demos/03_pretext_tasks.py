"""The three self-supervised pretext tasks on one noisy utterance.

SE reconstructs clean speech from a noisy input, MAMA reconstructs masked
spans of a noisy input, CC picks the right encoder feature out of a line-up
of distractors.

Run: python demos/03_pretext_tasks.py
"""

import math

import numpy as np

from pitlab import datagen, separator as sep
from pitlab.ssl_tasks import MaskSpec, Task, make_ssl_example, masked_reconstruction_loss, ssl_loss_and_grad

clean = datagen.gen_utterance(datagen.gen_speaker(0, 4), 1.0, 0)
noise = datagen.gen_noise(0, 1.0)
cfg = sep.SeparatorConfig(n_filters=32, kernel=16, hidden=32, masker_blocks=3, n_outputs=1)
params = sep.init_params(cfg, 0)
spec = MaskSpec(span_len=7, mask_prob=0.06)

for task in Task:
    ex = make_ssl_example(task, clean, noise, 5.0, spec, rng_seed=1, kernel=cfg.kernel)
    frac = ex.frame_mask.mean()
    x, y, fm = ex.input.samples[None], ex.target.samples[None], ex.frame_mask[None]
    loss, grads = ssl_loss_and_grad(params, cfg, x, y, fm, task)
    gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.flat().values()))
    print(f"{task.value:4s}: {frac:5.1%} of frames scored, untrained loss {loss:.4f}, grad norm {gnorm:.3g}")

ex = make_ssl_example(Task.MAMA, clean, noise, 5.0, spec, rng_seed=1, kernel=cfg.kernel)
# the noisy input itself is a poor reconstruction inside masked spans (they are zeroed)
print("\nMAMA loss of the corrupted input vs clean: %.4f"
      % masked_reconstruction_loss(ex.input, ex.target, ex.frame_mask, cfg.kernel))
print("CC loss of a uniform guess over 1 positive + 10 distractors: ln 11 = %.4f" % math.log(11))
