"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from pitlab.separator import SeparatorParams

STEP = 1e-4
# relative error denominator floor; coordinates with |grad| below this are compared absolutely
FLOOR = 1e-6


def perturbed(params: SeparatorParams, name: str, idx, delta: float) -> SeparatorParams:
    flat = {k: v.copy() for k, v in params.flat().items()}
    flat[name][idx] += delta
    return SeparatorParams.from_flat(flat)


def max_rel_error(loss_fn, params: SeparatorParams, grads: SeparatorParams, coords=None) -> float:
    """Worst relative error between analytic ``grads`` and central differences of ``loss_fn``.

    ``coords`` limits the check to ``[(name, index), ...]``; default is every coordinate.
    """
    g = grads.flat()
    if coords is None:
        coords = [(k, idx) for k, v in params.flat().items() for idx in np.ndindex(v.shape)]
    worst = 0.0
    for name, idx in coords:
        fd = (loss_fn(perturbed(params, name, idx, STEP)) -
              loss_fn(perturbed(params, name, idx, -STEP))) / (2 * STEP)
        an = g[name][idx]
        err = abs(fd - an) / max(abs(fd), abs(an), FLOOR)
        worst = max(worst, err)
    return worst
