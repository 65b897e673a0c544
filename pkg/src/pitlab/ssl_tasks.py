"""Self-supervised pre-training objectives: enhancement, masked reconstruction, contrastive.

Example builders turn a clean utterance plus noise into an :class:`SslExample`.
Loss functions come in pairs: ``foo`` returns the value, ``foo_grad`` also
returns gradients so the separator can be trained on it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from . import separator as sep
from .signal import StructuralError, Waveform, add_noise_at_snr

MASK_RETRIES = 10
# cosine norms are clamped from below; keeps gradients bounded for all-zero features
NORM_FLOOR = 1e-3


class Task(str, enum.Enum):
    SE = "SE"
    MAMA = "MAMA"
    CC = "CC"


@dataclass(frozen=True)
class MaskSpec:
    span_len: int = 7
    mask_prob: float = 0.06
    mask_fill: str = "zero"

    def __post_init__(self):
        if not 0.0 < self.mask_prob < 1.0:
            raise StructuralError(f"mask_prob must be in (0, 1), got {self.mask_prob}")
        if self.span_len < 1:
            raise StructuralError("span_len must be >= 1")
        if self.mask_fill not in ("zero", "noise"):
            raise StructuralError(f"mask_fill must be 'zero' or 'noise', got {self.mask_fill!r}")


@dataclass(frozen=True, eq=False)
class SslExample:
    input: Waveform
    target: Waveform
    frame_mask: np.ndarray
    task: Task

    def __post_init__(self):
        if len(self.input) != len(self.target):
            raise StructuralError("SSL input and target lengths differ")
        fm = np.asarray(self.frame_mask, dtype=bool)
        if self.task is Task.SE and not fm.all():
            raise StructuralError("SE examples use an all-true frame mask")
        if self.task is not Task.SE and (fm.all() or not fm.any()):
            raise StructuralError("masked examples need masked and unmasked frames")
        object.__setattr__(self, "frame_mask", fm)


def frame_count(length: int, kernel: int) -> int:
    """Number of encoder frames for a signal (hop = kernel / 2)."""
    return sep.SeparatorConfig(kernel=kernel).n_frames(length)


def sample_mask(frame_mask, length: int, frame_len: int, hop: int | None = None) -> np.ndarray:
    """Expand a frame mask to samples: a sample is masked if any masked frame covers it."""
    hop = frame_len // 2 if hop is None else hop
    fm = np.asarray(frame_mask, dtype=bool)
    out = np.zeros(max(length, (fm.size - 1) * hop + frame_len), dtype=bool)
    for f in np.flatnonzero(fm):
        out[f * hop:f * hop + frame_len] = True
    return out[:length]


def make_se_example(clean: Waveform, noise: Waveform, snr_db: float, kernel: int = 16) -> SslExample:
    noisy = add_noise_at_snr(clean, noise, snr_db)
    fm = np.ones(frame_count(len(clean), kernel), dtype=bool)
    return SslExample(noisy, clean, fm, Task.SE)


def sample_mask_spans(n_frames: int, spec: MaskSpec, rng_seed: int) -> np.ndarray:
    """Span mask over frames.

    Each frame starts a span with probability ``mask_prob``; spans cover
    ``span_len`` frames, clipped at the end. Draws are repeated until at least
    one frame is masked and one is not; after 10 failures a single span is
    placed at a seeded position.
    """
    if n_frames < spec.span_len + 1:
        raise StructuralError(f"need at least {spec.span_len + 1} frames, got {n_frames}")
    rng = np.random.default_rng(rng_seed)
    for _ in range(MASK_RETRIES):
        starts = np.flatnonzero(rng.random(n_frames) < spec.mask_prob)
        mask = np.zeros(n_frames, dtype=bool)
        for s in starts:
            mask[s:s + spec.span_len] = True
        if mask.any() and not mask.all():
            return mask
    s = int(rng.integers(0, n_frames - spec.span_len + 1))
    mask = np.zeros(n_frames, dtype=bool)
    mask[s:s + spec.span_len] = True
    return mask


def _masked_example(clean, noise, snr_db, spec, rng_seed, kernel, task):
    noisy = add_noise_at_snr(clean, noise, snr_db)
    fm = sample_mask_spans(frame_count(len(clean), kernel), spec, rng_seed)
    sm = sample_mask(fm, len(clean), kernel)
    x = noisy.samples.copy()
    if spec.mask_fill == "zero":
        x[sm] = 0.0
    else:
        rms = np.sqrt(np.mean(noisy.samples ** 2))
        fill = np.random.default_rng([rng_seed, 7]).standard_normal(int(sm.sum()))
        x[sm] = rms * fill
    return SslExample(Waveform(x, clean.sample_rate), clean, fm, task)


def make_mama_example(clean: Waveform, noise: Waveform, snr_db: float,
                      spec: MaskSpec = MaskSpec(), rng_seed: int = 0,
                      kernel: int = 16) -> SslExample:
    """Noised input with span-masked regions filled per ``spec.mask_fill``; target is clean."""
    return _masked_example(clean, noise, snr_db, spec, rng_seed, kernel, Task.MAMA)


def make_cc_example(clean: Waveform, noise: Waveform, snr_db: float,
                    spec: MaskSpec = MaskSpec(), rng_seed: int = 0,
                    kernel: int = 16) -> SslExample:
    """Same corruption as MAMA; the contrastive loss reads the frame mask."""
    return _masked_example(clean, noise, snr_db, spec, rng_seed, kernel, Task.CC)


def make_ssl_example(task: Task, clean, noise, snr_db, spec=MaskSpec(), rng_seed=0, kernel=16):
    task = Task(task)
    if task is Task.SE:
        return make_se_example(clean, noise, snr_db, kernel)
    if task is Task.MAMA:
        return make_mama_example(clean, noise, snr_db, spec, rng_seed, kernel)
    return make_cc_example(clean, noise, snr_db, spec, rng_seed, kernel)


# -- losses ----------------------------------------------------------------------

def masked_reconstruction_loss_grad(output, target, frame_mask, frame_len: int, hop: int | None = None):
    """Mean squared error over samples covered by masked frames, and its gradient."""
    out = np.asarray(getattr(output, "samples", output), dtype=np.float64)
    tgt = np.asarray(getattr(target, "samples", target), dtype=np.float64)
    if out.shape != tgt.shape:
        raise StructuralError(f"output {out.shape} vs target {tgt.shape}")
    sm = sample_mask(frame_mask, out.shape[-1], frame_len, hop)
    count = int(sm.sum())
    if count == 0:
        raise StructuralError("no masked samples to score")
    diff = np.where(sm, out - tgt, 0.0)
    return float(np.sum(diff * diff) / count), 2.0 * diff / count


def masked_reconstruction_loss(output, target, frame_mask, frame_len: int, hop: int | None = None) -> float:
    return masked_reconstruction_loss_grad(output, target, frame_mask, frame_len, hop)[0]


def _draw_negatives(m: int, k: int, rng_seed: int) -> np.ndarray:
    if m < k + 1:
        raise StructuralError(f"{m} masked positions cannot supply {k} distractors each")
    rng = np.random.default_rng(rng_seed)
    # rank random keys with the diagonal forced last: k distinct non-self indices per row
    keys = rng.random((m, m))
    np.fill_diagonal(keys, np.inf)
    return np.argsort(keys, axis=1, kind="stable")[:, :k]


def cc_loss_grad(features, targets, negatives_per_pos: int = 10,
                 temperature: float = 0.1, rng_seed: int = 0):
    """InfoNCE over cosine similarities, plus gradients for features and targets.

    Row ``i`` of ``features`` is scored against ``targets[i]`` and against
    ``negatives_per_pos`` other rows of ``targets`` drawn with ``rng_seed``.
    """
    p = np.asarray(features, dtype=np.float64)
    q = np.asarray(targets, dtype=np.float64)
    if p.ndim != 2 or p.shape != q.shape:
        raise StructuralError(f"features {p.shape} and targets {q.shape} must match (M, D)")
    m = p.shape[0]
    if m < 1:
        raise StructuralError("need at least one masked position")
    neg = _draw_negatives(m, negatives_per_pos, rng_seed)
    idx = np.concatenate([np.arange(m)[:, None], neg], axis=1)      # (M, 1+K)

    pn = np.maximum(np.linalg.norm(p, axis=1), NORM_FLOOR)
    qn = np.maximum(np.linalg.norm(q, axis=1), NORM_FLOOR)
    # below the floor the normalization is a fixed scaling, so there is no projection term
    p_live = (pn > NORM_FLOOR).astype(np.float64)
    q_live = (qn > NORM_FLOOR).astype(np.float64)
    ph = p / pn[:, None]
    qh = q / qn[:, None]
    cos = np.einsum("md,mkd->mk", ph, qh[idx])
    logits = cos / temperature
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[:, 0]))

    dlog = softmax(logits, axis=1)
    dlog[:, 0] -= 1.0
    dcos = dlog / (temperature * m)
    qsel = qh[idx]
    dp = np.einsum("mk,mkd->md", dcos, qsel - (p_live[:, None] * cos)[..., None] * ph[:, None])
    dp /= pn[:, None]
    dq_hat = dcos[..., None] * (ph[:, None] - (q_live[idx] * cos)[..., None] * qsel)   # (M, 1+K, D)
    dq = np.zeros_like(q)
    np.add.at(dq, idx.ravel(), dq_hat.reshape(-1, q.shape[1]))
    dq /= qn[:, None]
    return loss, dp, dq


def cc_loss(features, targets, negatives_per_pos: int = 10,
            temperature: float = 0.1, rng_seed: int = 0) -> float:
    return cc_loss_grad(features, targets, negatives_per_pos, temperature, rng_seed)[0]


# -- objectives over the separator ---------------------------------------------

@dataclass(frozen=True)
class CcSettings:
    negatives_per_pos: int = 10
    temperature: float = 0.1


def ssl_loss_and_grad(params, config, inputs, targets, frame_masks, task,
                      rng_seed: int = 0, cc: CcSettings = CcSettings()):
    """Batch SSL loss for a single-output separator and its parameter gradient.

    Args:
        inputs, targets: ``(B, T)`` corrupted inputs and clean targets.
        frame_masks: ``(B, F)`` boolean frame masks.
        task: SE and MAMA reconstruct waveforms; CC contrasts mask-logit frames
            with encoder features of the clean target at masked frames.

    Returns:
        ``(mean loss, SeparatorParams gradient)``.
    """
    task = Task(task)
    if config.n_outputs != 1:
        raise StructuralError("SSL objectives expect a single-output separator")
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    frame_masks = np.asarray(frame_masks, dtype=bool)
    b = inputs.shape[0]
    out, cache = sep.forward(params, config, inputs)
    if task is not Task.CC:
        losses, g_out = [], np.zeros_like(out)
        for i in range(b):
            fm = np.ones(frame_masks.shape[1], bool) if task is Task.SE else frame_masks[i]
            val, g = masked_reconstruction_loss_grad(out[i, 0], targets[i], fm, config.kernel)
            losses.append(val)
            g_out[i, 0] = g / b
        return float(np.mean(losses)), sep.backward(params, config, cache, g_out)

    tgt_feat, enc_cache = sep.encode(params, config, targets)
    logits = cache["logits"][:, 0]
    g_logits = np.zeros_like(cache["logits"])
    g_feat = np.zeros_like(tgt_feat)
    losses = []
    for i in range(b):
        rows = np.flatnonzero(frame_masks[i])
        val, dp, dq = cc_loss_grad(logits[i, rows], tgt_feat[i, rows], cc.negatives_per_pos,
                                   cc.temperature, rng_seed=[rng_seed, i])
        losses.append(val)
        g_logits[i, 0, rows] = dp / b
        g_feat[i, rows] = dq / b
    grads = sep.backward(params, config, cache, np.zeros_like(out), g_logits)
    grads.body["encoder"] = grads.body["encoder"] + sep.encode_backward(params, enc_cache, g_feat)
    return float(np.mean(losses)), grads
