"""Waveforms, mixing, and the separation metrics (SI-SNR, SI-SNRi, SDRi).

Metric functions accept either :class:`Waveform` objects or plain arrays.
Array inputs broadcast over leading axes, with time on the last axis, so the
training loop can score whole batches in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

SAMPLE_RATE = 8000
DB_CAP = 60.0

_LN10 = np.log(10.0)
# below this energy a projection or residual counts as underflowed
_TINY = 1e-30


class StructuralError(ValueError):
    """Inputs have incompatible shapes, lengths, rates or sizes."""


class DegenerateInputError(ValueError):
    """Inputs are well formed but numerically degenerate (e.g. zero energy)."""


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono float64 signal at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise StructuralError(f"waveform must be 1-D, got shape {s.shape}")
        if s.size == 0:
            raise StructuralError("waveform must have at least one sample")
        if not np.all(np.isfinite(s)):
            raise DegenerateInputError("waveform contains NaN or Inf")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))


@dataclass(frozen=True, eq=False)
class MixtureExample:
    mixture: Waveform
    sources: tuple
    noise: Waveform | None = None
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise StructuralError("a mixture example needs at least one source")
        _check_compatible([self.mixture, *self.sources] + ([self.noise] if self.noise else []))
        total = np.sum([s.samples for s in self.sources], axis=0)
        if self.noise is not None:
            total = total + self.noise.samples
        err = np.max(np.abs(total - self.mixture.samples))
        if err > 1e-6:
            raise StructuralError(f"mixture != sum of parts (max abs error {err:.3g})")

    @property
    def n_sources(self) -> int:
        return len(self.sources)


ArrayOrWave = Union[Waveform, np.ndarray, Sequence[float]]


def _as_array(x: ArrayOrWave) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def _check_compatible(waves: Sequence[Waveform]):
    n = len(waves[0])
    rate = waves[0].sample_rate
    for w in waves[1:]:
        if len(w) != n:
            raise StructuralError(f"length mismatch: {len(w)} vs {n}")
        if w.sample_rate != rate:
            raise StructuralError(f"sample rate mismatch: {w.sample_rate} vs {rate}")


def mix(sources: Sequence[Waveform], gains: Sequence[float]) -> Waveform:
    """Sum of gain-scaled sources."""
    if len(sources) == 0:
        raise StructuralError("cannot mix an empty list of sources")
    if len(gains) != len(sources):
        raise StructuralError(f"{len(sources)} sources but {len(gains)} gains")
    if not np.all(np.isfinite(gains)):
        raise DegenerateInputError("gains must be finite")
    _check_compatible(sources)
    out = np.zeros(len(sources[0]))
    for s, g in zip(sources, gains):
        out = out + float(g) * s.samples
    return Waveform(out, sources[0].sample_rate)


def noise_gain(clean: ArrayOrWave, noise: ArrayOrWave, snr_db: float) -> float:
    """Gain that puts ``noise`` at ``snr_db`` below ``clean``."""
    e_clean = float(np.dot(_as_array(clean), _as_array(clean)))
    e_noise = float(np.dot(_as_array(noise), _as_array(noise)))
    if e_clean <= 0.0:
        raise DegenerateInputError("clean signal has zero energy")
    if e_noise <= 0.0:
        raise DegenerateInputError("noise has zero energy")
    return float(np.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0))))


def add_noise_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Return ``clean + g * noise`` with the SNR of the result versus ``clean`` equal to ``snr_db``."""
    _check_compatible([clean, noise])
    g = noise_gain(clean, noise, snr_db)
    return Waveform(clean.samples + g * noise.samples, clean.sample_rate)


def snr(est: ArrayOrWave, ref: ArrayOrWave):
    """Plain SNR of ``est`` against ``ref`` in dB, capped to +-60 dB."""
    est, ref = _as_array(est), _as_array(ref)
    if est.shape[-1] != ref.shape[-1]:
        raise StructuralError(f"length mismatch: {est.shape[-1]} vs {ref.shape[-1]}")
    sig = np.sum(ref * ref, axis=-1)
    if np.any(sig <= 0.0):
        raise DegenerateInputError("reference has zero energy")
    d = ref - est
    err = np.sum(d * d, axis=-1)
    return _capped_db(sig, err)


def _capped_db(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 10.0 * np.log10(num / den)
    val = np.where(den <= _TINY * np.maximum(num, _TINY), DB_CAP, val)
    val = np.where(num <= _TINY * np.maximum(den, _TINY), -DB_CAP, val)
    val = np.clip(val, -DB_CAP, DB_CAP)
    return float(val) if val.ndim == 0 else val


def _si_snr_parts(est, ref, zero_mean):
    est, ref = _as_array(est), _as_array(ref)
    if est.shape[-1] != ref.shape[-1]:
        raise StructuralError(f"length mismatch: {est.shape[-1]} vs {ref.shape[-1]}")
    if zero_mean:
        est = est - est.mean(axis=-1, keepdims=True)
        ref = ref - ref.mean(axis=-1, keepdims=True)
    ref_energy = np.sum(ref * ref, axis=-1, keepdims=True)
    if np.any(ref_energy <= 0.0):
        raise DegenerateInputError("reference has zero energy")
    proj = np.sum(est * ref, axis=-1, keepdims=True) / ref_energy * ref
    resid = est - proj
    return proj, resid


def si_snr(est: ArrayOrWave, ref: ArrayOrWave, zero_mean: bool = True):
    """Scale-invariant SNR in dB, capped to [-60, 60].

    Both signals are mean-subtracted (unless ``zero_mean=False``), ``est`` is
    projected onto ``ref``, and the ratio of projection to residual energy is
    returned. Works elementwise over leading axes.
    """
    proj, resid = _si_snr_parts(est, ref, zero_mean)
    return _capped_db(np.sum(proj * proj, axis=-1), np.sum(resid * resid, axis=-1))


def si_snr_grad(est: np.ndarray, ref: np.ndarray):
    """SI-SNR (zero-mean variant) and its gradient with respect to ``est``.

    The gradient is zero wherever the value sits on the +-60 dB cap.
    """
    proj, resid = _si_snr_parts(est, ref, True)
    pe = np.sum(proj * proj, axis=-1, keepdims=True)
    re = np.sum(resid * resid, axis=-1, keepdims=True)
    value = _capped_db(pe[..., 0], re[..., 0])
    live = np.abs(np.asarray(value)) < DB_CAP
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = (20.0 / _LN10) * (proj / pe - resid / re)
    grad = np.where(live[..., None], grad, 0.0)
    return value, grad


def si_snr_improvement(est: ArrayOrWave, ref: ArrayOrWave, mixture: ArrayOrWave):
    """SI-SNR of ``est`` minus SI-SNR of the unprocessed ``mixture``, same reference."""
    return si_snr(est, ref) - si_snr(mixture, ref)


def sdr_improvement(est: ArrayOrWave, ref: ArrayOrWave, mixture: ArrayOrWave):
    """Plain-SNR improvement; a simplified SDRi without the BSS-eval distortion filter."""
    return snr(est, ref) - snr(mixture, ref)
