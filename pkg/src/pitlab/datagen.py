"""Synthetic corpora: harmonic "speakers", pink noise, mixtures, manifests and WAV I/O.

Every random draw is seeded from the corpus master seed plus an identifier,
so regeneration is byte-identical and examples can be built in any order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.io import wavfile

from .signal import SAMPLE_RATE, MixtureExample, StructuralError, Waveform, noise_gain

N_HARMONICS = 8
PEAK = 0.7
F0_LIMITS = (80.0, 400.0)
F0_CENTER_RANGE = (90.0, 300.0)
# half-width of a speaker's f0 band, as a fraction of its center
F0_SPREAD = 0.05
VIBRATO_DEPTH = 0.02
SPLITS = ("train", "valid", "test")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little") >> 1


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0_range: Tuple[float, float]
    harmonic_weights: Tuple[float, ...]
    vibrato_rate: float
    am_envelope_rate: float

    @property
    def f0_center(self) -> float:
        return 0.5 * (self.f0_range[0] + self.f0_range[1])


def gen_speaker(master_seed: int, speaker_index: int) -> SpeakerProfile:
    rng = np.random.default_rng(derive_seed("speaker", master_seed, speaker_index))
    center = rng.uniform(*F0_CENTER_RANGE)
    lo = max(F0_LIMITS[0], center * (1 - F0_SPREAD))
    hi = min(F0_LIMITS[1], center * (1 + F0_SPREAD))
    # 1/k roll-off with jitter; the fundamental always carries the largest weight
    w = rng.uniform(0.5, 1.0, N_HARMONICS) / np.arange(1, N_HARMONICS + 1)
    w = w / w.sum()
    return SpeakerProfile(
        speaker_id=f"spk{speaker_index:03d}",
        f0_range=(float(lo), float(hi)),
        harmonic_weights=tuple(float(x) for x in w),
        vibrato_rate=float(rng.uniform(4.0, 7.0)),
        am_envelope_rate=float(rng.uniform(2.0, 5.0)),
    )


def _peak_normalize(x: np.ndarray, peak: float = PEAK) -> np.ndarray:
    m = np.max(np.abs(x))
    if m == 0:
        raise StructuralError("cannot peak-normalize an all-zero signal")
    return x * (peak / m)


def gen_utterance(profile: SpeakerProfile, duration_sec: float, utterance_seed: int,
                  sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Harmonic tone with vibrato and a syllable-rate amplitude envelope.

    The base f0 is drawn from the speaker's band; harmonics above Nyquist are
    dropped. Output peak is 0.7.
    """
    rng = np.random.default_rng(derive_seed("utt", profile.speaker_id, utterance_seed))
    n = int(round(duration_sec * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(*profile.f0_range)
    vib_phase = rng.uniform(0, 2 * np.pi)
    inst_f0 = f0 * (1.0 + VIBRATO_DEPTH * np.sin(2 * np.pi * profile.vibrato_rate * t + vib_phase))
    phase = 2 * np.pi * np.cumsum(inst_f0) / sample_rate
    offsets = rng.uniform(0, 2 * np.pi, N_HARMONICS)
    x = np.zeros(n)
    for k, w in enumerate(profile.harmonic_weights, start=1):
        if k * f0 * (1 + VIBRATO_DEPTH) < sample_rate / 2:
            x += w * np.sin(k * phase + offsets[k - 1])
    env_phase = rng.uniform(0, 2 * np.pi)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * profile.am_envelope_rate * t + env_phase)
    return Waveform(_peak_normalize(x * env), sample_rate)


def gen_noise(noise_seed: int, duration_sec: float, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Pink (1/f power) noise, zero mean, peak 0.7."""
    rng = np.random.default_rng(derive_seed("noise", noise_seed))
    n = int(round(duration_sec * sample_rate))
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = np.zeros_like(freqs)
    shape[1:] = 1.0 / np.sqrt(freqs[1:])
    x = np.fft.irfft(spec * shape, n)
    x -= x.mean()
    return Waveform(_peak_normalize(x), sample_rate)


# -- WAV and raw I/O -------------------------------------------------------------

def write_wav(path, wave: Waveform):
    """16-bit PCM mono WAV; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(str(path), wave.sample_rate, pcm)


def read_wav(path) -> Waveform:
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise StructuralError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype.kind == "f":
        samples = data.astype(np.float64)
    else:
        raise StructuralError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))


def write_raw(path, wave: Waveform):
    """Bit-exact little-endian float64 sidecar (rate is fixed for the lab)."""
    Path(path).write_bytes(np.ascontiguousarray(wave.samples, dtype="<f8").tobytes())


def read_raw(path, sample_rate: int = SAMPLE_RATE) -> Waveform:
    return Waveform(np.frombuffer(Path(path).read_bytes(), dtype="<f8").astype(np.float64), sample_rate)


# -- corpora ----------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for one synthetic corpus.

    Train and valid draw from speakers ``speaker_offset .. speaker_offset + n_speakers - 1``;
    test draws from the next ``n_test_speakers`` indices so its speakers are unseen.
    """

    name: str
    n_speakers: int
    n_train: int
    n_sources_per_mix: int = 2
    utterance_sec: float = 3.0
    noise: bool = False
    snr_range_db: Tuple[float, float] = (-3.0, 3.0)
    master_seed: int = 0
    speaker_offset: int = 0
    n_valid: int = 0
    n_test: int = 0
    n_test_speakers: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_range_db", tuple(float(x) for x in self.snr_range_db))
        if self.n_speakers < 1 or self.n_train < 1 or min(self.n_valid, self.n_test) < 0:
            raise StructuralError("corpus counts must be positive")
        if self.n_sources_per_mix not in (1, 2):
            raise StructuralError("n_sources_per_mix must be 1 or 2")
        if self.n_sources_per_mix == 2 and self.n_speakers < 2:
            raise StructuralError("2-source mixtures need at least 2 speakers")
        if self.utterance_sec < 0.5:
            raise StructuralError("utterance_sec must be >= 0.5")
        if self.n_test and self.n_test_speakers < self.n_sources_per_mix:
            raise StructuralError("test split needs its own speakers")
        if self.n_sources_per_mix == 1 and not self.noise:
            raise StructuralError("single-source corpora must be noised")

    @property
    def n_examples(self) -> int:
        return self.n_train + self.n_valid + self.n_test

    def speakers_for(self, split: str) -> List[int]:
        if split == "test":
            start = self.speaker_offset + self.n_speakers
            return list(range(start, start + self.n_test_speakers))
        return list(range(self.speaker_offset, self.speaker_offset + self.n_speakers))

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise StructuralError(f"unknown corpus fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_range_db"] = list(self.snr_range_db)
        return d


def default_ssl_spec(master_seed: int = 0) -> CorpusSpec:
    """Single speakers plus pink noise, speakers 0-49."""
    return CorpusSpec("ssl", n_speakers=50, n_train=2000, n_sources_per_mix=1, utterance_sec=3.0,
                      noise=True, snr_range_db=(0.0, 10.0), master_seed=master_seed,
                      speaker_offset=0, n_valid=100)


def default_separation_spec(master_seed: int = 0) -> CorpusSpec:
    """Two-speaker mixtures, train/valid speakers 50-69, test speakers 70-79."""
    return CorpusSpec("sep", n_speakers=20, n_train=800, n_sources_per_mix=2, utterance_sec=3.0,
                      noise=False, snr_range_db=(-3.0, 3.0), master_seed=master_seed,
                      speaker_offset=50, n_valid=100, n_test=100, n_test_speakers=10)


MANIFEST_FIELDS = ("example_id", "split", "mixture", "sources", "noise", "speaker_ids", "snr_db")


@dataclass
class ManifestRecord:
    example_id: str
    split: str
    mixture: str
    sources: List[str]
    noise: Optional[str]
    speaker_ids: List[str]
    snr_db: float

    def to_line(self) -> str:
        return "\t".join([self.example_id, self.split, self.mixture, ",".join(self.sources),
                          self.noise or "-", ",".join(self.speaker_ids), repr(float(self.snr_db))])

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "ManifestRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != len(MANIFEST_FIELDS):
            raise StructuralError(f"manifest line {lineno}: expected {len(MANIFEST_FIELDS)} "
                                  f"fields, got {len(parts)}")
        ex, split, mixture, sources, noise, spk, snr_db = parts
        return cls(ex, split, mixture, sources.split(","), None if noise == "-" else noise,
                   spk.split(","), float(snr_db))


@dataclass
class Manifest:
    records: List[ManifestRecord] = field(default_factory=list)
    root: Path = Path(".")
    spec: Optional[CorpusSpec] = None

    def __len__(self):
        return len(self.records)

    def split(self, name: str) -> List[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def speaker_ids(self) -> set:
        return {s for r in self.records for s in r.speaker_ids}

    def dump(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            if self.spec is not None:
                f.write("#spec\t" + json.dumps(self.spec.to_dict(), sort_keys=True) + "\n")
            f.write("#" + "\t".join(MANIFEST_FIELDS) + "\n")
            for r in self.records:
                f.write(r.to_line() + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        records, spec = [], None
        with open(path, encoding="utf-8") as f:
            for k, line in enumerate(f, 1):
                if line.startswith("#spec\t"):
                    spec = CorpusSpec.from_dict(json.loads(line.split("\t", 1)[1]))
                elif line.startswith("#") or not line.strip():
                    continue
                else:
                    records.append(ManifestRecord.from_line(line, k))
        ids = [r.example_id for r in records]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"{path}: duplicate example ids")
        return cls(records, path.parent, spec)

    def _raw(self, rel: str) -> Waveform:
        return read_raw(self.root / (rel[:-4] + ".f64" if rel.endswith(".wav") else rel))

    def load_example(self, record: ManifestRecord) -> MixtureExample:
        """Reads the bit-exact float64 sidecars, not the quantized WAVs."""
        noise = self._raw(record.noise) if record.noise else None
        return MixtureExample(self._raw(record.mixture), [self._raw(s) for s in record.sources],
                              noise, record.example_id)

    def load_split(self, name: str) -> List[MixtureExample]:
        return [self.load_example(r) for r in self.split(name)]


def _pick_speakers(rng, pool: Sequence[int], k: int) -> List[int]:
    return [int(s) for s in rng.choice(np.asarray(pool), size=k, replace=False)]


def build_example(spec: CorpusSpec, split: str, index: int) -> Tuple[MixtureExample, List[str], float]:
    """Deterministically synthesize one corpus item."""
    ex_id = f"{spec.name}_{split}_{index:05d}"
    rng = np.random.default_rng(derive_seed(spec.master_seed, ex_id))
    speakers = _pick_speakers(rng, spec.speakers_for(split), spec.n_sources_per_mix)
    profiles = [gen_speaker(spec.master_seed, s) for s in speakers]
    utt_seeds = rng.integers(0, 2 ** 62, size=len(profiles))
    utts = [gen_utterance(p, spec.utterance_sec, int(u)) for p, u in zip(profiles, utt_seeds)]
    snr_db = float(rng.uniform(*spec.snr_range_db))
    if spec.n_sources_per_mix == 2:
        # second source sits snr_db below the first
        g = noise_gain(utts[0], utts[1], snr_db)
        sources = [utts[0].samples, g * utts[1].samples]
        noise = None
        total = sources[0] + sources[1]
    else:
        raw = gen_noise(int(rng.integers(0, 2 ** 62)), spec.utterance_sec).samples
        sources = [utts[0].samples]
        noise = noise_gain(utts[0], raw, snr_db) * raw
        total = sources[0] + noise
    if spec.noise and noise is None:
        raw = gen_noise(int(rng.integers(0, 2 ** 62)), spec.utterance_sec).samples
        noise = noise_gain(total, raw, float(rng.uniform(10.0, 20.0))) * raw
        total = total + noise
    # keep 16-bit copies unclipped
    scale = min(1.0, 0.9 / np.max(np.abs(total)))
    sources = [Waveform(s * scale) for s in sources]
    noise_w = Waveform(noise * scale) if noise is not None else None
    mix_samples = np.sum([s.samples for s in sources], axis=0)
    if noise_w is not None:
        mix_samples = mix_samples + noise_w.samples
    example = MixtureExample(Waveform(mix_samples), sources, noise_w, ex_id)
    return example, [p.speaker_id for p in profiles], snr_db


def gen_corpus(spec: CorpusSpec, out_dir) -> Manifest:
    """Write audio (WAV + float64 sidecar) and ``manifest.tsv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    audio = out_dir / "audio"
    try:
        audio.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create corpus directory {audio}: {e}") from e
    records = []
    counts = {"train": spec.n_train, "valid": spec.n_valid, "test": spec.n_test}
    for split in SPLITS:
        for i in range(counts[split]):
            ex, spk, snr_db = build_example(spec, split, i)
            parts = {"mix": ex.mixture}
            parts.update({f"s{k}": s for k, s in enumerate(ex.sources)})
            if ex.noise is not None:
                parts["noise"] = ex.noise
            rel = {}
            for tag, wave in parts.items():
                stem = f"audio/{ex.id}_{tag}"
                try:
                    write_wav(out_dir / f"{stem}.wav", wave)
                    write_raw(out_dir / f"{stem}.f64", wave)
                except OSError as e:
                    raise OSError(f"failed writing {out_dir / stem}: {e}") from e
                rel[tag] = f"{stem}.wav"
            records.append(ManifestRecord(
                ex.id, split, rel["mix"], [rel[f"s{k}"] for k in range(ex.n_sources)],
                rel.get("noise"), spk, snr_db))
    manifest = Manifest(records, out_dir, spec)
    manifest.dump(out_dir / "manifest.tsv")
    return manifest


def check_disjoint(manifest_a: Manifest, manifest_b: Manifest) -> bool:
    """True iff the two corpora share no speaker."""
    return not (manifest_a.speaker_ids() & manifest_b.speaker_ids())


def load_spec_file(path) -> CorpusSpec:
    with open(path, encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise StructuralError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    return CorpusSpec.from_dict(d)


def corpus_dir_ok(path) -> bool:
    return os.path.isfile(Path(path) / "manifest.tsv")
