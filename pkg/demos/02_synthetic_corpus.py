"""The synthetic stand-ins for real speech corpora.

Speakers are harmonic tones with their own pitch band, timbre, vibrato and
syllable-rate envelope. Noise is pink. Separation and SSL corpora draw from
disjoint speaker pools.

Run: python demos/02_synthetic_corpus.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy import signal as sps

from pitlab import datagen
from pitlab.signal import SAMPLE_RATE

for idx in (0, 1, 50):
    p = datagen.gen_speaker(0, idx)
    x = datagen.gen_utterance(p, 2.0, utterance_seed=1).samples
    f, pxx = sps.periodogram(x, SAMPLE_RATE)
    print(f"{p.speaker_id}: f0 band {p.f0_range[0]:.0f}-{p.f0_range[1]:.0f} Hz, "
          f"spectral peak {f[np.argmax(pxx)]:.0f} Hz, "
          f"weights {np.round(p.harmonic_weights[:3], 3)}...")

noise = datagen.gen_noise(3, 4.0).samples
f, pxx = sps.welch(noise, SAMPLE_RATE, nperseg=2048)
band = (f >= 100) & (f <= 2000)
slope = np.polyfit(np.log2(f[band]), 10 * np.log10(pxx[band]), 1)[0]
print(f"pink noise slope: {slope:.2f} dB/octave")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="pitlab_corpus_"))
sep_spec = datagen.CorpusSpec("sep", n_speakers=6, n_train=10, utterance_sec=1.0, speaker_offset=50,
                              n_valid=2, n_test=2, n_test_speakers=2)
ssl_spec = datagen.CorpusSpec("ssl", n_speakers=6, n_train=10, n_sources_per_mix=1, utterance_sec=1.0,
                              noise=True, snr_range_db=(0.0, 10.0))
sep_m = datagen.gen_corpus(sep_spec, out / "sep")
ssl_m = datagen.gen_corpus(ssl_spec, out / "ssl")
print(f"\nwrote {len(sep_m)} mixtures and {len(ssl_m)} noisy utterances under {out}")
print("speaker pools disjoint:", datagen.check_disjoint(sep_m, ssl_m))
r = sep_m.records[0]
print("first record:", r.to_line())
ex = sep_m.load_example(r)
print("mixture - sum(sources) max abs:",
      np.max(np.abs(ex.mixture.samples - ex.sources[0].samples - ex.sources[1].samples)))
