"""Desk-scale preset used by the acceptance suite.

The spec-default corpora (3 s utterances, 800 + 2000 items) and epoch budgets
(30 + 60) need several CPU-hours per run in pure numpy on one core, so trend
checks run on shorter utterances, smaller corpora and 20 + 20 epochs. The
speaker pools and their disjointness are the same as the defaults.
"""

from .datagen import CorpusSpec
from .harness import RunConfig


def desk_separation_spec(master_seed: int = 0) -> CorpusSpec:
    return CorpusSpec("sep", n_speakers=20, n_train=400, n_sources_per_mix=2, utterance_sec=0.5,
                      noise=False, snr_range_db=(-3.0, 3.0), master_seed=master_seed,
                      speaker_offset=50, n_valid=50, n_test=50, n_test_speakers=10)


def desk_ssl_spec(master_seed: int = 0) -> CorpusSpec:
    return CorpusSpec("ssl", n_speakers=50, n_train=1000, n_sources_per_mix=1, utterance_sec=0.5,
                      noise=True, snr_range_db=(0.0, 10.0), master_seed=master_seed,
                      speaker_offset=0, n_valid=50)


DESK_MODEL = dict(n_filters=64, kernel=32, hidden=64, masker_blocks=4)
DESK_EPOCHS = dict(separation_epochs=20, pretrain_epochs=20)


def desk_run_config(**overrides) -> RunConfig:
    """RunConfig with the desk model and epoch budget; everything else at spec defaults."""
    return RunConfig(**{**DESK_MODEL, **DESK_EPOCHS, **overrides})
