"""Permutation-invariant training lab: synthetic two-source separation with SSL pre-training."""

from .signal import (
    DB_CAP, SAMPLE_RATE, DegenerateInputError, MixtureExample, StructuralError, Waveform,
    add_noise_at_snr, mix, sdr_improvement, si_snr, si_snr_improvement, snr,
)
from .assign import (
    Assignment, CapabilityError, SwitchLog, best_assignment_bruteforce,
    best_assignment_hungarian, pairwise_loss_matrix, pit_loss, switch_percentage,
)
from .separator import (
    SeparatorConfig, SeparatorParams, backward, forward, init_params, load_checkpoint,
    save_checkpoint, transfer_params,
)

__version__ = "0.1.0"
