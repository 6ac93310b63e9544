"""Wrong-event noise modeling: per-sample misprediction counts, per-class beta
mixtures over them, and two-stage training that weights a two-view objective
by the resulting clean posterior and difficulty coefficient.
"""

from .betamix import (
    BetaComponent,
    BetaMixture,
    MixtureBank,
    beta_cdf,
    beta_pdf,
    difficulty,
    fit_bank,
    fit_bmm,
    posterior,
)
from .config import load_config, resolve_config
from .datagen import (
    Dataset,
    TransitionMatrix,
    apply_transition,
    asymmetric_noise_matrix,
    instance_noise,
    load_csv,
    make_gaussian_clusters,
    save_csv,
    symmetric_noise_matrix,
)
from .dynamics import (
    DynamicsLedger,
    change_rate_stats,
    first_local_min_epoch,
    fluctuation_flags,
    normalized_wrong_events,
    record_epoch,
)
from .evaluation import auc, compare_metrics, prf_at_threshold, test_accuracy
from .experiment import ablate, run_experiment
from .losses import ido_loss
from .net import Model, augment, forward, init_model, load_checkpoint, save_checkpoint, sgd_step
from .trainer import TrainConfig, run_two_stage, stage1, stage2, train_ce_baseline

__version__ = "0.1.0"
