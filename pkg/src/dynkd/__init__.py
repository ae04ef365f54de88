"""Knowledge distillation with a learnable entropy controller on the student's logits."""
from .checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, quantize, save_checkpoint
from .controller import (
    EntropyController,
    Mode,
    PathParams,
    controller_new,
    reparameterize,
    reparameterize_alpha,
    static_alpha,
)
from .data import Dataset, blob_centers, load_idx, read_idx_images, read_idx_labels, synth_blobs, write_idx
from .errors import (
    BadMagicError,
    ConfigError,
    CountMismatchError,
    DataFormatError,
    NumericalError,
    ReparamError,
    TruncatedFileError,
)
from .landscape import (
    GapCurve,
    count_sign_changes,
    default_grid,
    gap_minima_trajectory,
    scan_alpha,
    verify_limits,
)
from .losses import (
    LossBreakdown,
    cross_entropy_loss,
    distill_objective,
    grad_alpha_ce,
    grad_alpha_kl_paper,
    grad_alpha_kl_true,
    grad_logits,
    kl_loss,
    output_entropy,
    soften,
    total_loss,
    weighted_mean,
)
from .metrics import MetricsRow, RunMetrics, read_metrics, write_metrics
from .nn import GradientSet, NetworkParams, OptimizerState, backward, forward, init_params, predict_logits, sgd_step
from .trainer import DistillConfig, DistillResult, distill, evaluate, train_teacher

__version__ = "0.1.0"
