"""Multi-scenario ranking with gated factor banks, angular disentangling
regularization, scenario-aware normalization/filtering, and a synthetic
verification harness."""

from .data import Dataset, NormalizerState, RankingSample, SynthSpec, generate, load_csv, normalize, partition_scenarios
from .disentangle import (
    CentroidSet,
    DRConfig,
    EquiangularGram,
    centroids,
    cnc_loss,
    cnc_loss_cos,
    dr_loss,
    equiangular_frame,
    mma_loss,
    ncr_loss,
    orth_loss,
    repulsion_target,
)
from .evalkit import AttentionMatrix, MetricReport, auc, evaluate, fsl_attention, rela_impr, subset_auc
from .factorization import DSFNet, FactorBank, GatingNet, GateVector, ModelConfig, compose_layer, compute_gates, forward, load_checkpoint, save_checkpoint
from .scenario_aware import SabnState, SaffNet, sabn_forward, saff
from .tensorcore import affine, grad_check, safe_angle
from .training import OptState, TrainConfig, bce_loss, fit, lr_at, total_loss, train

__version__ = "0.1.0"
