"""Calibrated recommendation toolkit.

Three capabilities on a matrix-factorization backbone:

- ``calibration``: map ranking scores to interaction probabilities (Platt,
  quadratic-logistic, log-linear-logistic, histogram binning), with optional
  inverse-propensity-weighted fitting and ECE/reliability diagnostics.
- ``distill``: bidirectional teacher-student co-training with
  rank-discrepancy-aware target sampling.
- ``perk``: per-user recommendation-list sizing by exact expected utility
  under independent Bernoulli relevance.

Supporting modules: ``dataset`` (ingestion and splits), ``ranker`` (the MF
backbone), ``metrics`` (realized ranking metrics), ``synthetic`` (seeded
data generators), ``cli`` (the end-to-end pipeline driver).
"""

from . import calibration, cli, dataset, distill, metrics, perk, ranker, seeding, synthetic
from .calibration import (
    CalibrationSample,
    Calibrator,
    PropensityModel,
    collect_calibration_samples,
    ece,
    estimate_propensity,
    gamma_shift,
    load_calibrator,
    reliability_table,
    save_calibrator,
)
from .dataset import DataFormatError, Dataset, IdMaps, load_interactions, sample_negative, split_per_user
from .distill import (
    BdConfig,
    CotrainReport,
    RankTable,
    bd_loss,
    build_rank_table,
    cotrain_epoch,
    rank_discrepancy_weights,
    sample_distill_items,
)
from .metrics import EvalResult, evaluate, f1_at, ndcg_at, precision_at, recall_at
from .perk import (
    PerkConfig,
    PersonalizedCut,
    expected_f1,
    expected_ndcg,
    expected_precision,
    expected_recall,
    pb_pmf,
    perk_recommend,
    select_k,
    utility_curve,
)
from .ranker import (
    MfParams,
    TrainConfig,
    auc,
    bpr_epoch,
    init_params,
    load_checkpoint,
    pointwise_epoch,
    rank_items,
    save_checkpoint,
    score,
    score_items,
)

__version__ = "0.1.0"
