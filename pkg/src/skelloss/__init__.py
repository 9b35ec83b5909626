"""Numerical laboratory for skeleton-recall segmentation losses.

The package covers the full chain from label masks to significance
tests: tubed skeletonization of ground truth, differentiable losses
with analytic gradients, gradient verification and auditing, overlap
and centerline metrics, Welch t-tests, deterministic synthetic data,
and a small pixel classifier whose training makes loss-level effects
measurable.
"""

from .classifier import (EvalResult, PixelSoftmaxClassifier, TrainConfig,
                         TrainingDivergedError, TrainResult, evaluate,
                         extract_features, train)
from .experiment import (ExperimentConfig, ExperimentResult, RunResult,
                         arm_config, run_experiment, run_single, write_outputs)
from .gradcheck import (AuditReport, ConstancyReport, GradComparison,
                        category_audit, compare_grads, finite_diff_grad,
                        gradient_constancy_probe, random_label_mask,
                        random_prob_map)
from .losses import (LossBreakdown, LossConfig, combined_loss,
                     cross_entropy_loss, soft_dice_loss, srl_loss)
from .metrics import (ConfusionCounts, MetricsReport, cl_dice, confusion,
                      evaluate_masks, hard_predict, overlap_metrics)
from .raster import (StructuringElement, TubedSkeletonizer, binarize, dilate,
                     skeletonize, skeletonize_no_ts, tubed_skeletonize)
from .stats import TTestResult, student_t_cdf, summarize, t_test_one_sided
from .synth import SynthConfig, SynthSample, generate, load_dataset, save_dataset, split

__version__ = "0.1.0"

__all__ = [
    "AuditReport",
    "ConfusionCounts",
    "ConstancyReport",
    "EvalResult",
    "ExperimentConfig",
    "ExperimentResult",
    "GradComparison",
    "LossBreakdown",
    "LossConfig",
    "MetricsReport",
    "PixelSoftmaxClassifier",
    "RunResult",
    "StructuringElement",
    "SynthConfig",
    "SynthSample",
    "TTestResult",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "TubedSkeletonizer",
    "arm_config",
    "binarize",
    "category_audit",
    "cl_dice",
    "combined_loss",
    "compare_grads",
    "confusion",
    "cross_entropy_loss",
    "dilate",
    "evaluate",
    "evaluate_masks",
    "extract_features",
    "finite_diff_grad",
    "generate",
    "gradient_constancy_probe",
    "hard_predict",
    "load_dataset",
    "overlap_metrics",
    "random_label_mask",
    "random_prob_map",
    "run_experiment",
    "run_single",
    "save_dataset",
    "skeletonize",
    "skeletonize_no_ts",
    "soft_dice_loss",
    "split",
    "srl_loss",
    "student_t_cdf",
    "summarize",
    "t_test_one_sided",
    "train",
    "tubed_skeletonize",
    "write_outputs",
]
