"""Patch-based evaluation of pixel-wise uncertainty for semantic segmentation."""
from .calibration import (CalibrationBins, CalibrationReport, bin_confidences,
                          calibration_report, ece, mce, temperature_scale)
from .patch_eval import (PatchConfig, PatchConfusion, PatchMetrics, SweepCurve,
                         ThresholdSpec, classify_patches, conditional_metrics,
                         enumerate_patches, evaluate, patch_accuracy, patch_uncertainty,
                         resolve_threshold, threshold_sweep)
from .segmetrics import (SegConfusion, UndefinedMetricError, accumulate_confusion,
                         mean_accuracy, mean_iou, pixel_accuracy)
from .synth import Region, SynthSpec, generate, misaligned_uncertainty
from .tensors import (ClassMap, InvariantError, ProbStack, ScalarMap, Violation,
                      argmax_prediction, validate_class_map, validate_prob_stack,
                      validate_scalar_map)
from .uncertainty import mutual_information, predictive_entropy, uncertainty_map

__version__ = "0.1.0"
