"""
Calibration error and temperature scaling
=========================================

Make a set of over-confident logits, measure the expected and maximum
calibration error, then fit a single temperature that repairs them.
"""

import numpy as np

from patchuq import ClassMap, ProbStack, bin_confidences, ece, mce, temperature_scale
from patchuq.calibration import nll

rng = np.random.default_rng(0)
classes, side = 5, 80

# Labels are drawn from softmax(z), so z itself is well calibrated ...
z = rng.normal(scale=2.0, size=(classes, side, side))
p = np.exp(z - z.max(axis=0))
p /= p.sum(axis=0)
labels = (rng.random((side, side)) > p.cumsum(axis=0)).sum(axis=0)
gt = ClassMap(np.minimum(labels, classes - 1), classes)

# ... and multiplying it by 3 makes the network sharper than it should be.
logits = 3.0 * z
sharp = np.exp(logits - logits.max(axis=0))
sharp /= sharp.sum(axis=0)
before = bin_confidences(ProbStack(sharp), gt)
print(f"before: ECE={ece(before):.4f} MCE={mce(before):.4f} NLL={nll(logits, gt, 1.0):.4f}")

t_star, scaled = temperature_scale(logits, gt)
after = bin_confidences(scaled, gt)
print(f"T* = {t_star:.3f}")
print(f"after:  ECE={ece(after):.4f} MCE={mce(after):.4f} NLL={nll(logits, gt, t_star):.4f}")

# Dividing every logit by the same positive number never changes the argmax.
assert np.array_equal(scaled.values[0].argmax(axis=0), logits.argmax(axis=0))
