"""
Sweeping the uncertainty threshold
==================================

The patch metrics depend on where the uncertain/certain line is drawn. This
script walks the threshold from the smallest to the largest uncertainty value
and prints the resulting curve, then writes it as CSV.
"""

import sys

from patchuq import (PatchConfig, Region, SynthSpec, argmax_prediction, generate,
                     mutual_information, threshold_sweep)
from patchuq.io import sweep_to_csv

spec = SynthSpec(
    seed=3, height=64, width=64, class_count=4, samples=16,
    regions=(Region("disk", (20, 20, 12), 2, softness=0.2, flip_rate=0.6, decoy_class=1),
             Region("rectangle", (40, 8, 16, 48), 3, softness=0.1, flip_rate=0.2)),
    background_softness=0.05)
gt, stack = generate(spec)
pred = argmax_prediction(stack)

curve = threshold_sweep(pred, gt, mutual_information(stack), PatchConfig(window=4))


def fmt(x):
    return "   --" if x is None else f"{x:5.3f}"


print("   t     u_th   p(acc|cert) p(unc|inacc) PAvPU")
for point in curve:
    m = point.metrics
    print(f"{point.t:4.1f}  {point.u_th:7.4f}     {fmt(m.p_accurate_given_certain)}"
          f"        {fmt(m.p_uncertain_given_inaccurate)}     {fmt(m.pavpu)}")

# At t=0 every patch is uncertain, so p(accurate|certain) has no denominator and
# prints as "--". At t=1 every patch is certain and PAvPU equals the fraction
# of accurate patches.
if "--csv" in sys.argv:
    sys.stdout.write(sweep_to_csv(curve))
