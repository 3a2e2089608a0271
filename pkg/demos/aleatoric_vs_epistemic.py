"""
Aleatoric versus epistemic uncertainty
======================================

Predictive entropy grows whenever the averaged prediction is spread out.
Mutual information grows only when the individual samples disagree. A soft
but consistent region therefore shows high entropy and near-zero MI, while a
region whose samples flip between two classes shows both.
"""

from patchuq import Region, SynthSpec, generate, mutual_information, predictive_entropy

soft = Region("rectangle", (4, 4, 12, 12), 1, softness=0.8)
flipping = Region("rectangle", (4, 24, 12, 12), 2, flip_rate=0.5, decoy_class=3)
spec = SynthSpec(seed=11, height=20, width=40, class_count=4, samples=32,
                 regions=(soft, flipping))
gt, stack = generate(spec)
h = predictive_entropy(stack).values
mi = mutual_information(stack).values

for name, region in (("soft", soft), ("flipping", flipping)):
    mask = region.mask(spec.height, spec.width)
    print(f"{name:9s} mean entropy {h[mask].mean():.3f}  mean MI {mi[mask].mean():.3f}")
background = ~(soft.mask(20, 40) | flipping.mask(20, 40))
print(f"{'clean':9s} mean entropy {h[background].mean():.3f}  mean MI {mi[background].mean():.3f}")
