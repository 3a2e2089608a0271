import configparser
import math

import numpy as np
import pytest

from conftest import random_synth_spec
from patchuq.patch_eval import classify_patches, conditional_metrics, PatchConfig
from patchuq.synth import (Region, SynthSpec, generate, load_spec, misaligned_uncertainty,
                           spec_from_config)
from patchuq.tensors import ScalarMap, argmax_prediction, validate_prob_stack
from patchuq.uncertainty import mutual_information, predictive_entropy


def test_noise_free():
    spec = SynthSpec(1, 16, 16, 3, 4, (Region("rectangle", (2, 2, 8, 8), 1),))
    gt, stack = generate(spec)
    np.testing.assert_array_equal(argmax_prediction(stack).values, gt.values)
    assert predictive_entropy(stack).values.max() == 0.0
    assert mutual_information(stack).values.max() == 0.0
    conf = classify_patches(argmax_prediction(stack), gt, predictive_entropy(stack),
                            PatchConfig(), 0.1)
    m = conditional_metrics(conf)
    assert m.p_accurate_given_certain == 1.0 and m.pavpu == 1.0
    assert m.p_uncertain_given_inaccurate is None


def test_pure_aleatoric():
    spec = SynthSpec(2, 8, 8, 4, 3, background_softness=1.0)
    _, stack = generate(spec)
    np.testing.assert_allclose(predictive_entropy(stack).values, math.log(4), atol=1e-12)
    assert mutual_information(stack).values.max() <= 1e-12


def test_epistemic_region():
    spec = SynthSpec(3, 32, 32, 3, 64, (Region("disk", (16, 16, 8), 2, 0.0, 0.5, 0),))
    gt, stack = generate(spec)
    mi = mutual_information(stack).values
    inside = Region("disk", (16, 16, 8), 2).mask(32, 32)
    assert np.all(np.abs(mi[inside] - math.log(2)) <= 0.05)
    assert np.all(mi[~inside] == 0.0)


def test_paints_later_regions_on_top():
    spec = SynthSpec(0, 10, 10, 4, 1, (Region("rectangle", (0, 0, 10, 10), 1),
                                        Region("rectangle", (2, 2, 3, 3), 3)))
    gt, _ = generate(spec)
    assert gt.values[3, 3] == 3 and gt.values[0, 0] == 1


def test_deterministic_and_valid():
    rng = np.random.default_rng(99)
    for seed in range(10):
        spec = random_synth_spec(rng, seed)
        g1, s1 = generate(spec)
        g2, s2 = generate(spec)
        assert np.array_equal(g1.values, g2.values) and np.array_equal(s1.values, s2.values)
        assert validate_prob_stack(s1) is None


def test_zero_flip_rate_gives_zero_mi():
    rng = np.random.default_rng(7)
    spec = random_synth_spec(rng, 5)
    regions = tuple(Region(r.shape, r.geometry, r.true_class, r.softness, 0.0, r.decoy_class)
                    for r in spec.regions)
    _, stack = generate(SynthSpec(5, spec.height, spec.width, spec.class_count, 8, regions))
    assert mutual_information(stack).values.max() <= 1e-9


@pytest.mark.parametrize("region", [
    Region("rectangle", (0, 0, 20, 4), 1),
    Region("rectangle", (-1, 0, 2, 2), 1),
    Region("disk", (2, 2, 3), 1),
    Region("ellipse", (2, 2, 1), 1),
    Region("rectangle", (0, 0, 2, 2), 7),
    Region("rectangle", (0, 0, 2, 2), 1, softness=1.5),
])
def test_invalid_geometry(region):
    with pytest.raises(ValueError):
        generate(SynthSpec(0, 8, 8, 3, 2, (region,)))


class TestMisaligned:
    def test_constant_map(self):
        m = ScalarMap(np.full((5, 5), 0.4))
        np.testing.assert_array_equal(misaligned_uncertainty(m, 1).values, m.values)

    def test_same_multiset(self, rng):
        m = ScalarMap(rng.random((7, 9)))
        out = misaligned_uncertainty(m, 3)
        np.testing.assert_array_equal(np.sort(out.values.ravel()), np.sort(m.values.ravel()))
        assert not np.array_equal(out.values, m.values)
        np.testing.assert_array_equal(misaligned_uncertainty(m, 3).values, out.values)


CONFIG = """\
[image]
seed = 11
height = 24
width = 20
classes = 4
samples = 5
background_class = 0

[region car]
shape = rectangle
geometry = 2, 3, 10, 8
class = 1
softness = 0.2
flip_rate = 0.7
decoy_class = 2

[region sign]
shape = disk
geometry = 16 10 4
class = 3
"""


def test_config_file(tmp_path):
    path = tmp_path / "scene.ini"
    path.write_text(CONFIG)
    spec = load_spec(path)
    assert (spec.seed, spec.height, spec.width, spec.class_count, spec.samples) == (11, 24, 20, 4, 5)
    assert spec.regions[0] == Region("rectangle", (2, 3, 10, 8), 1, 0.2, 0.7, 2)
    assert spec.regions[1].geometry == (16, 10, 4) and spec.regions[1].flip_rate == 0.0
    assert load_spec(path, seed=3).seed == 3


def test_config_missing_keys():
    parser = configparser.ConfigParser()
    parser.read_string("[image]\nheight = 4\n")
    with pytest.raises(ValueError):
        spec_from_config(parser)
    with pytest.raises(ValueError):
        spec_from_config(configparser.ConfigParser())


def test_config_inline_comments(tmp_path):
    path = tmp_path / "scene.ini"
    path.write_text("[image]\nseed = 1 ; fixed\nheight = 8\nwidth = 8\nclasses = 3\nsamples = 2\n\n"
                    "[region a]   ; first\nshape = disk  # round\ngeometry = 4 4 2\nclass = 2\n")
    spec = load_spec(path)
    assert spec.seed == 1 and spec.regions[0] == Region("disk", (4, 4, 2), 2)
