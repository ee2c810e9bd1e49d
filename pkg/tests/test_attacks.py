import dataclasses

import numpy as np
import pytest

from ioi_attack import spectral
from ioi_attack.attacks import (AttackConfig, AttackError, attack_video, averaged_rg, compose_adversarial,
                                fgsm, hf_perturbation, i_fgsm, ioi_attack, run_attack, verify_theorem1,
                                weighted_fgsm)
from ioi_attack.image_core import Image, VideoSequence
from ioi_attack.metrics import GradientOracle, LaplaceSharpness, ToyCNN
from ioi_attack.weighting import WeightMap, ioi_weights, nvw_weights, sobel_weights

from oracles import brute_dft2

CNN = ToyCNN(0)
LAP = LaplaceSharpness()


def img_for(seed, h=16, w=16, c=3):
    return Image(np.random.default_rng(seed).random((h, w, c)))


@pytest.mark.parametrize("bad", [dict(epsilon=-0.1), dict(f=0.0), dict(f=1.0), dict(iterations=0),
                                 dict(iterations=1.5), dict(direction="sideways")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        AttackConfig(**bad)


def test_fgsm_moves_every_pixel_with_nonzero_gradient_by_epsilon():
    img = img_for(0)
    g = CNN.gradient(img)
    d = fgsm(img, CNN, 0.03).data - img.data
    assert np.allclose(np.abs(d[g != 0]), 0.03)
    assert not d[g == 0].any()


def test_fgsm_on_constant_image_with_zero_gradient_is_identity():
    img = Image(np.full((8, 8, 3), 0.5))
    assert np.array_equal(fgsm(img, LAP, 0.1).data, img.data)


def test_fgsm_is_not_clamped():
    img = Image(np.random.default_rng(1).choice([0.0, 1.0], size=(12, 12, 3)))
    out = fgsm(img, LAP, 0.1).data
    assert out.min() < 0.0 or out.max() > 1.0


@pytest.mark.parametrize("oracle", [CNN, LAP], ids=["cnn", "laplace"])
def test_small_step_increases_the_score(oracle):
    wins = sum(oracle.score(fgsm(img_for(s, 8, 8), oracle, 1e-3)).value
               >= oracle.score(img_for(s, 8, 8)).value for s in range(100))
    assert wins >= 95


def test_decrease_direction_flips_the_step():
    img = img_for(2)
    up = fgsm(img, CNN, 0.05).data - img.data
    down = fgsm(img, CNN, 0.05, "decrease").data - img.data
    assert np.abs(up + down).max() < 1e-15
    assert np.array_equal(np.sign(up), -np.sign(down))


def test_ifgsm_with_one_step_equals_fgsm():
    img = img_for(3)
    assert np.array_equal(i_fgsm(img, CNN, 0.1, 1).data, fgsm(img, CNN, 0.1).data)


@pytest.mark.parametrize("n", [2, 4, 7])
def test_ifgsm_stays_in_the_epsilon_ball(n):
    img = img_for(4)
    assert np.abs(i_fgsm(img, CNN, 0.1, n).data - img.data).max() <= 0.1 + 1e-12


def test_ifgsm_clamped_steps_stay_in_range():
    img = img_for(5)
    out = i_fgsm(img, LAP, 0.5, 4, clamp_steps=True).data
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_more_iterations_gain_at_least_as_much_per_image():
    for s in range(5):
        img = img_for(s, 24, 24)
        base = CNN.score(img).value
        one = CNN.score(i_fgsm(img, CNN, 0.1, 1)).value - base
        four = CNN.score(i_fgsm(img, CNN, 0.1, 4)).value - base
        assert four >= one


def test_weighted_fgsm_limits():
    img = img_for(6)
    zero = WeightMap.constant(img.shape, 0.0)
    one = WeightMap.constant(img.shape, 1.0)
    assert np.array_equal(weighted_fgsm(img, CNN, 0.1, zero).data, img.data)
    assert np.array_equal(weighted_fgsm(img, CNN, 0.1, one).data, fgsm(img, CNN, 0.1).data)
    for fn in (nvw_weights, sobel_weights):
        w = fn(img)
        d = weighted_fgsm(img, CNN, 0.1, w).data - img.data
        assert np.abs(d).max() <= 0.1 * w.weights.max() + 1e-15
    with pytest.raises(ValueError, match="does not match"):
        weighted_fgsm(img, CNN, 0.1, WeightMap.constant((4, 4, 3), 1.0))


class NaNOracle(GradientOracle):
    name = "nan"

    def __init__(self):
        super().__init__((0, 1))
        self._admitted.update({1, 3})  # skip admission

    def _value(self, x):
        return 0.0

    def _value_and_grad(self, x):
        g = np.zeros_like(x)
        g[2, 5, 1] = np.nan
        return 0.0, g


def test_non_finite_gradient_names_the_pixel():
    with pytest.raises(AttackError, match=r"row=2, col=5, channel=1"):
        fgsm(img_for(7, 8, 8), NaNOracle(), 0.1)


@pytest.mark.parametrize("shape", [(8, 8, 3), (9, 13, 1), (16, 11, 3), (12, 12, 3)])
@pytest.mark.parametrize("f", [0.01, 0.07, 0.3])
def test_fast_route_matches_literal_composition(shape, f):
    img = Image(np.random.default_rng(sum(shape)).random(shape))
    pert = fgsm(img, CNN, 0.1)
    w = ioi_weights(img)
    literal = compose_adversarial(img, pert, spectral.select_topf(spectral.fft2(img), f), w).data
    hf, _ = hf_perturbation(img, pert, f)
    assert np.abs(literal - (img.data + w.weights * hf)).max() < 1e-12


def test_epsilon_zero_is_identity():
    img = img_for(8)
    rec = ioi_attack(img, CNN, AttackConfig(epsilon=0.0))
    assert np.abs(rec.adversarial.data - img.data).max() < 1e-9
    assert rec.linf < 1e-9 and rec.bound_ok


def test_constant_image_is_left_alone():
    img = Image(np.full((10, 10, 3), 0.6))
    rec = ioi_attack(img, CNN, AttackConfig())
    assert np.abs(rec.adversarial.data - img.data).max() < 1e-9


def test_zero_weights_recompose_the_original():
    img = img_for(9)
    pert = fgsm(img, CNN, 0.2)
    idx = spectral.select_topf(spectral.fft2(img), 0.07)
    out = compose_adversarial(img, pert, idx, WeightMap.constant(img.shape, 0.0)).data
    assert np.abs(out - img.data).max() < 1e-9


def test_flat_region_is_untouched():
    x = np.random.default_rng(10).random((20, 20, 3))
    x[4:14, 5:15] = 0.3
    img = Image(x)
    rec = ioi_attack(img, CNN, AttackConfig(epsilon=0.2))
    w = ioi_weights(img).weights
    zero = w == 0
    assert zero[6:12, 7:13].all()
    raw_delta = rec.adversarial.data - img.data  # no clamping happens at 0.3 +- small
    assert np.abs(raw_delta[zero]).max() < 1e-9


def test_bound_against_brute_force_mae_star():
    for seed in range(5):
        img = img_for(seed, 8, 8)
        cfg = AttackConfig(epsilon=0.1, f=0.07)
        rec = ioi_attack(img, CNN, cfg)
        d = fgsm(img, CNN, 0.1).data - img.data
        mae = np.mean([np.abs(brute_dft2(d[:, :, c])).mean() for c in range(3)])
        assert rec.mae_star_pert == pytest.approx(mae, rel=1e-12)
        assert rec.linf <= (1 - cfg.f) * mae + 1e-9
        assert rec.bound_ok


def test_linf_is_measured_before_clamping():
    img = Image(np.random.default_rng(11).choice([0.0, 1.0], size=(16, 16, 3)))
    rec = ioi_attack(img, LAP, AttackConfig(epsilon=0.3))
    clamped = np.abs(rec.adversarial.data - img.data).max()
    assert rec.linf >= clamped


def test_verify_theorem1_flags_a_violation():
    rec = ioi_attack(img_for(12), CNN)
    bad = dataclasses.replace(rec, linf=rec.mae_star_pert)
    assert not verify_theorem1(bad, 0.07)


def test_multi_iteration_ioi_uses_double_step():
    img = img_for(13)
    rec = ioi_attack(img, CNN, AttackConfig(epsilon=0.1, iterations=4))
    pert = i_fgsm(img, CNN, 0.1, 4, step=0.05)
    _, mae = hf_perturbation(img, pert, 0.07)
    assert rec.mae_star_pert == pytest.approx(mae.mean(), rel=1e-12)


def test_ioi_rejects_small_images():
    with pytest.raises(ValueError, match="8x8"):
        ioi_attack(Image(np.zeros((7, 9, 3))), LAP)


def test_ioi_is_deterministic():
    img = img_for(14)
    a = ioi_attack(img, CNN)
    b = ioi_attack(img, CNN)
    assert np.array_equal(a.adversarial.data, b.adversarial.data)
    assert (a.rg, a.linf, a.mae_star_pert) == (b.rg, b.linf, b.mae_star_pert)


@pytest.mark.parametrize("name", ["fgsm", "ifgsm", "nvw", "korhonen"])
def test_baselines_report_no_bound(name):
    rec = run_attack(name, img_for(15), CNN, AttackConfig(iterations=2))
    assert rec.bound_ok is None and rec.attack == name
    assert rec.adversarial.data.min() >= 0 and rec.adversarial.data.max() <= 1


def test_unknown_attack():
    with pytest.raises(ValueError, match="unknown attack"):
        run_attack("uap", img_for(0), CNN)


def _video(n, seed=0):
    rng = np.random.default_rng(seed)
    return VideoSequence(tuple(Image(rng.random((12, 12, 3))) for _ in range(n)))


def test_video_stride_one_attacks_every_frame():
    video = _video(3)
    _, recs = attack_video(video, CNN, AttackConfig(f=0.05))
    assert all(r.attacked for r in recs)
    assert averaged_rg(recs) == pytest.approx(np.mean([r.rg for r in recs]))


def test_video_stride_equal_to_length_dilutes_the_gain():
    video = _video(4)
    adv, recs = attack_video(video, CNN, AttackConfig(f=0.05), frame_stride=4)
    assert [r.attacked for r in recs] == [True, False, False, False]
    assert averaged_rg(recs) == pytest.approx(recs[0].rg / 4)
    for i in (1, 2, 3):
        assert adv[i] is video[i]


def test_video_workers_give_identical_results():
    video = _video(5, 1)
    a, ra = attack_video(video, CNN, AttackConfig(f=0.05), workers=1)
    b, rb = attack_video(video, CNN, AttackConfig(f=0.05), workers=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.data, y.data)
    assert [r.rg for r in ra] == [r.rg for r in rb]
