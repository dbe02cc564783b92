"""Loss-threshold membership inference and the forgetting delta."""

import math

import numpy as np
import pytest

from fusim.data import make_synthetic_dataset, split_train_heldout
from fusim.mia import (
    AttackSample,
    _balance,
    _score,
    collect_losses,
    fit_and_score,
    unlearning_effectiveness,
)
from fusim.models import MLPSpec, init_params, train_local
from fusim.params import ParamVector


def samples_from(member_losses, nonmember_losses):
    out = [AttackSample(float(l), True) for l in member_losses]
    out += [AttackSample(float(l), False) for l in nonmember_losses]
    return out


@pytest.fixture(scope="module")
def overfit_setup():
    """A model memorizing its 45-sample training set, plus a held-out half."""
    data = make_synthetic_dataset(
        num_classes=3, samples_per_class=30, feature_dim=6, cluster_spread=2.0, seed=3
    )
    train, heldout = split_train_heldout(data, train_per_class=15)
    spec = MLPSpec(feature_dim=6, num_classes=3, hidden=(16,))
    rng = np.random.default_rng(7)
    start = init_params(spec, rng)
    trained = train_local(
        start, train, epochs=60, learning_rate=0.1, batch_size=64, seed=np.random.SeedSequence(7)
    )
    return trained, start, train, heldout


class TestAttackSample:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            AttackSample(float("nan"), True)
        with pytest.raises(ValueError, match="finite"):
            AttackSample(math.inf, False)

    def test_holds_values(self):
        s = AttackSample(0.25, True)
        assert s.loss == 0.25 and s.is_member


class TestCollectLosses:
    def test_counts_and_flags(self, overfit_setup):
        trained, _, train, heldout = overfit_setup
        member = train.subset(np.arange(45))
        nonmember = heldout.subset(np.arange(45))
        samples = collect_losses(trained, member, nonmember)
        assert len(samples) == 90
        assert sum(s.is_member for s in samples) == 45

    def test_identical_data_identical_losses(self, overfit_setup):
        trained, _, train, _ = overfit_setup
        samples = collect_losses(trained, train, train)
        members = [s.loss for s in samples if s.is_member]
        nonmembers = [s.loss for s in samples if not s.is_member]
        assert members == nonmembers

    def test_empty_rejected(self, overfit_setup):
        trained, _, train, _ = overfit_setup
        with pytest.raises(ValueError, match="non-empty"):
            collect_losses(trained, train.subset(np.array([], dtype=int)), train)

    def test_overfit_members_have_smaller_losses(self, overfit_setup):
        trained, _, train, heldout = overfit_setup
        samples = collect_losses(trained, train, heldout)
        member_mean = np.mean([s.loss for s in samples if s.is_member])
        nonmember_mean = np.mean([s.loss for s in samples if not s.is_member])
        assert member_mean < nonmember_mean


class TestScore:
    def test_hand_counts(self):
        pred = np.array([True, True])
        truth = np.array([True, False])
        precision, recall, f1, tp, fp, tn, fn = _score(pred, truth)
        assert (tp, fp, tn, fn) == (1, 1, 0, 0)
        assert precision == pytest.approx(0.5)
        assert recall == pytest.approx(1.0)
        assert f1 == pytest.approx(2 / 3)

    def test_no_positive_predictions(self):
        pred = np.array([False, False])
        truth = np.array([True, False])
        precision, recall, f1, *_ = _score(pred, truth)
        assert (precision, recall, f1) == (0.0, 0.0, 0.0)

    def test_bounds_on_random_inputs(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            pred = rng.integers(0, 2, size=n).astype(bool)
            truth = rng.integers(0, 2, size=n).astype(bool)
            precision, recall, f1, tp, fp, tn, fn = _score(pred, truth)
            assert 0.0 <= precision <= 1.0
            assert 0.0 <= recall <= 1.0
            assert 0.0 <= f1 <= 1.0
            assert tp + fp + tn + fn == n


class TestFitAndScore:
    def test_separable_losses_perfect_f1(self, rng):
        members = rng.uniform(0.0, 0.1, size=40)
        nonmembers = rng.uniform(5.0, 6.0, size=40)
        report = fit_and_score(samples_from(members, nonmembers))
        assert report.f1 == 1.0
        assert report.precision == 1.0 and report.recall == 1.0
        # member iff loss < t: t sits above every member loss, at or below
        # the smallest nonmember calibration loss.
        assert 0.1 < report.threshold <= 6.0

    def test_no_signal_lands_at_predict_all(self, rng):
        # iid losses for both classes: predicting everything member gives
        # recall 1 and precision 1/2, so F1 sits near 2/3.
        losses = rng.uniform(0.5, 1.5, size=200)
        report = fit_and_score(samples_from(losses[:100], losses[100:]))
        assert report.f1 == pytest.approx(2 / 3, abs=0.1)

    def test_monotone_transform_invariance(self, rng):
        members = rng.normal(1.0, 0.4, size=30).clip(min=0.01)
        nonmembers = rng.normal(1.6, 0.4, size=30).clip(min=0.01)
        base = fit_and_score(samples_from(members, nonmembers))
        warped = fit_and_score(
            samples_from(2.0 * members + 1.0, 2.0 * nonmembers + 1.0)
        )
        assert warped.f1 == pytest.approx(base.f1)
        assert warped.precision == pytest.approx(base.precision)
        assert warped.recall == pytest.approx(base.recall)
        assert (warped.tp, warped.fp, warped.tn, warped.fn) == (
            base.tp, base.fp, base.tn, base.fn,
        )

    def test_split_seed_changes_split(self, rng):
        members = rng.normal(0.8, 0.5, size=30).clip(min=0.01)
        nonmembers = rng.normal(1.2, 0.5, size=30).clip(min=0.01)
        samples = samples_from(members, nonmembers)
        a = fit_and_score(samples, split_seed=0)
        b = fit_and_score(samples, split_seed=0)
        assert a == b

    def test_too_few_per_class_rejected(self):
        with pytest.raises(ValueError, match="at least two"):
            fit_and_score(samples_from([0.1], [0.5, 0.6, 0.7]))
        with pytest.raises(ValueError, match="at least two"):
            fit_and_score(samples_from([0.1, 0.2, 0.3], [0.5]))


class TestEffectiveness:
    def test_identical_models_zero_delta(self, overfit_setup):
        trained, _, train, heldout = overfit_setup
        f1_u, f1_s, delta = unlearning_effectiveness(trained, trained, train, heldout)
        assert f1_u == f1_s
        assert delta == 0.0

    def test_memorizing_model_leaks_more_than_scratch(self, overfit_setup):
        trained, start, train, heldout = overfit_setup
        # "Scratch" here never saw the members: the untrained init.
        f1_u, f1_s, delta = unlearning_effectiveness(trained, start, train, heldout)
        assert delta > 0.0
        assert f1_u > f1_s

    def test_dim_mismatch_rejected(self, overfit_setup):
        trained, _, train, heldout = overfit_setup
        other = ParamVector(np.zeros(3, dtype=np.float32), (("w", (3,)),))
        with pytest.raises(ValueError, match="dimension"):
            unlearning_effectiveness(trained, other, train, heldout)

    def test_scores_in_unit_interval(self, overfit_setup):
        trained, start, train, heldout = overfit_setup
        f1_u, f1_s, delta = unlearning_effectiveness(trained, start, train, heldout)
        assert 0.0 <= f1_u <= 1.0
        assert 0.0 <= f1_s <= 1.0
        assert -1.0 <= delta <= 1.0


class TestBalance:
    def test_subsamples_to_smaller_side(self, overfit_setup):
        _, _, train, heldout = overfit_setup
        small = train.subset(np.arange(10))
        a, b = _balance(small, heldout, seed=0)
        assert len(a) == len(b) == 10
        # The already-small side comes back untouched.
        assert np.array_equal(a.features, small.features)

    def test_deterministic_by_seed(self, overfit_setup):
        _, _, train, heldout = overfit_setup
        small = train.subset(np.arange(12))
        _, b1 = _balance(small, heldout, seed=4)
        _, b2 = _balance(small, heldout, seed=4)
        assert np.array_equal(b1.features, b2.features)

    def test_empty_rejected(self, overfit_setup):
        _, _, train, _ = overfit_setup
        empty = train.subset(np.array([], dtype=int))
        with pytest.raises(ValueError, match="non-empty"):
            _balance(empty, train, seed=0)
