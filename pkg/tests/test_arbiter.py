import numpy as np
import pytest

from sevarb.arbiter import (
    PRESETS,
    ArbiterModel,
    ArbitrationOutcome,
    FeatureConfig,
    OutcomeSource,
    arbitrate,
    assemble_features,
    disagreement_mask,
    fit_arbiter,
    run_ablation,
    trust_training_mask,
)
from sevarb.core import ProbTriple, SeverityLabel, ValidationError, entropy


def triple(a, b, c):
    return ProbTriple.from_values(a, b, c)


def separable_trust_set(n=1000, margin=0.5, seed=0, n_features=2):
    """Points with |w*.x| >= margin; label = side of the hyperplane."""
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(n_features)
    w_star /= np.linalg.norm(w_star)
    xs, ys = [], []
    while len(xs) < n:
        x = rng.standard_normal(n_features)
        z = float(w_star @ x)
        if abs(z) >= margin:
            xs.append(x)
            ys.append(1.0 if z > 0 else 0.0)
    return np.array(xs), np.array(ys)


class TestFeatureAssembly:
    def test_conf_only_two_vector(self):
        x = assemble_features(triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3), None, PRESETS["conf"])
        assert x.shape == (2,)
        assert x[0] == pytest.approx(0.7, abs=1e-9)
        assert x[1] == pytest.approx(0.6, abs=1e-9)

    def test_probe_only_four_vector(self):
        probes = np.array([0.1, 0.2, 0.3, 0.4])
        x = assemble_features(triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3), probes, PRESETS["probe_only"])
        np.testing.assert_allclose(x, probes)

    def test_full_eight_vector_order(self):
        pa, pb = triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3)
        probes = np.array([0.1, 0.2, 0.3, 0.4])
        x = assemble_features(pa, pb, probes, PRESETS["conf+unc+probe"])
        assert x.shape == (8,)
        assert x[0] == pytest.approx(0.7, abs=1e-9)
        assert x[2] == pytest.approx(entropy(pa), abs=1e-12)
        assert x[3] == pytest.approx(entropy(pb), abs=1e-12)
        np.testing.assert_allclose(x[4:], probes)

    def test_probes_required_when_enabled(self):
        with pytest.raises(ValidationError, match="probes"):
            assemble_features(triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3), None, PRESETS["probe_only"])

    def test_at_least_one_family(self):
        with pytest.raises(ValidationError):
            FeatureConfig(False, False, False, 0.5)

    def test_preset_thresholds(self):
        assert PRESETS["conf"].tau_decision == 0.35
        assert PRESETS["conf+unc"].tau_decision == 0.40
        assert PRESETS["conf+unc+probe"].tau_decision == 0.45
        assert PRESETS["probe_only"].tau_decision == 0.50


class TestFit:
    def test_separable_heldout_accuracy(self):
        x, y = separable_trust_set(n=1000, margin=0.5, seed=1)
        cfg = FeatureConfig(True, False, False, 0.5)
        model = fit_arbiter(x[:500], y[:500], cfg)
        scores = np.array([model.score(row) for row in x[500:]])
        acc = float(np.mean((scores >= 0.5) == (y[500:] == 1.0)))
        assert acc >= 0.95
        assert model.final_grad_norm < 1e-8

    def test_noise_features_give_near_half_scores(self):
        cfg = FeatureConfig(True, False, False, 0.5)
        mean_scores = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((200, 2))
            y = np.array([0.0, 1.0] * 100)  # balanced, independent of x
            model = fit_arbiter(x, y, cfg, seed=seed)
            mean_scores.append(np.mean([model.score(row) for row in x]))
        assert abs(np.mean(mean_scores) - 0.5) < 0.05

    def test_more_regularization_never_grows_weights(self):
        x, y = separable_trust_set(n=300, margin=0.2, seed=3)
        cfg = FeatureConfig(True, False, False, 0.5)
        prev = None
        for reg in [1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 3.2e-2]:
            model = fit_arbiter(x, y, cfg, reg_l2=reg)
            norm = float(np.linalg.norm(model.weights))
            if prev is not None:
                assert norm <= prev + 1e-9
            prev = norm

    def test_degenerate_labels_rejected(self):
        x = np.random.default_rng(0).standard_normal((10, 2))
        cfg = FeatureConfig(True, False, False, 0.5)
        with pytest.raises(ValidationError, match="degenerate arbitration labels"):
            fit_arbiter(x, np.ones(10), cfg)

    def test_empty_set_rejected(self):
        cfg = FeatureConfig(True, False, False, 0.5)
        with pytest.raises(ValidationError):
            fit_arbiter(np.zeros((0, 2)), np.zeros(0), cfg)

    def test_zero_variance_feature_dropped(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((100, 2))
        x[:, 1] = 0.77  # constant
        y = (x[:, 0] > 0).astype(float)
        cfg = FeatureConfig(True, False, False, 0.5)
        model = fit_arbiter(x, y, cfg)
        assert model.dropped_features == ("conf_b",)
        assert model.feature_names == ("conf_a",)
        assert len(model.weights) == 1

    def test_convergence_and_monotone_descent(self):
        # convex objective: the fit must hit the gradient tolerance
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((150, 4))
            logits = x @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.3
            y = (rng.uniform(size=150) < 1 / (1 + np.exp(-logits))).astype(float)
            if len(np.unique(y)) < 2:
                continue
            cfg = FeatureConfig(True, True, False, 0.5)
            model = fit_arbiter(x, y, cfg)
            assert model.final_grad_norm < 1e-8
            assert model.n_iterations <= 5000

    def test_affine_rescaling_invariance(self):
        # scaling a raw feature consistently at fit and inference changes nothing
        x, y = separable_trust_set(n=400, margin=0.3, seed=6)
        cfg = FeatureConfig(True, False, False, 0.5)
        m1 = fit_arbiter(x, y, cfg)
        scale = np.array([7.0, 0.1])
        shift = np.array([3.0, -2.0])
        m2 = fit_arbiter(x * scale + shift, y, cfg)
        for row in x[:50]:
            assert m1.score(row) == pytest.approx(m2.score(row * scale + shift), abs=1e-6)

    def test_class_balancing_flag(self):
        rng = np.random.default_rng(7)
        x = np.vstack([rng.normal(1, 1, (180, 1)), rng.normal(-1, 1, (20, 1))])
        y = np.array([1.0] * 180 + [0.0] * 20)
        cfg = FeatureConfig(True, False, False, 0.5)
        x2 = np.hstack([x, rng.standard_normal((200, 1))])
        plain = fit_arbiter(x2, y, cfg, balance_classes=False)
        balanced = fit_arbiter(x2, y, cfg, balance_classes=True)
        # balancing pulls the intercept toward even odds
        assert abs(balanced.bias) < abs(plain.bias)


class TestArbitrate:
    def _model(self, cfg=None, weights=None, bias=0.0):
        cfg = cfg or PRESETS["conf"]
        n = len(cfg.active_feature_names())
        return ArbiterModel(
            weights=np.array(weights if weights is not None else [1.0] * n),
            bias=bias,
            feature_means=np.zeros(n),
            feature_stds=np.ones(n),
            feature_names=cfg.active_feature_names(),
            dropped_features=(),
            config=cfg,
        )

    def test_agreement_pass_through(self):
        model = self._model()
        out = arbitrate(triple(0.2, 0.5, 0.3), triple(0.1, 0.8, 0.1), None, model, "s1")
        assert out.final is SeverityLabel.MODERATE
        assert out.source is OutcomeSource.AGREEMENT
        assert out.score is None

    def test_agreement_ignores_weights(self):
        rng = np.random.default_rng(8)
        pa, pb = triple(0.2, 0.5, 0.3), triple(0.1, 0.8, 0.1)
        finals = set()
        for _ in range(10):
            model = self._model(weights=rng.standard_normal(2), bias=float(rng.standard_normal()))
            finals.add(arbitrate(pa, pb, None, model).final)
        assert finals == {SeverityLabel.MODERATE}

    def test_high_score_trusts_a(self):
        cfg = FeatureConfig(True, False, False, 0.35)
        model = self._model(cfg, weights=[0.0, 0.0], bias=10.0)  # score ~ 1
        out = arbitrate(triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3), None, model, "s2")
        assert out.final is SeverityLabel.MILD
        assert out.source is OutcomeSource.ARBITER_A
        assert out.score > 0.9

    def test_threshold_extremes(self):
        pa, pb = triple(0.7, 0.2, 0.1), triple(0.1, 0.6, 0.3)
        always_a = self._model(FeatureConfig(True, False, False, 0.0))
        assert arbitrate(pa, pb, None, always_a).source is OutcomeSource.ARBITER_A
        always_b = self._model(FeatureConfig(True, False, False, 1.0), weights=[0.0, 0.0], bias=0.0)
        # sigmoid(0) = 0.5 < 1.0
        assert arbitrate(pa, pb, None, always_b).source is OutcomeSource.ARBITER_B

    def test_closed_world(self):
        rng = np.random.default_rng(9)
        model = self._model()
        for _ in range(50):
            raw = rng.dirichlet(np.ones(3), size=2)
            pa, pb = ProbTriple.from_array(raw[0]), ProbTriple.from_array(raw[1])
            out = arbitrate(pa, pb, None, model)
            assert out.final in {
                SeverityLabel(int(np.argmax(raw[0]))),
                SeverityLabel(int(np.argmax(raw[1]))),
            }

    def test_outcome_invariant(self):
        with pytest.raises(ValidationError):
            ArbitrationOutcome("x", SeverityLabel.MILD, OutcomeSource.AGREEMENT, score=0.5)
        with pytest.raises(ValidationError):
            ArbitrationOutcome("x", SeverityLabel.MILD, OutcomeSource.ARBITER_A, score=None)

    def test_model_json_round_trip(self, tmp_path):
        x, y = separable_trust_set(n=200, margin=0.4, seed=10)
        model = fit_arbiter(x, y, FeatureConfig(True, False, False, 0.35))
        path = tmp_path / "arbiter.json"
        model.save(path)
        back = ArbiterModel.load(path)
        assert np.array_equal(back.weights, model.weights)
        assert back.config == model.config
        for row in x[:20]:
            assert back.score(row) == model.score(row)


def synthetic_disagreement_setup(n=600, seed=0, conf_informative=True):
    """OOF-style predictions where model A's confidence encodes correctness
    (when conf_informative) and probe features are pure noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, n)
    preds_a = np.zeros((n, 3))
    preds_b = np.zeros((n, 3))
    a_correct = rng.uniform(size=n) < 0.5
    for i in range(n):
        wrong = (labels[i] + 1 + rng.integers(0, 2)) % 3
        if a_correct[i]:
            # A right and confident; B wrong with moderate confidence
            pa_class, pa_conf = labels[i], 0.9 if conf_informative else rng.uniform(0.4, 0.95)
            pb_class, pb_conf = wrong, 0.5
        else:
            # A wrong with low confidence; B right
            pa_class, pa_conf = wrong, 0.4 if conf_informative else rng.uniform(0.4, 0.95)
            pb_class, pb_conf = labels[i], 0.5
        rest_a = (1 - pa_conf) / 2
        rest_b = (1 - pb_conf) / 2
        preds_a[i] = rest_a
        preds_a[i, pa_class] = pa_conf
        preds_b[i] = rest_b
        preds_b[i, pb_class] = pb_conf
    probes = rng.standard_normal((n, 4)) * 0.1
    fold_of = np.arange(n) % 3
    return labels, preds_a, preds_b, probes, fold_of


class TestAblation:
    def test_four_preset_table(self):
        labels, pa, pb, probes, folds = synthetic_disagreement_setup()
        table = run_ablation(labels, pa, pb, probes, folds)
        assert len(table.rows) == 4
        assert [r.setting for r in table.rows] == list(PRESETS)
        for r in table.rows:
            assert 0.0 <= r.accuracy <= 1.0
            assert 0.0 <= r.macro_f1 <= 1.0

    def test_informative_confidence_beats_noise_probes(self):
        labels, pa, pb, probes, folds = synthetic_disagreement_setup(n=900, seed=4)
        table = run_ablation(labels, pa, pb, probes, folds)
        by = {r.setting: r for r in table.rows}
        assert by["conf"].accuracy > by["probe_only"].accuracy
        assert by["conf"].macro_f1 > by["probe_only"].macro_f1

    def test_empty_preset_list(self):
        labels, pa, pb, probes, folds = synthetic_disagreement_setup(n=100, seed=5)
        table = run_ablation(labels, pa, pb, probes, folds, presets={})
        assert table.rows == [] and table.skipped == []

    def test_fold_without_disagreements_skips(self):
        labels, pa, pb, probes, folds = synthetic_disagreement_setup(n=90, seed=6)
        # force agreement inside fold 2 by copying predictions
        in2 = folds == 2
        pb[in2] = pa[in2]
        table = run_ablation(labels, pa, pb, probes, folds, presets={"conf": PRESETS["conf"]})
        assert table.rows == []
        assert table.skipped and table.skipped[0][0] == "conf"

    def test_text_rendering(self):
        labels, pa, pb, probes, folds = synthetic_disagreement_setup(n=300, seed=7)
        table = run_ablation(labels, pa, pb, probes, folds)
        txt = table.to_text()
        lines = txt.strip().split("\n")
        assert lines[0].split() == ["Setting", "Features", "Accuracy", "Macro-F1"]
        assert len(lines) == 5


class TestTrustSetHelpers:
    def test_masks(self):
        labels = np.array([0, 1, 2, 0])
        pa = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])
        pb = np.array([[0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
        dis = disagreement_mask(pa, pb)
        assert dis.tolist() == [True, False, True, True]
        mask, y = trust_training_mask(labels, pa, pb)
        # row 0: A correct, B wrong -> trust A (1)
        # row 2: A wrong, B correct -> trust B (0)
        # row 3: A wrong, B correct -> trust B (0)
        assert mask.tolist() == [True, False, True, True]
        assert y.tolist() == [1.0, 0.0, 0.0]
