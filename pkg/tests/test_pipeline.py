import numpy as np
import pytest

from fmrnn.data import FeatureSequence
from fmrnn.errors import ConfigError, ShapeError
from fmrnn.featmap import ForecasterModel, generate_future
from fmrnn.models import ClassifierModel, classify_frame
from fmrnn.numcore import make_rng
from fmrnn.pipeline import (
    AnticipationConfig, accuracy_vs_predict_fraction, anticipate, evaluate, pool_predictions,
)


class LabelReader:
    """Stand-in classifier that reads the class index off coordinate 0."""

    def __init__(self, d, n_classes, uniform=False):
        self.d, self.n_classes, self.uniform = d, n_classes, uniform

    def logits(self, X):
        X = np.atleast_2d(X)
        out = np.zeros((len(X), self.n_classes))
        if not self.uniform:
            out[np.arange(len(X)), np.rint(X[:, 0]).astype(int)] = 1000.0
        return out, None


def _videos(n, C, T=10, d=4):
    rng = make_rng(0)
    out = []
    for i in range(n):
        frames = rng.standard_normal((T, d)) * 0.01
        frames[:, 0] = i % C
        out.append(FeatureSequence(f"v{i}", i % C, frames))
    return out


def _brute_average(rows):
    out = []
    for c in range(len(rows[0])):
        total = 0.0
        for r in rows:
            total += r[c]
        out.append(total / len(rows))
    return out


def _brute_max(rows):
    return [max(r[c] for r in rows) for c in range(len(rows[0]))]


def _first_argmax(v):
    best = 0
    for i, x in enumerate(v):
        if x > v[best]:
            best = i
    return best


class TestPooling:
    def test_average_example(self):
        pooled, label = pool_predictions([[0.6, 0.4], [0.2, 0.8]], "average")
        np.testing.assert_allclose(pooled, [0.4, 0.6], rtol=1e-15)
        assert label == 1

    def test_methods_disagree(self):
        rows = [[0.95, 0.05], [0.3, 0.7], [0.3, 0.7], [0.3, 0.7]]
        pooled, label = pool_predictions(rows, "average")
        np.testing.assert_allclose(pooled, [0.4625, 0.5375], rtol=1e-14)
        assert label == 1
        pooled, label = pool_predictions(rows, "max")
        np.testing.assert_array_equal(pooled, [0.95, 0.7])
        assert label == 0

    @pytest.mark.parametrize("method", ["average", "max", "none"])
    def test_single_row(self, method):
        assert pool_predictions([[0.1, 0.7, 0.2]], method)[1] == 1

    def test_none_uses_last_row(self):
        assert pool_predictions([[0.9, 0.1], [0.4, 0.6]], "none")[1] == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            pool_predictions(np.zeros((0, 3)), "max")

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            pool_predictions([[1.0]], "median")

    def test_thousand_random_stacks(self):
        rng = make_rng(31)
        for _ in range(1000):
            n, C = int(rng.integers(1, 12)), int(rng.integers(2, 8))
            rows = rng.dirichlet(np.ones(C), size=n)
            avg, la = pool_predictions(rows, "average")
            mx, lm = pool_predictions(rows, "max")
            ref_avg = _brute_average(rows.tolist())
            ref_max = _brute_max(rows.tolist())
            np.testing.assert_allclose(avg, ref_avg, rtol=1e-15, atol=0)
            assert la == _first_argmax(avg)
            np.testing.assert_array_equal(mx, ref_max)
            assert lm == _first_argmax(ref_max)
            assert abs(avg.sum() - 1.0) <= 1e-12


class TestAnticipationConfig:
    def test_standard_protocol_counts(self):
        assert AnticipationConfig(0.2, 0.5).frame_counts(50) == (10, 25)

    def test_at_least_one_observed(self):
        assert AnticipationConfig(0.2, 0.0).frame_counts(3) == (1, 0)

    @pytest.mark.parametrize("kw", [dict(observe_fraction=0.0), dict(predict_fraction=1.0),
                                    dict(pooling="median")])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            AnticipationConfig(**kw)


@pytest.fixture(scope="module")
def small_models():
    forecaster = ForecasterModel(8, 4, 2).init(make_rng(1))
    classifier = ClassifierModel(8, 3, widths=(6, 5), n_kernels=4).init(make_rng(2))
    return forecaster, classifier


class TestAnticipate:
    def test_rows_and_flags(self, small_models):
        forecaster, classifier = small_models
        video = FeatureSequence("a", 0, make_rng(3).standard_normal((50, 8)))
        trace = anticipate(video, forecaster, classifier, AnticipationConfig(0.2, 0.5, "max"))
        assert (trace.T, trace.T_obs, trace.T_gen) == (50, 10, 25)
        assert trace.probs.shape == (35, 3)
        assert trace.generated.sum() == 25 and not trace.generated[:10].any()
        np.testing.assert_allclose(trace.probs.sum(1), 1.0, atol=1e-12)
        assert trace.label == int(np.argmax(trace.pooled))

    def test_generated_rows_match_rollout(self, small_models):
        forecaster, classifier = small_models
        frames = make_rng(4).standard_normal((20, 8))
        video = FeatureSequence("a", 0, frames.copy())
        trace = anticipate(video, forecaster, classifier, AnticipationConfig(0.5, 0.5, "average"))
        feats = generate_future(frames[:10], forecaster, 10)
        np.testing.assert_array_equal(trace.probs, classifier.predict_proba(feats))
        np.testing.assert_array_equal(video.frames, frames)
        assert abs(trace.pooled.sum() - 1.0) <= 1e-12

    def test_no_prediction_skips_forecaster(self, small_models):
        _, classifier = small_models
        video = FeatureSequence("a", 0, make_rng(5).standard_normal((10, 8)))
        trace = anticipate(video, None, classifier, AnticipationConfig(0.3, 0.0))
        assert trace.probs.shape[0] == 3 and trace.T_gen == 0

    def test_single_frame_reduces_to_classify_frame(self, small_models):
        _, classifier = small_models
        x = make_rng(6).standard_normal(8)
        trace = anticipate(FeatureSequence("a", 0, x[None]), None, classifier,
                           AnticipationConfig(1.0, 0.0, "none"))
        np.testing.assert_array_equal(trace.pooled, classify_frame(x, classifier))

    def test_width_mismatch(self, small_models):
        forecaster, classifier = small_models
        video = FeatureSequence("a", 0, np.zeros((10, 6)))
        with pytest.raises(ShapeError):
            anticipate(video, forecaster, classifier, AnticipationConfig())

    def test_horizon_above_one_cannot_roll_out(self, small_models):
        _, classifier = small_models
        forecaster = ForecasterModel(8, 4, 2, k=2)
        video = FeatureSequence("a", 0, np.zeros((10, 8)))
        with pytest.raises(ConfigError):
            anticipate(video, forecaster, classifier, AnticipationConfig(0.2, 0.5))


class TestEvaluate:
    def test_oracle_classifier(self):
        videos = _videos(12, 3)
        acc, traces = evaluate(videos, ForecasterModel(4, 4, 4), LabelReader(4, 3),
                               AnticipationConfig(0.5, 0.0, "max"))
        assert acc == 1.0 and len(traces) == 12

    def test_uniform_classifier(self):
        videos = _videos(400, 4)
        acc, _ = evaluate(videos, None, LabelReader(4, 4, uniform=True),
                          AnticipationConfig(0.5, 0.0, "average"))
        assert abs(acc - 0.25) <= 0.05

    def test_order_independent(self, small_models):
        forecaster, classifier = small_models
        rng = make_rng(7)
        videos = [FeatureSequence(f"v{i}", i % 3, rng.standard_normal((10, 8))) for i in range(9)]
        cfg = AnticipationConfig(0.2, 0.5, "max")
        a, _ = evaluate(videos, forecaster, classifier, cfg)
        b, _ = evaluate(videos[::-1], forecaster, classifier, cfg)
        assert a == b

    def test_parallel_matches_sequential(self, small_models):
        forecaster, classifier = small_models
        rng = make_rng(8)
        videos = [FeatureSequence(f"v{i}", i % 3, rng.standard_normal((10, 8))) for i in range(9)]
        cfg = AnticipationConfig(0.2, 0.5, "average")
        a, ta = evaluate(videos, forecaster, classifier, cfg)
        b, tb = evaluate(videos, forecaster, classifier, cfg, workers=4)
        assert a == b
        for x, y in zip(ta, tb):
            assert x.probs.tobytes() == y.probs.tobytes()

    def test_empty(self, small_models):
        with pytest.raises(ValueError):
            evaluate([], *small_models, AnticipationConfig())

    def test_sweep_matches_individual_runs(self, small_models):
        forecaster, classifier = small_models
        rng = make_rng(9)
        videos = [FeatureSequence(f"v{i}", i % 3, rng.standard_normal((20, 8))) for i in range(6)]
        fractions = [0.0, 0.1, 0.3, 0.5]
        curve = accuracy_vs_predict_fraction(videos, forecaster, classifier, fractions)
        for p, acc in curve:
            ref, _ = evaluate(videos, forecaster, classifier, AnticipationConfig(0.2, p, "none"))
            assert acc == ref
