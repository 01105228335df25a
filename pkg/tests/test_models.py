import numpy as np
import pytest

from fmrnn.errors import ConfigMismatch, KindMismatch, MalformedCheckpoint, ShapeError, VersionMismatch
from fmrnn.featmap import ForecasterModel
from fmrnn.layers import disc_loss, disc_loss_grads, softmax_cross_entropy, softmax_cross_entropy_grad
from fmrnn.models import (
    CHECKPOINT_MAGIC, ClassifierModel, DiscriminatorModel, classify_frame, discriminate,
    load_model, read_checkpoint_header, save_model,
)
from fmrnn.numcore import grad_check, make_rng


class TestClassifier:
    def test_symmetric_model_is_uniform(self):
        model = ClassifierModel(5, 3, widths=(4, 3), n_kernels=2)
        model.store["rbf_out.alpha"] = np.full((2, 3), 0.7)
        np.testing.assert_allclose(classify_frame(np.ones(5), model), 1 / 3, rtol=1e-14)

    def test_default_widths(self):
        model = ClassifierModel(2048, 5)
        assert model.trunk.widths == [2048, 256, 128]
        assert model.rbf_out.n_kernels == 256 and model.rbf_out.in_dim == 128
        model.init(make_rng(0))
        p = classify_frame(make_rng(1).standard_normal(2048), model)
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_dimension_mismatch(self):
        model = ClassifierModel(5, 3, widths=(4, 3), n_kernels=2)
        with pytest.raises(ShapeError):
            classify_frame(np.ones(6), model)

    def test_needs_two_classes(self):
        with pytest.raises(ShapeError):
            ClassifierModel(5, 1)

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check(self, seed):
        rng = make_rng([seed, 5])
        model = ClassifierModel(6, 3, widths=(8, 5), n_kernels=7).init(rng)
        X = rng.standard_normal((4, 6))
        y = rng.integers(0, 3, 4)

        def f(store):
            logits, cache = model.logits(X)
            loss, probs = softmax_cross_entropy(logits, y)
            model.backward(softmax_cross_entropy_grad(probs, y), cache)
            return loss

        assert grad_check(f, model.store, 1e-5) < 1e-4

    def test_argmax_invariant_to_logit_shift(self):
        model = ClassifierModel(6, 4, widths=(8, 5), n_kernels=7).init(make_rng(3))
        X = make_rng(4).standard_normal((20, 6))
        logits, _ = model.logits(X)
        np.testing.assert_array_equal(np.argmax(logits + 3.5, 1), np.argmax(logits, 1))


class TestDiscriminator:
    def test_zero_weights_half(self):
        assert discriminate(np.ones(4), DiscriminatorModel(4)) == 0.5

    def test_open_interval(self):
        model = DiscriminatorModel(4).init(make_rng(0))
        X = 100.0 * make_rng(1).standard_normal((10 ** 4, 4))
        p, _ = model.forward(X)
        assert np.all(p > 0) and np.all(p < 1)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            discriminate(np.ones(5), DiscriminatorModel(4))

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check_through_disc_loss(self, seed):
        rng = make_rng([seed, 6])
        model = DiscriminatorModel(4, widths=(6, 5)).init(rng)
        real = rng.standard_normal((3, 4))
        fake = rng.standard_normal((3, 4))

        def f(store):
            pr, cr = model.forward(real)
            pf, cf = model.forward(fake)
            gr, gf = disc_loss_grads(pr, pf)
            model.backward(gr / 3, cr)
            model.backward(gf / 3, cf)
            return float(disc_loss(pr, pf).mean())

        assert grad_check(f, model.store, 1e-5) < 1e-4


@pytest.fixture(params=["forecaster", "classifier", "discriminator"])
def any_model(request):
    rng = make_rng(9)
    if request.param == "forecaster":
        return ForecasterModel(8, 4, 2, readout="rbf").init(rng)
    if request.param == "classifier":
        return ClassifierModel(8, 3, widths=(6, 4), n_kernels=5).init(rng)
    return DiscriminatorModel(4).init(rng)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, any_model):
        path = tmp_path / "m.ckpt"
        save_model(any_model, path)
        loaded = load_model(path)
        assert loaded.config() == any_model.config()
        for name, arr in any_model.store.items():
            assert loaded.store[name].tobytes() == arr.tobytes()
        save_model(loaded, tmp_path / "again.ckpt")
        assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()

    def test_truncated(self, tmp_path, any_model):
        path = tmp_path / "m.ckpt"
        save_model(any_model, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(MalformedCheckpoint, match="malformed checkpoint"):
            load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT\n{}\n")
        with pytest.raises(MalformedCheckpoint):
            load_model(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(CHECKPOINT_MAGIC + b"{not json\n")
        with pytest.raises(MalformedCheckpoint):
            read_checkpoint_header(path)

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_model(ClassifierModel(8, 3, widths=(6, 4), n_kernels=5), path)
        with pytest.raises(KindMismatch):
            load_model(path, kind="forecaster")

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "d.ckpt"
        save_model(DiscriminatorModel(4), path)
        raw = path.read_bytes().replace(b'"version": 1', b'"version": 99', 1)
        path.write_bytes(raw)
        with pytest.raises(VersionMismatch):
            load_model(path)

    def test_config_mismatch(self, tmp_path):
        path = tmp_path / "f.ckpt"
        save_model(ForecasterModel(8, 4, 2), path)
        with pytest.raises(ConfigMismatch):
            load_model(path, kind="forecaster", require={"D": 8})
        assert load_model(path, require={"D": 4}).plan.D == 4

    def test_errors_are_distinct(self):
        assert len({MalformedCheckpoint, KindMismatch, VersionMismatch, ConfigMismatch}) == 4
        assert not issubclass(KindMismatch, MalformedCheckpoint)
