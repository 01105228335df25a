"""Training loops for the forecaster (L2 or L2 + adversarial) and the classifier.

Batches are drawn from a permutation that depends only on ``(seed, epoch)``,
and every model is initialised from a seed-derived stream, so a run is fully
determined by its :class:`TrainConfig`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DatasetError, NonFiniteError
from .featmap import ForecasterModel
from .layers import (Linear, disc_loss, disc_loss_grads, gen_adv_loss, gen_adv_loss_grad,
                     softmax_cross_entropy, softmax_cross_entropy_grad)
from .models import ClassifierModel, DiscriminatorModel
from .numcore import OptimState, ParamStore, make_rng, sgd_step


@dataclass
class TrainConfig:
    w_l2: float = 10.0
    w_adv: float = 1.0
    base_lr: float = 0.001
    decay_rate: float = 0.9
    epochs: int = 10
    batch_forecaster: int = 128
    batch_classifier: int = 256
    seed: int = 0
    mode: str = "flattened"
    readout: str = "linear"
    D: int = 128
    S: int = 64
    H: int = 4
    n_kernels: int = 6
    k: int = 1
    steps_per_epoch: int | None = None
    classifier_lr: float | None = None
    classifier_epochs: int | None = None
    classifier_kernels: int = 256
    classifier_widths: tuple = (256, 128)
    disc_widths: tuple = (64, 32)

    def __post_init__(self):
        if min(self.w_l2, self.w_adv) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.base_lr <= 0 or (self.classifier_lr is not None and self.classifier_lr <= 0):
            raise ConfigError("learning rates must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ConfigError("decay_rate must lie in (0, 1]")
        if self.epochs < 1 or min(self.batch_forecaster, self.batch_classifier) < 1:
            raise ConfigError("epochs and batch sizes must be >= 1")
        self.classifier_widths = tuple(self.classifier_widths)
        self.disc_widths = tuple(self.disc_widths)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["classifier_widths"] = list(self.classifier_widths)
        out["disc_widths"] = list(self.disc_widths)
        return out


@dataclass
class LossHistory:
    records: list = field(default_factory=list)

    def log(self, **values) -> None:
        for key, val in values.items():
            if isinstance(val, float) and not math.isfinite(val):
                raise NonFiniteError(f"non-finite {key} at step {values.get('step')}")
        self.records.append(values)

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records if key in r])

    def epoch_means(self, key: str) -> list:
        epochs = sorted({r["epoch"] for r in self.records})
        return [float(np.mean([r[key] for r in self.records if r["epoch"] == e]))
                for e in epochs]

    def __len__(self) -> int:
        return len(self.records)


def _epoch_order(seed: int, epoch: int, n: int, stream: int) -> np.ndarray:
    return make_rng([seed, stream, epoch]).permutation(n)


def _unit_bank(model: ForecasterModel, dataset):
    """Stack every unit sequence of every video into one zero-padded array."""
    seqs, lengths = [], []
    for video in dataset:
        u = model.units(video.frames[None])
        seqs.append(u)
        lengths += [video.T] * u.shape[0]
    Tmax = max(lengths)
    bank = np.zeros((len(lengths), Tmax, model.unit_dim))
    row = 0
    for u in seqs:
        bank[row:row + u.shape[0], :u.shape[1]] = u
        row += u.shape[0]
    return bank, np.asarray(lengths)


def train_forecaster(dataset, config: TrainConfig, log_every: int = 0):
    """Fit a forecaster to every (history, frame t + k) pair of the dataset.

    One batch is ``batch_forecaster`` unit sequences (one sub-vector track of
    one video each); every valid t of those sequences contributes a pair.
    With ``w_adv > 0`` each batch runs one discriminator update followed by
    one generator update.

    Returns ``(forecaster, discriminator or None, LossHistory)``.
    """
    dataset = list(dataset)
    if not dataset:
        raise DatasetError("empty training set")
    short = [v.video_id for v in dataset if v.T < config.k + 1]
    if short:
        raise DatasetError(f"{len(short)} sequences shorter than k+1={config.k + 1} frames, "
                           f"e.g. {short[0]}")
    d = dataset[0].d
    model = ForecasterModel(d, config.D, config.S, mode=config.mode, readout=config.readout,
                            hidden=config.H, n_kernels=config.n_kernels, k=config.k)
    model.init(make_rng([config.seed, 10]))
    disc = None
    if config.w_adv > 0:
        if config.mode == "vanilla_lstm" and config.readout == "rbf":
            warnings.warn("vanilla LSTM + RBF with adversarial loss is known to be unstable",
                          RuntimeWarning, stacklevel=2)
        disc = DiscriminatorModel(model.unit_dim, widths=config.disc_widths)
        disc.init(make_rng([config.seed, 11]))

    bank, lengths = _unit_bank(model, dataset)
    k = config.k
    opt = OptimState(config.base_lr, config.decay_rate, 0)
    history = LossHistory()
    step = 0
    for epoch in range(config.epochs):
        opt.epoch = epoch
        order = _epoch_order(config.seed, epoch, len(bank), 100)
        batches = [order[i:i + config.batch_forecaster]
                   for i in range(0, len(order), config.batch_forecaster)]
        if config.steps_per_epoch is not None:
            batches = batches[:config.steps_per_epoch]
        for idx in batches:
            rec = _forecaster_step(model, disc, bank[idx, :lengths[idx].max()], lengths[idx],
                                   k, config, opt)
            history.log(epoch=epoch, step=step, **rec)
            step += 1
    return model, disc, history


def _forecaster_step(model, disc, X, lengths, k, config, opt):
    Y, cache = model.predict_units(X)
    L = X.shape[1]
    t = np.arange(L - k)
    valid = t[None, :] + k < lengths[:, None]                  # (B, L - k)
    pred = Y[:, :L - k][valid]                                  # (P, U)
    target = X[:, k:][valid]
    n_pairs, U = pred.shape
    err = pred - target
    l2 = float((err ** 2).sum() / (n_pairs * U))
    dpred = config.w_l2 * 2.0 * err / (n_pairs * U)
    rec = {"l2": l2}
    total = config.w_l2 * l2
    if disc is not None:
        p_real, c_real = disc.forward(target)
        p_fake, c_fake = disc.forward(pred)
        rec["disc"] = float(disc_loss(p_real, p_fake).mean())
        g_real, g_fake = disc_loss_grads(p_real, p_fake)
        disc.backward(g_real / n_pairs, c_real)
        disc.backward(g_fake / n_pairs, c_fake)
        sgd_step(disc.store, opt)

        p_fake, c_fake = disc.forward(pred)
        adv = float(gen_adv_loss(p_fake).mean())
        dpred = dpred + config.w_adv * disc.backward(gen_adv_loss_grad(p_fake) / n_pairs, c_fake)
        disc.store.zero_grad()
        rec["adv"] = adv
        total += config.w_adv * adv
    rec["total"] = total
    dY = np.zeros_like(Y)
    dY[:, :L - k][valid] = dpred
    model.backward_units(dY, cache)
    sgd_step(model.store, opt)
    return rec


def frames_and_labels(dataset):
    X = np.vstack([v.frames for v in dataset])
    y = np.concatenate([np.full(v.T, v.label, dtype=np.int64) for v in dataset])
    return X, y


def train_classifier(dataset, config: TrainConfig, n_classes: int | None = None):
    """Cross-entropy training on individual real frames.

    Returns ``(ClassifierModel, LossHistory)``; the history logs the batch
    loss and accuracy of every step.
    """
    dataset = list(dataset)
    if not dataset:
        raise DatasetError("empty training set")
    X, y = frames_and_labels(dataset)
    if len(np.unique(y)) < 2:
        raise DatasetError("classifier training needs at least two classes")
    n_classes = n_classes or int(y.max()) + 1
    model = ClassifierModel(X.shape[1], n_classes, widths=config.classifier_widths,
                            n_kernels=config.classifier_kernels)
    model.init(make_rng([config.seed, 20]))
    lr = config.classifier_lr or config.base_lr
    opt = OptimState(lr, config.decay_rate, 0)
    history = LossHistory()
    step = 0
    for epoch in range(config.classifier_epochs or config.epochs):
        opt.epoch = epoch
        order = _epoch_order(config.seed, epoch, len(y), 200)
        for i in range(0, len(order), config.batch_classifier):
            idx = order[i:i + config.batch_classifier]
            logits, cache = model.logits(X[idx])
            loss, probs = softmax_cross_entropy(logits, y[idx])
            model.backward(softmax_cross_entropy_grad(probs, y[idx]), cache)
            sgd_step(model.store, opt)
            acc = float(np.mean(probs.argmax(1) == y[idx]))
            history.log(epoch=epoch, step=step, loss=loss, acc=acc)
            step += 1
    return model, history


def bimodal_gan_probe(v1: float, v2: float, config: TrainConfig, steps: int = 2000,
                      batch: int = 64):
    """Train a constant-input generator on targets drawn from {v1, v2}.

    Runs once with L2 only and once with L2 + adversarial loss (weights from
    ``config``), and returns each run's mean distance from its generated
    samples over the final 10% of steps to the nearest of v1, v2.
    """
    if v1 == v2:
        raise ConfigError("the two modes must differ")
    modes = np.array([v1, v2], dtype=np.float64)

    def run(adversarial: bool) -> float:
        store = ParamStore()
        gen = Linear(store, "gen", 1, 1)
        gen.init(make_rng([config.seed, 30]))
        disc = None
        if adversarial:
            disc = DiscriminatorModel(1, widths=config.disc_widths)
            disc.init(make_rng([config.seed, 31]))
        rng = make_rng([config.seed, 32])
        opt = OptimState(config.base_lr, 1.0, 0)
        cond = np.ones((batch, 1))
        tail = []
        for s in range(steps):
            target = modes[rng.integers(0, 2, batch)][:, None]
            out, gc = gen.forward(cond)
            dout = config.w_l2 * 2.0 * (out - target) / batch
            if disc is not None:
                p_real, c_real = disc.forward(target)
                p_fake, c_fake = disc.forward(out)
                g_real, g_fake = disc_loss_grads(p_real, p_fake)
                disc.backward(g_real / batch, c_real)
                disc.backward(g_fake / batch, c_fake)
                sgd_step(disc.store, opt)
                p_fake, c_fake = disc.forward(out)
                dout = dout + config.w_adv * disc.backward(gen_adv_loss_grad(p_fake) / batch,
                                                           c_fake)
                disc.store.zero_grad()
            gen.backward(dout, gc)
            sgd_step(store, opt)
            if s >= steps - max(1, steps // 10):
                sample = gen.forward(np.ones((1, 1)))[0][0, 0]
                tail.append(np.min(np.abs(sample - modes)))
        return float(np.mean(tail))

    return run(False), run(True)
