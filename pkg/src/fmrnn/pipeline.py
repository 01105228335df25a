"""Anticipation inference: observe a prefix, roll the forecaster forward,
classify every frame and pool the per-frame probabilities into one label."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .featmap import ForecasterModel, generate_future
from .layers import softmax

POOLING = ("average", "max", "none")


@dataclass
class AnticipationConfig:
    observe_fraction: float = 0.2
    predict_fraction: float = 0.5
    pooling: str = "max"
    k: int = 1

    def __post_init__(self):
        if not 0 < self.observe_fraction <= 1:
            raise ConfigError("observe_fraction must lie in (0, 1]")
        if not 0 <= self.predict_fraction < 1:
            raise ConfigError("predict_fraction must lie in [0, 1)")
        if self.pooling not in POOLING:
            raise ConfigError(f"pooling must be one of {POOLING}")

    def frame_counts(self, T: int) -> tuple[int, int]:
        # small epsilon keeps e.g. 0.2 * 50 from landing on 9.999...
        t_obs = max(1, math.floor(self.observe_fraction * T + 1e-9))
        t_gen = math.floor(self.predict_fraction * T + 1e-9)
        return t_obs, t_gen


@dataclass
class PredictionTrace:
    probs: np.ndarray          # (T_obs + T_gen, C)
    generated: np.ndarray      # bool flag per row
    pooled: np.ndarray
    label: int
    pooling: str
    T: int
    T_obs: int
    T_gen: int


def pool_predictions(rows, method: str = "average"):
    """Combine per-frame probability rows into ``(pooled vector, label)``.

    ``average`` and ``max`` take the elementwise mean / maximum over frames;
    ``none`` uses the last frame alone.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] == 0 or rows.size == 0:
        raise ValueError("cannot pool an empty set of predictions")
    if method == "average":
        pooled = rows.mean(axis=0)
    elif method == "max":
        pooled = rows.max(axis=0)
    elif method == "none":
        pooled = rows[-1].copy()
    else:
        raise ConfigError(f"unknown pooling {method!r}")
    return pooled, int(np.argmax(pooled))


def anticipate(video, forecaster: ForecasterModel | None, classifier,
               cfg: AnticipationConfig) -> PredictionTrace:
    frames = video.frames
    T, d = frames.shape
    if classifier.d != d:
        raise ShapeError(f"video {video.video_id}: width {d} != classifier d={classifier.d}")
    t_obs, t_gen = cfg.frame_counts(T)
    observed = frames[:t_obs]
    if t_gen > 0:
        if forecaster is None:
            raise ConfigError("a forecaster is required when predict_fraction > 0")
        if forecaster.d != d:
            raise ShapeError(f"video {video.video_id}: width {d} != forecaster d={forecaster.d}")
        feats = generate_future(observed, forecaster, t_gen)
    else:
        feats = observed
    probs = softmax(classifier.logits(feats)[0])
    pooled, label = pool_predictions(probs, cfg.pooling)
    flags = np.zeros(len(feats), dtype=bool)
    flags[t_obs:] = True
    return PredictionTrace(probs, flags, pooled, label, cfg.pooling, T, t_obs, t_gen)


def evaluate(split, forecaster, classifier, cfg: AnticipationConfig, workers: int = 1):
    """Fraction of videos whose pooled label is correct, plus per-video traces.

    With ``workers > 1`` videos are processed on a thread pool; traces come
    back in split order either way.
    """
    split = list(split)
    if not split:
        raise ValueError("evaluation split is empty")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            traces = list(pool.map(lambda v: anticipate(v, forecaster, classifier, cfg), split))
    else:
        traces = [anticipate(v, forecaster, classifier, cfg) for v in split]
    correct = sum(int(tr.label == v.label) for tr, v in zip(traces, split))
    return correct / len(split), traces


def accuracy_vs_predict_fraction(split, forecaster, classifier, fractions,
                                 observe_fraction: float = 0.2, pooling: str = "none"):
    """Accuracy at each prediction percentage, sharing one rollout per video."""
    split = list(split)
    fractions = list(fractions)
    results = {p: 0 for p in fractions}
    for video in split:
        T = video.T
        base = AnticipationConfig(observe_fraction, max(fractions), pooling)
        t_obs, t_max = base.frame_counts(T)
        feats = video.frames[:t_obs]
        if t_max:
            feats = generate_future(feats, forecaster, t_max)
        probs = softmax(classifier.logits(feats)[0])
        for p in fractions:
            _, t_gen = AnticipationConfig(observe_fraction, p, pooling).frame_counts(T)
            _, label = pool_predictions(probs[:t_obs + t_gen], pooling)
            results[p] += int(label == video.label)
    return [(p, results[p] / len(split)) for p in fractions]
