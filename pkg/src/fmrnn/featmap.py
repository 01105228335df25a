"""Feature-mapping forecaster: segmentation, scalar flattening and rollout.

A d-dimensional frame feature is cut into sub-vectors of length ``D`` that
start every ``S`` coordinates.  One small LSTM with scalar input, shared by
every sub-vector, reads each sub-vector's history and predicts the
sub-vector ``k`` frames ahead; overlapping predictions are averaged back into
a d-vector.

Two baselines live behind the same interface: ``linear`` (a D x D matrix
applied to the latest sub-vector) and ``vanilla_lstm`` (an LSTM consuming
whole d-vectors).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SegmentationError, ShapeError
from .layers import LSTMCell, Linear, RBFLayer
from .numcore import ParamStore

MODES = ("flattened", "per_channel", "linear", "vanilla_lstm")
READOUTS = ("linear", "rbf")


@dataclass(frozen=True)
class SegmentationPlan:
    d: int
    D: int
    S: int
    segment_offsets: tuple
    overlap_count: np.ndarray = field(repr=False, compare=False)

    @property
    def n_segments(self) -> int:
        return len(self.segment_offsets)

    @property
    def index(self) -> np.ndarray:
        """(n_segments, D) array of the coordinates each segment covers."""
        return np.asarray(self.segment_offsets)[:, None] + np.arange(self.D)[None, :]

    def split(self, frames) -> np.ndarray:
        """(..., d) -> (..., n_segments, D)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[-1] != self.d:
            raise ShapeError(f"feature width {frames.shape[-1]} != d={self.d}")
        return frames[..., self.index]

    def merge(self, segments) -> np.ndarray:
        """(..., n_segments, D) -> (..., d) by averaging overlapping coordinates.

        When every copy covering a coordinate is bit-identical the copy itself
        is returned, so merging the true sub-vectors of ``x`` gives back ``x``
        exactly; elsewhere the value is sum / count.
        """
        segments = np.asarray(segments, dtype=np.float64)
        if segments.shape[-2:] != (self.n_segments, self.D):
            raise ShapeError(
                f"expected (..., {self.n_segments}, {self.D}) segments, got {segments.shape}")
        lead = segments.shape[:-2]
        total = np.zeros(lead + (self.d,))
        lo = np.full(lead + (self.d,), np.inf)
        hi = np.full(lead + (self.d,), -np.inf)
        for m, off in enumerate(self.segment_offsets):
            seg = segments[..., m, :]
            sl = slice(off, off + self.D)
            total[..., sl] += seg
            np.minimum(lo[..., sl], seg, out=lo[..., sl])
            np.maximum(hi[..., sl], seg, out=hi[..., sl])
        mean = total / self.overlap_count
        return np.where(lo == hi, lo, mean)


def plan_segments(d: int, D: int, S: int) -> SegmentationPlan:
    if not 1 <= D <= d:
        raise SegmentationError(f"feature step size D={D} must satisfy 1 <= D <= d={d}")
    if not 1 <= S <= D:
        raise SegmentationError(f"stride S={S} must satisfy 1 <= S <= D={D}")
    if (d - D) % S:
        raise SegmentationError(
            f"(d - D) = {d - D} is not a multiple of S={S}; "
            f"change D or S so the segments tile all {d} coordinates")
    offsets = tuple(range(0, d - D + 1, S))
    counts = np.zeros(d, dtype=np.int64)
    for off in offsets:
        counts[off:off + D] += 1
    return SegmentationPlan(d, D, S, offsets, counts)


def flatten_scalars(segment_sequence) -> np.ndarray:
    """(t, D) history -> length t*D scalar stream, frame by frame."""
    return np.asarray(segment_sequence, dtype=np.float64).reshape(-1)


def unflatten_scalars(scalars, D: int) -> np.ndarray:
    scalars = np.asarray(scalars, dtype=np.float64)
    if scalars.size % D:
        raise ShapeError(f"{scalars.size} scalars do not form rows of length {D}")
    return scalars.reshape(-1, D)


@dataclass
class ParamCount:
    exact: int
    cell: int
    readout: int
    approx_formula: int
    approx_formula_text: str


class ForecasterModel:
    """Predicts frame ``t + k`` from frames ``1..t``.

    Parameters
    ----------
    mode : {"flattened", "per_channel", "linear", "vanilla_lstm"}
        ``flattened`` runs the scalar LSTM over the whole time-major stream of
        a sub-vector's history; ``per_channel`` runs it separately over each
        coordinate's own time series.
    readout : {"linear", "rbf"}
        Map from hidden state to prediction (ignored by ``linear`` mode).
    """

    def __init__(self, d: int, D: int, S: int, mode: str = "flattened",
                 readout: str = "linear", hidden: int = 4, n_kernels: int = 6,
                 k: int = 1, store: ParamStore | None = None):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
        if readout not in READOUTS:
            raise ConfigError(f"unknown readout {readout!r}; choose from {READOUTS}")
        if k < 1:
            raise ConfigError("prediction horizon k must be >= 1")
        self.plan = plan_segments(d, D, S)
        self.mode = mode
        self.readout_kind = readout if mode != "linear" else "matrix"
        self.hidden = hidden
        self.n_kernels = n_kernels
        self.k = k
        self.store = store if store is not None else ParamStore()
        self.cell = None
        self.readout = None
        if mode == "linear":
            self.readout = Linear(self.store, "linear", D, D, bias=False)
        else:
            in_dim = d if mode == "vanilla_lstm" else 1
            out_dim = d if mode == "vanilla_lstm" else 1
            self.cell = LSTMCell(self.store, "cell", in_dim, hidden)
            if readout == "linear":
                self.readout = Linear(self.store, "readout", hidden, out_dim)
            else:
                self.readout = RBFLayer(self.store, "rbf", n_kernels, hidden, out_dim)

    @property
    def d(self) -> int:
        return self.plan.d

    @property
    def unit_dim(self) -> int:
        """Width of the vectors the model emits: D, or d for the vanilla LSTM."""
        return self.plan.d if self.mode == "vanilla_lstm" else self.plan.D

    def config(self) -> dict:
        return {"d": self.plan.d, "D": self.plan.D, "S": self.plan.S, "mode": self.mode,
                "readout": "rbf" if self.readout_kind == "rbf" else "linear",
                "hidden": self.hidden, "n_kernels": self.n_kernels, "k": self.k}

    def init(self, rng: np.random.Generator) -> "ForecasterModel":
        if self.cell is not None:
            self.cell.init(rng)
        self.readout.init(rng)
        return self

    # -- teacher-forced passes over unit sequences ---------------------------

    def units(self, frames) -> np.ndarray:
        """Cut videos (N, T, d) into the sequences the model consumes.

        Returns (N * n_segments, T, D) for segment modes (video-major) and the
        input unchanged for the vanilla LSTM.
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[-1] != self.d:
            raise ShapeError(f"expected (N, T, {self.d}) frames, got {frames.shape}")
        if self.mode == "vanilla_lstm":
            return frames
        seg = self.plan.split(frames)                       # (N, T, M, D)
        N, T, M, D = seg.shape
        return seg.transpose(0, 2, 1, 3).reshape(N * M, T, D)

    def predict_units(self, X):
        """Y[:, t] is the prediction of X[:, t + k] given X[:, :t + 1]."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[-1] != self.unit_dim:
            raise ShapeError(f"expected (N, T, {self.unit_dim}) units, got {X.shape}")
        N, T, U = X.shape
        if self.mode == "linear":
            Y, rc = self.readout.forward(X)
            return Y, (None, rc)
        if self.mode == "flattened":
            seq = X.reshape(N, T * U, 1)
        elif self.mode == "per_channel":
            seq = X.transpose(0, 2, 1).reshape(N * U, T, 1)
        else:
            seq = X
        hs, cc = self.cell.forward(seq)
        out, rc = self.readout.forward(hs)
        if self.mode == "flattened":
            Y = out.reshape(N, T, U)
        elif self.mode == "per_channel":
            Y = out.reshape(N, U, T).transpose(0, 2, 1)
        else:
            Y = out
        return Y, (cc, rc)

    def backward_units(self, dY, cache) -> None:
        cc, rc = cache
        N, T, U = dY.shape
        if self.mode == "linear":
            self.readout.backward(dY, rc)
            return
        if self.mode == "flattened":
            dout = dY.reshape(N, T * U, 1)
        elif self.mode == "per_channel":
            dout = dY.transpose(0, 2, 1).reshape(N * U, T, 1)
        else:
            dout = dY
        dhs = self.readout.backward(dout, rc)
        self.cell.backward(dhs, cc)


def _check_history(history, width):
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 2 or history.shape[0] < 1:
        raise ShapeError("history must be a (t, width) matrix with t >= 1")
    if history.shape[1] != width:
        raise ShapeError(f"history width {history.shape[1]} != {width}")
    return history


def forecast_subvector(history, model: ForecasterModel) -> np.ndarray:
    """Predict sub-vector ``t + k`` of one segment from its (t, D) history."""
    if model.mode not in ("flattened", "per_channel"):
        raise ConfigError("forecast_subvector needs a flattened or per_channel model")
    history = _check_history(history, model.plan.D)
    Y, _ = model.predict_units(history[None])
    return Y[0, -1]


def forecast_frame(history, model: ForecasterModel) -> np.ndarray:
    """Predict the full d-vector of frame ``t + k`` from a (t, d) history."""
    history = _check_history(history, model.d)
    if model.mode == "vanilla_lstm":
        Y, _ = model.predict_units(history[None])
        return Y[0, -1]
    if model.mode == "linear":
        last = model.plan.split(history[-1])                  # (M, D)
        preds, _ = model.readout.forward(last)
    else:
        Y, _ = model.predict_units(model.units(history[None]))
        preds = Y[:, -1, :]
    return model.plan.merge(preds)


def generate_future(observed, model: ForecasterModel, steps: int) -> np.ndarray:
    """Append ``steps`` recursively forecast frames to the observed ones."""
    observed = _check_history(observed, model.d)
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    if steps and model.k != 1:
        raise ConfigError("recursive rollout is defined only for k = 1; "
                          "use forecast_frame for longer horizons")
    frames = observed.copy()
    for _ in range(steps):
        nxt = forecast_frame(frames, model)
        frames = np.vstack([frames, nxt[None]])
    return frames


def param_count(model: ForecasterModel) -> ParamCount:
    """Exact stored-parameter count next to the commonly quoted approximation."""
    cell = model.cell.param_count if model.cell is not None else 0
    readout = model.readout.param_count
    exact = model.store.size()
    assert exact == cell + readout
    H, d, D = model.hidden, model.plan.d, model.plan.D
    if model.mode in ("flattened", "per_channel"):
        formula, text = 4 * (H + 1), "4(H+1)"
    elif model.mode == "vanilla_lstm":
        formula, text = 4 * (d * H + d * d), "4(dH+d^2)"
    else:
        formula, text = D * D, "D^2"
    return ParamCount(exact, cell, readout, formula, text)


def lstm_cell_count(input_dim: int, hidden: int) -> int:
    return 4 * (hidden * input_dim + hidden * hidden + hidden)
