"""Classifier, discriminator and checkpoint files.

Checkpoint layout: the magic line ``FMRNN-CHECKPOINT``, one line of JSON
(kind, version, config echo and the ordered name/shape table), then every
parameter as float64 little-endian bytes in table order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import (ConfigMismatch, KindMismatch, MalformedCheckpoint, ShapeError,
                     VersionMismatch)
from .featmap import ForecasterModel
from .layers import MLP, RBFLayer, sigmoid, softmax
from .numcore import ParamStore

CHECKPOINT_MAGIC = b"FMRNN-CHECKPOINT\n"
CHECKPOINT_VERSION = 1
LOGIT_LIMIT = 30.0


class ClassifierModel:
    """ReLU trunk (d -> 256 -> 128) followed by an RBF layer giving class logits."""

    def __init__(self, d: int, n_classes: int, widths=(256, 128), n_kernels: int = 256,
                 store: ParamStore | None = None):
        if n_classes < 2:
            raise ShapeError("a classifier needs at least two classes")
        self.d = d
        self.n_classes = n_classes
        self.widths = tuple(int(w) for w in widths)
        self.n_kernels = n_kernels
        self.store = store if store is not None else ParamStore()
        self.trunk = MLP(self.store, "trunk", (d,) + self.widths, activate_output=True)
        self.rbf_out = RBFLayer(self.store, "rbf_out", n_kernels, self.widths[-1], n_classes)

    def config(self) -> dict:
        return {"d": self.d, "n_classes": self.n_classes, "widths": list(self.widths),
                "n_kernels": self.n_kernels}

    def init(self, rng: np.random.Generator) -> "ClassifierModel":
        self.trunk.init(rng)
        self.rbf_out.init(rng)
        return self

    def logits(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ShapeError(f"feature width {X.shape[-1]} != d={self.d}")
        feats, tc = self.trunk.forward(X)
        out, rc = self.rbf_out.forward(feats)
        return out, (tc, rc)

    def backward(self, dlogits, cache):
        tc, rc = cache
        dfeat = self.rbf_out.backward(dlogits, rc)
        return self.trunk.backward(dfeat, tc)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X)[0])


def classify_frame(x, model: ClassifierModel) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("classify_frame takes a single d-vector")
    return model.predict_proba(x[None])[0]


class DiscriminatorModel:
    """MLP (D -> 64 -> 32 -> 1) with a logistic output."""

    def __init__(self, in_dim: int, widths=(64, 32), store: ParamStore | None = None):
        self.in_dim = in_dim
        self.widths = tuple(int(w) for w in widths)
        self.store = store if store is not None else ParamStore()
        self.mlp = MLP(self.store, "disc", (in_dim,) + self.widths + (1,))

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "widths": list(self.widths)}

    def init(self, rng: np.random.Generator) -> "DiscriminatorModel":
        self.mlp.init(rng)
        return self

    def forward(self, X):
        """Probabilities (N,) that each row of X is real."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.in_dim:
            raise ShapeError(f"discriminator input width {X.shape[-1]} != {self.in_dim}")
        z, mc = self.mlp.forward(X)
        z = z[..., 0]
        zc = np.clip(z, -LOGIT_LIMIT, LOGIT_LIMIT)
        p = sigmoid(zc)
        return p, (mc, z, p)

    def backward(self, dp, cache):
        mc, z, p = cache
        dz = np.asarray(dp) * p * (1.0 - p) * (np.abs(z) < LOGIT_LIMIT)
        return self.mlp.backward(dz[..., None], mc)


def discriminate(x, model: DiscriminatorModel) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("discriminate takes a single D-vector")
    return float(model.forward(x[None])[0][0])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def model_kind(model) -> str:
    if isinstance(model, ForecasterModel):
        return "forecaster"
    if isinstance(model, ClassifierModel):
        return "classifier"
    if isinstance(model, DiscriminatorModel):
        return "discriminator"
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def build_model(kind: str, config: dict):
    if kind == "forecaster":
        return ForecasterModel(config["d"], config["D"], config["S"], mode=config["mode"],
                               readout=config["readout"], hidden=config["hidden"],
                               n_kernels=config["n_kernels"], k=config["k"])
    if kind == "classifier":
        return ClassifierModel(config["d"], config["n_classes"], widths=config["widths"],
                               n_kernels=config["n_kernels"])
    if kind == "discriminator":
        return DiscriminatorModel(config["in_dim"], widths=config["widths"])
    raise MalformedCheckpoint(f"unknown model kind {kind!r}")


def save_model(model, path, extra: dict | None = None) -> None:
    kind = model_kind(model)
    table = [[name, list(arr.shape)] for name, arr in model.store.items()]
    header = {"version": CHECKPOINT_VERSION, "kind": kind, "config": model.config(),
              "extra": extra or {}, "params": table}
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, arr in model.store.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint_header(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise MalformedCheckpoint(f"malformed checkpoint {path}: bad magic")
    rest = raw[len(CHECKPOINT_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise MalformedCheckpoint(f"malformed checkpoint {path}: header not terminated")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
        header["kind"], header["config"], header["params"], header["version"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedCheckpoint(f"malformed checkpoint {path}: bad header ({exc})") from None
    return header, rest[nl + 1:]


def load_model(path, kind: str | None = None, require: dict | None = None):
    """Rebuild a model from a checkpoint.

    ``kind`` and ``require`` (config keys that must match) guard against
    loading the wrong model for the job.
    """
    header, payload = read_checkpoint_header(path)
    if header["version"] != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint {path} has version {header['version']}, expected {CHECKPOINT_VERSION}")
    if kind is not None and header["kind"] != kind:
        raise KindMismatch(f"checkpoint {path} holds a {header['kind']}, not a {kind}")
    for key, want in (require or {}).items():
        have = header["config"].get(key)
        if have != want:
            raise ConfigMismatch(f"checkpoint {path}: {key}={have!r}, need {want!r}")
    try:
        model = build_model(header["kind"], header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCheckpoint(f"malformed checkpoint {path}: bad config ({exc})") from None
    expected = [[name, list(arr.shape)] for name, arr in model.store.items()]
    if header["params"] != expected:
        raise MalformedCheckpoint(f"malformed checkpoint {path}: parameter table mismatch")
    need = sum(int(np.prod(shape)) for _, shape in expected) * 8
    if len(payload) != need:
        raise MalformedCheckpoint(
            f"malformed checkpoint {path}: {len(payload)} data bytes, expected {need}")
    offset = 0
    for name, shape in expected:
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset)
        model.store[name] = arr.reshape(shape)
        offset += n * 8
    return model
