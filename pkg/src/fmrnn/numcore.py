"""Parameter storage, seeded randomness, SGD and finite-difference checking.

Everything here works on float64 numpy arrays.  Gradients are written by the
layers into the paired buffers of a :class:`ParamStore`; :func:`sgd_step`
consumes them and :func:`grad_check` compares them against central
differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

DTYPE = np.float64


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the stream is identical on every platform."""
    return np.random.default_rng(seed)


def rng_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape).astype(DTYPE, copy=False)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """Named float64 parameters, each with a gradient buffer of the same shape."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=DTYPE)
        self._params[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, value) -> None:
        # in-place so layers holding references see the update
        value = np.asarray(value, dtype=DTYPE)
        if value.shape != self._params[name].shape:
            raise ShapeError(
                f"{name}: shape {value.shape} != stored {self._params[name].shape}")
        self._params[name][...] = value

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def size(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self._params.items():
            out.add(name, p.copy())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter sets differ: {sorted(missing)}")
        for name, value in state.items():
            self[name] = value


@dataclass
class OptimState:
    base_lr: float = 0.001
    decay_rate: float = 0.9
    epoch: int = 0

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ConfigError("decay_rate must lie in (0, 1]")
        if self.epoch < 0:
            raise ConfigError("epoch must be non-negative")

    def effective_lr(self, epoch: int | None = None) -> float:
        epoch = self.epoch if epoch is None else epoch
        return self.base_lr * self.decay_rate ** epoch


def sgd_step(store: ParamStore, opt: OptimState, names: Iterable[str] | None = None) -> ParamStore:
    """w <- w - lr * grad for every parameter, then zero the gradients.

    All gradients are validated before any parameter moves, so a non-finite
    gradient leaves the store untouched.
    """
    names = store.names() if names is None else list(names)
    for name in names:
        if not np.all(np.isfinite(store.grad(name))):
            raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
    lr = opt.effective_lr()
    for name in names:
        store[name] -= lr * store.grad(name)
        store.grad(name).fill(0.0)
    return store


def grad_check(f: Callable[[ParamStore], float], store: ParamStore, eps: float = 1e-5,
               names: Iterable[str] | None = None, max_entries: int | None = None,
               rng: np.random.Generator | None = None, elementwise: bool = False) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``f(store)`` must return the scalar loss and accumulate its analytic
    gradient into the store's buffers.  For each named parameter the error is
    ``||a - n|| / max(1e-12, ||a|| + ||n||)`` over its probed coordinates, and
    the maximum over parameters is returned.  With ``elementwise=True`` every
    coordinate is scored on its own, which is stricter but meaningless for
    components whose true gradient sits below finite-difference round-off.
    ``max_entries`` limits the number of coordinates probed per parameter
    (sampled with ``rng``).
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    names = store.names() if names is None else list(names)

    store.zero_grad()
    base = f(store)
    if not np.isfinite(base):
        raise NonFiniteError("function value is not finite")
    analytic = {name: store.grad(name).copy() for name in names}

    worst = 0.0
    for name in names:
        param = store[name]
        flat = param.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or make_rng(0)).choice(flat.size, size=max_entries, replace=False)
        a = analytic[name].reshape(-1)[idx]
        num = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(store)
            flat[i] = orig - eps
            fm = f(store)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NonFiniteError(f"function value not finite while perturbing {name}[{i}]")
            num[j] = (fp - fm) / (2.0 * eps)
        if elementwise:
            err = np.max(np.abs(a - num) / np.maximum(1e-12, np.abs(a) + np.abs(num)),
                         initial=0.0)
        else:
            err = np.linalg.norm(a - num) / max(1e-12, np.linalg.norm(a) + np.linalg.norm(num))
        worst = max(worst, float(err))
    store.zero_grad()
    return float(worst)
