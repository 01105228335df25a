"""Differentiable building blocks with hand-written backward passes.

Every block keeps its parameters in a shared :class:`~fmrnn.numcore.ParamStore`
under a name prefix.  ``forward`` returns the output together with a cache;
``backward`` takes the upstream gradient and that cache, accumulates parameter
gradients into the store and returns the gradient with respect to the input.
Leading batch dimensions are allowed everywhere unless noted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numcore import ParamStore, glorot_uniform

LOG_CLAMP = 1e-7


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_fast(z):
    # callers guarantee moderate inputs (LSTM gate pre-activations)
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


class LSTMCell:
    """Forget-gate LSTM without peepholes.

    Gate rows are stacked as (input, forget, output, candidate) in the
    ``W_x`` (4H x in), ``W_h`` (4H x H) and ``b`` (4H) parameters.
    """

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden_dim: int):
        if input_dim < 1 or hidden_dim < 1:
            raise ShapeError("LSTM dimensions must be positive")
        self.store = store
        self.prefix = prefix
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.names = (f"{prefix}.W_x", f"{prefix}.W_h", f"{prefix}.b")
        if self.names[0] not in store:
            H = hidden_dim
            store.add(self.names[0], np.zeros((4 * H, input_dim)))
            store.add(self.names[1], np.zeros((4 * H, H)))
            store.add(self.names[2], np.zeros(4 * H))

    def init(self, rng: np.random.Generator, forget_bias: float = 1.0) -> None:
        H, n_in = self.hidden_dim, self.input_dim
        self.store[self.names[0]] = glorot_uniform(rng, (4 * H, n_in), n_in, 4 * H)
        self.store[self.names[1]] = glorot_uniform(rng, (4 * H, H), H, 4 * H)
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        self.store[self.names[2]] = b

    @property
    def param_count(self) -> int:
        H, n_in = self.hidden_dim, self.input_dim
        return 4 * (H * n_in + H * H + H)

    def step(self, x, state: LstmState) -> LstmState:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        H = self.hidden_dim
        if x.shape[0] != self.input_dim:
            raise ShapeError(f"input length {x.shape[0]} != input_dim {self.input_dim}")
        if state.h.shape != (H,) or state.c.shape != (H,):
            raise ShapeError(f"state dimensions must be {H}")
        Wx, Wh, b = (self.store[n] for n in self.names)
        a = Wx @ x + Wh @ state.h + b
        i = _sigmoid_fast(a[:H])
        f = _sigmoid_fast(a[H:2 * H])
        o = _sigmoid_fast(a[2 * H:3 * H])
        g = np.tanh(a[3 * H:])
        c = f * state.c + i * g
        return LstmState(o * np.tanh(c), c)

    def forward(self, x):
        """Run over ``x`` of shape (N, L, input_dim) from a zero state.

        Returns hidden states of shape (N, L, H) and the cache for backward.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"expected (N, L, {self.input_dim}) input, got {x.shape}")
        N, L, _ = x.shape
        H = self.hidden_dim
        Wx, Wh, b = (self.store[n] for n in self.names)
        WhT = Wh.T
        if self.input_dim == 1:
            xw = x * Wx[:, 0] + b
        else:
            xw = x @ Wx.T + b
        gates = np.empty((L, N, 4 * H))
        cs = np.empty((L + 1, N, H))
        hs = np.empty((L + 1, N, H))
        cs[0] = 0.0
        hs[0] = 0.0
        tcs = np.empty((L, N, H))
        for t in range(L):
            a = xw[:, t] + hs[t] @ WhT
            ga = gates[t]
            ga[:, :3 * H] = _sigmoid_fast(a[:, :3 * H])
            ga[:, 3 * H:] = np.tanh(a[:, 3 * H:])
            c = ga[:, H:2 * H] * cs[t] + ga[:, :H] * ga[:, 3 * H:]
            cs[t + 1] = c
            tc = np.tanh(c)
            tcs[t] = tc
            hs[t + 1] = ga[:, 2 * H:3 * H] * tc
        out = hs[1:].transpose(1, 0, 2)
        return out, (x, gates, cs, hs, tcs)

    def backward(self, dh_seq, cache):
        x, gates, cs, hs, tcs = cache
        L, N, H4 = gates.shape
        H = H4 // 4
        Wx, Wh, _ = (self.store[n] for n in self.names)
        dh_seq = np.asarray(dh_seq).transpose(1, 0, 2)
        dA = np.empty((L, N, 4 * H))
        dh_next = np.zeros((N, H))
        dc_next = np.zeros((N, H))
        for t in range(L - 1, -1, -1):
            ga = gates[t]
            i, f, o, g = ga[:, :H], ga[:, H:2 * H], ga[:, 2 * H:3 * H], ga[:, 3 * H:]
            tc = tcs[t]
            dh = dh_seq[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = dA[t]
            da[:, :H] = dc * g * i * (1.0 - i)
            da[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
            da[:, 3 * H:] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = da @ Wh
        dA_flat = dA.reshape(L * N, 4 * H)
        x_flat = x.transpose(1, 0, 2).reshape(L * N, self.input_dim)
        self.store.grad(self.names[0])[...] += dA_flat.T @ x_flat
        self.store.grad(self.names[1])[...] += dA_flat.T @ hs[:-1].reshape(L * N, H)
        self.store.grad(self.names[2])[...] += dA_flat.sum(axis=0)
        return (dA @ Wx).transpose(1, 0, 2)


def lstm_step(x, state: LstmState, params: LSTMCell) -> LstmState:
    """One LSTM update ``(x, h, c) -> (h', c')`` for a single sample."""
    return params.step(x, state)


# ---------------------------------------------------------------------------
# Linear readout
# ---------------------------------------------------------------------------

class Linear:
    """``y = x @ W + b`` with ``W`` of shape (in, out)."""

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, out_dim: int,
                 bias: bool = True):
        self.store = store
        self.in_dim, self.out_dim = in_dim, out_dim
        self.w_name = f"{prefix}.W"
        self.b_name = f"{prefix}.b" if bias else None
        if self.w_name not in store:
            store.add(self.w_name, np.zeros((in_dim, out_dim)))
            if bias:
                store.add(self.b_name, np.zeros(out_dim))

    def init(self, rng: np.random.Generator) -> None:
        self.store[self.w_name] = glorot_uniform(
            rng, (self.in_dim, self.out_dim), self.in_dim, self.out_dim)
        if self.b_name:
            self.store[self.b_name] = np.zeros(self.out_dim)

    @property
    def param_count(self) -> int:
        return self.in_dim * self.out_dim + (self.out_dim if self.b_name else 0)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected last dim {self.in_dim}, got {x.shape[-1]}")
        y = x @ self.store[self.w_name]
        if self.b_name:
            y = y + self.store[self.b_name]
        return y, x

    def backward(self, dy, x):
        dy2 = dy.reshape(-1, self.out_dim)
        self.store.grad(self.w_name)[...] += x.reshape(-1, self.in_dim).T @ dy2
        if self.b_name:
            self.store.grad(self.b_name)[...] += dy2.sum(axis=0)
        return dy @ self.store[self.w_name].T


# ---------------------------------------------------------------------------
# RBF kernel layer
# ---------------------------------------------------------------------------

class RBFLayer:
    """Linear combination of Gaussian kernels on an ``in_dim`` vector.

    ``out[c] = sum_j alpha[j, c] * exp(-||h - mu_j||^2 / sigma_j^2)`` with
    ``sigma_j = exp(log_width[j])``.
    """

    # above this many (batch * kernels * dims) entries the squared distance
    # uses the matmul expansion instead of explicit differences
    _DIRECT_LIMIT = 1 << 18

    def __init__(self, store: ParamStore, prefix: str, n_kernels: int, in_dim: int,
                 out_dim: int = 1):
        if n_kernels < 1:
            raise ShapeError("need at least one kernel")
        self.store = store
        self.n_kernels, self.in_dim, self.out_dim = n_kernels, in_dim, out_dim
        self.mu_name = f"{prefix}.centers"
        self.s_name = f"{prefix}.log_width"
        self.alpha_name = f"{prefix}.alpha"
        if self.mu_name not in store:
            store.add(self.mu_name, np.zeros((n_kernels, in_dim)))
            store.add(self.s_name, np.zeros(n_kernels))
            store.add(self.alpha_name, np.zeros((n_kernels, out_dim)))

    def init(self, rng: np.random.Generator, log_width: float | None = None) -> None:
        self.store[self.mu_name] = rng.standard_normal((self.n_kernels, self.in_dim))
        if log_width is None:
            # sigma^2 = in_dim keeps exp(-||h - mu||^2 / sigma^2) away from zero
            # for standard-normal centers; with sigma = 1 a 128-wide input
            # starts every kernel near exp(-128) and nothing trains
            log_width = 0.5 * np.log(self.in_dim)
        self.store[self.s_name] = np.full(self.n_kernels, float(log_width))
        self.store[self.alpha_name] = rng.uniform(-0.1, 0.1, (self.n_kernels, self.out_dim))

    @property
    def param_count(self) -> int:
        return self.n_kernels * (self.in_dim + 1 + self.out_dim)

    @property
    def widths(self) -> np.ndarray:
        return np.exp(self.store[self.s_name])

    def _sqdist(self, h2, mu):
        if h2.shape[0] * mu.shape[0] * mu.shape[1] <= self._DIRECT_LIMIT:
            diff = h2[:, None, :] - mu[None, :, :]
            return np.einsum("bnk,bnk->bn", diff, diff)
        d2 = (h2 * h2).sum(1)[:, None] - 2.0 * (h2 @ mu.T) + (mu * mu).sum(1)[None, :]
        return np.maximum(d2, 0.0)

    def kernels(self, h):
        h2 = np.asarray(h, dtype=np.float64).reshape(-1, self.in_dim)
        d2 = self._sqdist(h2, self.store[self.mu_name])
        inv_var = np.exp(-2.0 * self.store[self.s_name])
        return np.exp(-d2 * inv_var), d2

    def forward(self, h):
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != self.in_dim:
            raise ShapeError(f"expected last dim {self.in_dim}, got {h.shape[-1]}")
        lead = h.shape[:-1]
        K, d2 = self.kernels(h)
        out = K @ self.store[self.alpha_name]
        return out.reshape(*lead, self.out_dim), (h, K, d2)

    def backward(self, dout, cache):
        h, K, d2 = cache
        h2 = h.reshape(-1, self.in_dim)
        dout2 = np.asarray(dout).reshape(-1, self.out_dim)
        mu = self.store[self.mu_name]
        alpha = self.store[self.alpha_name]
        inv_var = np.exp(-2.0 * self.store[self.s_name])
        self.store.grad(self.alpha_name)[...] += K.T @ dout2
        dK = dout2 @ alpha.T
        # G = dL/d(d2) for each (sample, kernel)
        G = -dK * K * inv_var
        colsum = G.sum(axis=0)
        dh = 2.0 * (h2 * G.sum(axis=1)[:, None] - G @ mu)
        self.store.grad(self.mu_name)[...] += -2.0 * (G.T @ h2 - mu * colsum[:, None])
        self.store.grad(self.s_name)[...] += 2.0 * (dK * K * d2).sum(axis=0) * inv_var
        return dh.reshape(h.shape)


def rbf_forward(h, layer: RBFLayer):
    return layer.forward(h)[0]


def rbf_backward(h, layer: RBFLayer, upstream):
    """Gradients of ``upstream . rbf_forward(h)`` for h and each parameter.

    Returns a dict with keys ``h``, ``centers``, ``log_width``, ``alpha``; the
    store's own buffers are left as they were.
    """
    store = layer.store
    names = (layer.mu_name, layer.s_name, layer.alpha_name)
    saved = {n: store.grad(n).copy() for n in names}
    for n in names:
        store.grad(n).fill(0.0)
    _, cache = layer.forward(h)
    dh = layer.backward(np.asarray(upstream, dtype=np.float64), cache)
    out = {"h": dh, "centers": store.grad(names[0]).copy(),
           "log_width": store.grad(names[1]).copy(), "alpha": store.grad(names[2]).copy()}
    for n in names:
        store.grad(n)[...] = saved[n]
    return out


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

class MLP:
    """Affine layers with ReLU between them.

    The last layer stays affine unless ``activate_output`` is set, which is
    how the classifier trunk feeds rectified features into its RBF layer.
    """

    def __init__(self, store: ParamStore, prefix: str, widths, activation: str = "relu",
                 activate_output: bool = False):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ShapeError("MLP needs at least input and output widths, all positive")
        if activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        self.activate_output = activate_output
        self.layers = [Linear(store, f"{prefix}.{i}", a, b)
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def init(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init(rng)

    @property
    def param_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.widths[0]:
            raise ShapeError(f"expected input width {self.widths[0]}, got {x.shape[-1]}")
        caches = []
        for k, layer in enumerate(self.layers):
            z, lc = layer.forward(x)
            caches.append((lc, z))
            if k < len(self.layers) - 1 or self.activate_output:
                x = np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)
            else:
                x = z
        return x, caches

    def backward(self, dout, caches):
        grad = np.asarray(dout, dtype=np.float64)
        for k in range(len(self.layers) - 1, -1, -1):
            lc, z = caches[k]
            if k < len(self.layers) - 1 or self.activate_output:
                if self.activation == "relu":
                    grad = grad * (z > 0)
                else:
                    t = np.tanh(z)
                    grad = grad * (1.0 - t * t)
            grad = self.layers[k].backward(grad, lc)
        return grad


def mlp_forward(x, params: MLP):
    return params.forward(x)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def l2_loss(x_true, x_pred) -> float:
    x_true = np.asarray(x_true, dtype=np.float64)
    x_pred = np.asarray(x_pred, dtype=np.float64)
    if x_true.shape != x_pred.shape:
        raise ShapeError(f"length mismatch {x_true.shape} vs {x_pred.shape}")
    return float(np.mean((x_pred - x_true) ** 2))


def l2_loss_grad(x_true, x_pred):
    """Gradient of :func:`l2_loss` with respect to ``x_pred``."""
    x_true = np.asarray(x_true, dtype=np.float64)
    x_pred = np.asarray(x_pred, dtype=np.float64)
    return 2.0 * (x_pred - x_true) / x_pred.size


def _clamped_neg_log(p):
    return -np.log(np.clip(p, LOG_CLAMP, 1.0))


def _clamped_neg_log_grad(p):
    p = np.asarray(p, dtype=np.float64)
    return np.where(p >= LOG_CLAMP, -1.0 / np.maximum(p, LOG_CLAMP), 0.0)


def gen_adv_loss(d_out):
    """-log D(G(x)), clamped so a confident discriminator stays finite."""
    return _clamped_neg_log(np.asarray(d_out, dtype=np.float64))


def gen_adv_loss_grad(d_out):
    return _clamped_neg_log_grad(d_out)


def disc_loss(d_real, d_fake):
    d_real = np.asarray(d_real, dtype=np.float64)
    d_fake = np.asarray(d_fake, dtype=np.float64)
    return _clamped_neg_log(d_real) + _clamped_neg_log(1.0 - d_fake)


def disc_loss_grads(d_real, d_fake):
    """(d/d d_real, d/d d_fake) of :func:`disc_loss`."""
    d_fake = np.asarray(d_fake, dtype=np.float64)
    return _clamped_neg_log_grad(d_real), -_clamped_neg_log_grad(1.0 - d_fake)


def total_gen_loss(l2, adv, w_l2: float = 10.0, w_adv: float = 1.0):
    if w_l2 < 0 or w_adv < 0:
        raise ValueError("loss weights must be non-negative")
    return w_l2 * l2 + w_adv * adv


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss and probabilities for a single logit vector or a batch.

    For a batch (``logits`` of shape (N, C), ``label`` of shape (N,)) the
    returned loss is the batch mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label))
    C = logits.shape[-1]
    if np.any(labels < 0) or np.any(labels >= C):
        raise ValueError(f"label out of range for {C} classes")
    z = logits.reshape(-1, C)
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    probs = np.exp(logp)
    loss = -logp[np.arange(z.shape[0]), labels].mean()
    return float(loss), probs.reshape(logits.shape)


def softmax_cross_entropy_grad(probs, label):
    """Gradient of the (mean) cross-entropy with respect to the logits."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label))
    p2 = probs.reshape(-1, probs.shape[-1]).copy()
    p2[np.arange(p2.shape[0]), labels] -= 1.0
    return (p2 / p2.shape[0]).reshape(probs.shape)
