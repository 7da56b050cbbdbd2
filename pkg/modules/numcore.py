# coding: utf-8
"""
Numerical Core
==============
Float64 tensors with reverse-mode differentiation, the layers built from
them, label-smoothed cross entropy, Adam and the multistep LR schedule.

Every op records a ``_backward`` closure on its output; ``backward(loss)``
walks the graph in reverse topological order and accumulates gradients
into every tensor that requires them.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .errors import (
    BadAlpha,
    CheckpointFormat,
    DisconnectedGraph,
    NumericError,
    ShapeMismatch,
    UninitializedState,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

# Additive bias for masked positions inside the graph. Finite so that
# zero-weighted targets contribute exactly zero to the loss.
MASK_BIAS = -1e9


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array that participates in reverse-mode differentiation."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _children: Tuple["Tensor", ...] = (),
        _op: str = ''
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._backward: Callable[[], None] = lambda: None
        self._prev = _children
        self._op = _op

    # ------------------------------------------------------------------
    # Basics
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op='{self._op}', requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _make(data: np.ndarray, children: Tuple["Tensor", ...], op: str) -> "Tensor":
        return Tensor(data, any(c.requires_grad for c in children), children, op)

    # ------------------------------------------------------------------
    # Elementwise arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        try:
            value = self.data + other.data
        except ValueError as e:
            raise ShapeMismatch(f"add: {self.shape} vs {other.shape}") from e
        out = Tensor._make(value, (self, other), '+')

        def _backward():
            self._accumulate(_unbroadcast(out.grad, self.shape))
            other._accumulate(_unbroadcast(out.grad, other.shape))
        out._backward = _backward
        return out

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        try:
            value = self.data * other.data
        except ValueError as e:
            raise ShapeMismatch(f"mul: {self.shape} vs {other.shape}") from e
        out = Tensor._make(value, (self, other), '*')

        def _backward():
            self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
            other._accumulate(_unbroadcast(out.grad * self.data, other.shape))
        out._backward = _backward
        return out

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other))

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return self + other

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return self * other

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __pow__(self, exponent: float) -> "Tensor":
        out = Tensor._make(self.data ** exponent, (self,), f'**{exponent}')

        def _backward():
            self._accumulate(out.grad * exponent * self.data ** (exponent - 1))
        out._backward = _backward
        return out

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        out = Tensor._make(self.data[index], (self,), 'slice')

        def _backward():
            grad = np.zeros_like(self.data)
            np.add.at(grad, index, out.grad)
            self._accumulate(grad)
        out._backward = _backward
        return out

    # ------------------------------------------------------------------
    # Nonlinearities
    # ------------------------------------------------------------------

    def relu(self) -> "Tensor":
        out = Tensor._make(np.maximum(self.data, 0.0), (self,), 'relu')

        def _backward():
            self._accumulate(out.grad * (self.data > 0))
        out._backward = _backward
        return out

    def gelu(self) -> "Tensor":
        cdf = 0.5 * (1.0 + special.erf(self.data / np.sqrt(2.0)))
        out = Tensor._make(self.data * cdf, (self,), 'gelu')

        def _backward():
            pdf = np.exp(-0.5 * self.data ** 2) / np.sqrt(2.0 * np.pi)
            self._accumulate(out.grad * (cdf + self.data * pdf))
        out._backward = _backward
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        probs = special.softmax(self.data, axis=axis)
        out = Tensor._make(probs, (self,), 'softmax')

        def _backward():
            dot = (out.grad * probs).sum(axis=axis, keepdims=True)
            self._accumulate(probs * (out.grad - dot))
        out._backward = _backward
        return out

    def log_softmax(self, axis: int = -1) -> "Tensor":
        value = special.log_softmax(self.data, axis=axis)
        out = Tensor._make(value, (self,), 'log_softmax')

        def _backward():
            probs = np.exp(value)
            self._accumulate(out.grad - probs * out.grad.sum(axis=axis, keepdims=True))
        out._backward = _backward
        return out

    # ------------------------------------------------------------------
    # Reductions and shape
    # ------------------------------------------------------------------

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), 'sum')

        def _backward():
            grad = out.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accumulate(np.broadcast_to(grad, self.shape))
        out._backward = _backward
        return out

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            value = self.data.reshape(shape)
        except ValueError as e:
            raise ShapeMismatch(f"reshape: {self.shape} -> {shape}") from e
        out = Tensor._make(value, (self,), 'reshape')

        def _backward():
            self._accumulate(out.grad.reshape(self.shape))
        out._backward = _backward
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        out = Tensor._make(self.data.transpose(axes), (self,), 'transpose')

        def _backward():
            self._accumulate(out.grad.transpose(inverse))
        out._backward = _backward
        return out


class Parameter(Tensor):
    """Trainable tensor with a name and an always-present gradient."""

    def __init__(self, data: ArrayLike, name: str = ''):
        super().__init__(data, requires_grad=True, _op='param')
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter(name='{self.name}', shape={self.shape})"


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ============================================================================
# FUNCTIONAL OPS
# ============================================================================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs 2-D or batched operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    try:
        value = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeMismatch(f"matmul: batch dims differ, {a.shape} @ {b.shape}") from e
    out = Tensor._make(value, (a, b), 'matmul')

    def _backward():
        a._accumulate(_unbroadcast(np.matmul(out.grad, np.swapaxes(b.data, -1, -2)), a.shape))
        b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), out.grad), b.shape))
    out._backward = _backward
    return out


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``weight[ids]``; repeated ids accumulate gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    if weight.ndim != 2:
        raise ShapeMismatch(f"embedding table must be 2-D, got {weight.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeMismatch(f"embedding ids outside [0, {weight.shape[0]})")
    out = Tensor._make(weight.data[ids], (weight,), 'embedding')

    def _backward():
        grad = np.zeros_like(weight.data)
        np.add.at(grad, ids, out.grad)
        weight._accumulate(grad)
    out._backward = _backward
    return out


def layer_norm(
    x: Tensor,
    gamma: Optional[Tensor] = None,
    beta: Optional[Tensor] = None,
    eps: float = 1e-5
) -> Tensor:
    """Normalize over the last axis, then apply the optional affine."""
    x = as_tensor(x)
    width = x.shape[-1]
    if gamma is not None and gamma.shape != (width,):
        raise ShapeMismatch(f"layer_norm gamma {gamma.shape} vs width {width}")
    mu = x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv_std
    g_data = gamma.data if gamma is not None else 1.0
    b_data = beta.data if beta is not None else 0.0
    children = tuple(t for t in (x, gamma, beta) if t is not None)
    out = Tensor._make(xhat * g_data + b_data, children, 'layer_norm')

    def _backward():
        dxhat = out.grad * g_data
        dx = inv_std / width * (
            width * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        x._accumulate(dx)
        lead = tuple(range(out.grad.ndim - 1))
        if gamma is not None:
            gamma._accumulate((out.grad * xhat).sum(axis=lead))
        if beta is not None:
            beta._accumulate(out.grad.sum(axis=lead))
    out._backward = _backward
    return out


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Same-padded 1-D convolution along the sequence axis.

    Args:
        x: (B, L, C_in)
        weight: (K, C_in, C_out), K odd
        bias: (C_out,)
    """
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeMismatch(f"conv1d expects (B, L, C) input and (K, C_in, C_out) kernel, got {x.shape}, {weight.shape}")
    kernel, c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        raise ShapeMismatch(f"conv1d: input channels {x.shape[-1]} vs kernel {c_in}")
    if kernel % 2 == 0:
        raise ShapeMismatch(f"conv1d: same padding needs an odd kernel, got {kernel}")

    length = x.shape[1]
    pad = kernel // 2
    padded = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    cols = np.stack([padded[:, k:k + length, :] for k in range(kernel)], axis=2)  # (B, L, K, C_in)
    value = np.einsum('blkc,kco->blo', cols, weight.data)
    if bias is not None:
        value = value + bias.data
    children = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor._make(value, children, 'conv1d')

    def _backward():
        weight._accumulate(np.einsum('blkc,blo->kco', cols, out.grad))
        if bias is not None:
            bias._accumulate(out.grad.sum(axis=(0, 1)))
        if x.requires_grad:
            gcols = np.einsum('blo,kco->blkc', out.grad, weight.data)
            gpad = np.zeros_like(padded)
            for k in range(kernel):
                gpad[:, k:k + length, :] += gcols[:, :, k, :]
            x._accumulate(gpad[:, pad:pad + length, :])
    out._backward = _backward
    return out


class DropoutStream:
    """
    Counter-based dropout randomness.

    Call ``n`` draws from ``default_rng([seed, n])`` so a training run
    replays exactly given its seed and the order of dropout calls.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.counter = 0

    def next_generator(self) -> np.random.Generator:
        rng = np.random.default_rng([self.seed, self.counter])
        self.counter += 1
        return rng


def dropout(x: Tensor, p: float, stream: Optional[DropoutStream], training: bool = True) -> Tensor:
    """Inverted dropout. Identity when ``p == 0`` or outside training."""
    if not 0.0 <= p < 1.0:
        raise NumericError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if stream is None:
        raise UninitializedState("dropout in training mode needs a DropoutStream")
    keep = stream.next_generator().random(x.shape) >= p
    return x * (keep / (1.0 - p))


def softmax(x: ArrayLike, axis: int = -1) -> np.ndarray:
    return special.softmax(np.asarray(x, dtype=np.float64), axis=axis)


def mask_bias(mask: np.ndarray, fill: float = MASK_BIAS) -> np.ndarray:
    """0 where ``mask`` is set, ``fill`` elsewhere."""
    return np.where(np.asarray(mask, dtype=bool), 0.0, fill)


# ============================================================================
# LOSSES
# ============================================================================

def smooth_labels(y: ArrayLike, alpha: float, C: Optional[int] = None) -> np.ndarray:
    """y * (1 - alpha) + alpha / C over the last axis."""
    if not 0.0 <= alpha <= 1.0:
        raise BadAlpha(f"alpha must be in [0, 1], got {alpha}")
    y = np.asarray(y, dtype=np.float64)
    classes = y.shape[-1]
    if C is not None and C != classes:
        raise ShapeMismatch(f"smooth_labels: C={C} but targets have {classes} classes")
    return y * (1.0 - alpha) + alpha / classes


def cross_entropy_smoothed(
    logits: Tensor,
    y_smooth: ArrayLike,
    mask: Optional[np.ndarray] = None
) -> Tensor:
    """
    Summed cross entropy ``-sum(y * log_softmax(logits))`` over every row.

    ``mask`` restricts the softmax to the marked positions; targets must
    put no mass outside it.
    """
    logits = as_tensor(logits)
    y_smooth = np.asarray(y_smooth, dtype=np.float64)
    if logits.shape != y_smooth.shape:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {y_smooth.shape}")
    if mask is not None:
        logits = logits + mask_bias(mask)
    return -(logits.log_softmax(axis=-1) * y_smooth).sum()


# ============================================================================
# GRAPH TRAVERSAL
# ============================================================================

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for child in reversed(node._prev):
            if id(child) not in visited:
                stack.append((child, False))
    return order


def backward(loss: Tensor):
    """Populate ``.grad`` on every tensor that requires it."""
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DisconnectedGraph("loss does not depend on any parameter")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_topological_order(loss)):
        if node.grad is not None:
            node._backward()


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
    n_samples: Optional[int] = None,
    seed: int = 0
) -> float:
    """
    Max relative error between reverse-mode and central-difference gradients.

    With ``n_samples`` only that many elements per parameter are probed.
    Relative error is ``|a - n| / max(|a|, |n|, 1e-6)``.
    """
    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        if n_samples is None or n_samples >= flat.size:
            indices = np.arange(flat.size)
        else:
            indices = rng.choice(flat.size, size=n_samples, replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            f_plus = f().item()
            flat[i] = original - h
            f_minus = f().item()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = grad.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    logger.debug(f"grad_check over {len(params)} params: max rel error {worst:.3e}")
    return worst


# ============================================================================
# MODULES
# ============================================================================

class Module:
    """Container of named parameters and child modules."""

    def __init__(self):
        self._params: Dict[str, Parameter] = {}
        self._children: Dict[str, "Module"] = {}
        self.training = True
        self.stream: Optional[DropoutStream] = None

    def param(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(data, name=name)
        self._params[name] = p
        return p

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        for full_name, p in module.named_parameters(prefix=name + "."):
            p.name = full_name
        return module

    def named_parameters(self, prefix: str = '') -> List[Tuple[str, Parameter]]:
        named = [(prefix + n, p) for n, p in self._params.items()]
        for child_name, module in self._children.items():
            named.extend(module.named_parameters(prefix=f"{prefix}{child_name}."))
        return named

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for module in self._children.values():
            module.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_stream(self, stream: DropoutStream) -> "Module":
        self.stream = stream
        for module in self._children.values():
            module.set_stream(stream)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointFormat(f"parameter names differ: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointFormat(f"'{name}': checkpoint shape {value.shape} vs model {p.shape}")
            p.data = value.copy()
            p.zero_grad()

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def normal_init(rng: np.random.Generator, shape: Tuple[int, ...], scale: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, scale, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = self.param('weight', normal_init(rng, (in_dim, out_dim)))
        self.bias = self.param('bias', np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.param('gamma', np.ones(dim))
        self.beta = self.param('beta', np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, n_rows: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = self.param('weight', normal_init(rng, (n_rows, dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding(self.weight, ids)


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.weight = self.param('weight', normal_init(rng, (kernel, in_channels, out_channels)))
        self.bias = self.param('bias', np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias)


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def __call__(self, x: Tensor) -> Tensor:
        return dropout(x, self.p, self.stream, self.training)


# ============================================================================
# OPTIMIZATION
# ============================================================================

@dataclass
class AdamState:
    """First/second moments per parameter name."""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: Iterable[Parameter], lr: float, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for p in params:
            if p.name in state.m:
                raise NumericError(f"duplicate parameter name '{p.name}'")
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        return state


def adam_step(params: Iterable[Parameter], state: AdamState):
    """One bias-corrected Adam update, in place."""
    params = list(params)
    for p in params:
        if p.name not in state.m or state.m[p.name].shape != p.shape:
            raise UninitializedState(f"no Adam moments for parameter '{p.name}'")
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p in params:
        m = state.beta1 * state.m[p.name] + (1.0 - state.beta1) * p.grad
        v = state.beta2 * state.v[p.name] + (1.0 - state.beta2) * p.grad ** 2
        state.m[p.name], state.v[p.name] = m, v
        p.data = p.data - state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


@dataclass(frozen=True)
class LRSchedule:
    base_lr: float
    gamma: float = 0.1
    milestones: Tuple[int, ...] = (3, 4, 5)


def lr_at(schedule: LRSchedule, epoch: int) -> float:
    """base_lr * gamma ** (number of milestones <= epoch)."""
    if epoch < 0:
        raise NumericError(f"epoch must be >= 0, got {epoch}")
    passed = sum(1 for m in schedule.milestones if m <= epoch)
    return schedule.base_lr * schedule.gamma ** passed
