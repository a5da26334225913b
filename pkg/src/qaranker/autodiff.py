"""Dense float64 kernels, reverse-mode differentiation, Adam, initialization.

All tensors are small (documents per candidate <= ~40, projection width 32),
so everything runs in float64 numpy with no batching tricks.  Forward passes
build a graph of Node objects; backward() runs reverse accumulation into
Param.grad buffers.  Every op is deterministic: same inputs, same bits.
"""

from __future__ import annotations

import numpy as np

from .errors import QaError


# ---------------------------------------------------------------------------
# Pure (non-differentiable-path) kernels
# ---------------------------------------------------------------------------


def affine_broadcast(w: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """w @ x with b added to every column of the product.

    x may be a matrix (d, n) -> (m, n), or a vector (d,) -> (m,).
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if w.shape[1] != x.shape[0]:
        raise QaError(f"shape mismatch: {w.shape} @ {x.shape}")
    out = w @ x
    if out.ndim == 2:
        return out + b[:, None]
    return out + b


def tanh_map(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu_map(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax_row(x: np.ndarray) -> np.ndarray:
    """Stable softmax over a length >= 1 vector (max-subtraction)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise QaError("softmax of empty vector")
    e = np.exp(x - x.max())
    return e / e.sum()


def cross_entropy(logits: np.ndarray, target: int) -> float:
    """-log softmax(logits)[target], computed via a stable log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.size:
        raise QaError(f"target {target} out of range for {logits.size} logits")
    m = logits.max()
    lse = m + np.log(np.exp(logits - m).sum())
    return float(lse - logits[target])


def glorot_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)); deterministic per generator."""
    if len(shape) == 2:
        fan_out, fan_in = shape
    else:
        fan_out, fan_in = shape[0], shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


# ---------------------------------------------------------------------------
# Parameters and graph nodes
# ---------------------------------------------------------------------------


class Param:
    """A learned tensor with a gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Node:
    """One value in a recorded computation, with its vector-Jacobian hooks."""

    __slots__ = ("value", "grad", "parents", "param")

    def __init__(self, value, parents=(), param: Param | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents  # tuple of (Node, vjp) pairs
        self.param = param


def leaf(param: Param) -> Node:
    return Node(param.value, param=param)


def constant(value) -> Node:
    return Node(value)


def matmul(a: Node, b: Node) -> Node:
    """Product of (m,k)@(k,n), (m,k)@(k,), or (k,)@(k,n) operands."""
    out = a.value @ b.value

    def vjp_a(g):
        if a.value.ndim == 1:  # (k,) @ (k,n)
            return b.value @ g
        if b.value.ndim == 1:  # (m,k) @ (k,)
            return np.outer(g, b.value)
        return g @ b.value.T

    def vjp_b(g):
        if a.value.ndim == 1:
            return np.outer(a.value, g)
        return a.value.T @ g

    return Node(out, parents=((a, vjp_a), (b, vjp_b)))


def affine(w: Node, x: Node, b: Node) -> Node:
    """w @ x with bias broadcast to every column (or added, for vector x)."""
    out = affine_broadcast(w.value, x.value, b.value)

    def vjp_w(g):
        if x.value.ndim == 1:
            return np.outer(g, x.value)
        return g @ x.value.T

    def vjp_x(g):
        return w.value.T @ g

    def vjp_b(g):
        if g.ndim == 2:
            return g.sum(axis=1)
        return g

    return Node(out, parents=((w, vjp_w), (x, vjp_x), (b, vjp_b)))


def tanh(x: Node) -> Node:
    out = np.tanh(x.value)
    return Node(out, parents=((x, lambda g: g * (1.0 - out * out)),))


def relu(x: Node) -> Node:
    out = np.maximum(x.value, 0.0)
    mask = (x.value > 0.0).astype(np.float64)
    return Node(out, parents=((x, lambda g: g * mask),))


def softmax(x: Node) -> Node:
    p = softmax_row(x.value)

    def vjp(g):
        q = float(np.dot(g, p))
        return p * (g - q)

    return Node(p, parents=((x, vjp),))


def softmax_shifted(x: Node, bias: Node) -> Node:
    """softmax(x + bias * ones) for a scalar bias.

    A uniform shift cancels inside softmax, so the bias is dropped from the
    numeric path (making shift inertness bit-exact) and its gradient is the
    analytic value: identically zero.
    """
    p = softmax_row(x.value)

    def vjp_x(g):
        q = float(np.dot(g, p))
        return p * (g - q)

    return Node(p, parents=((x, vjp_x), (bias, lambda g: np.zeros_like(bias.value))))


def dot(a: Node, b: Node) -> Node:
    out = np.dot(a.value, b.value)
    return Node(out, parents=((a, lambda g: g * b.value), (b, lambda g: g * a.value)))


def add(a: Node, b: Node) -> Node:
    return Node(a.value + b.value, parents=((a, lambda g: g), (b, lambda g: g)))


def stack(nodes) -> Node:
    """Stack scalar nodes into a vector node."""
    nodes = list(nodes)
    out = np.array([float(n.value) for n in nodes])
    parents = tuple(
        (n, (lambda g, i=i: g[i])) for i, n in enumerate(nodes)
    )
    return Node(out, parents=parents)


def cross_entropy_node(logits: Node, target: int) -> Node:
    p = softmax_row(logits.value)
    loss = cross_entropy(logits.value, target)

    def vjp(g):
        grad = p.copy()
        grad[target] -= 1.0
        return g * grad

    return Node(loss, parents=((logits, vjp),))


def backward(loss: Node) -> None:
    """Reverse accumulation from a scalar loss into Param.grad buffers.

    Parameter gradients add to whatever is already in .grad, so per-example
    losses in a batch accumulate in the order they are processed.
    """
    if loss.value.ndim != 0:
        raise QaError(f"backward expects a scalar loss, got shape {loss.value.shape}")

    topo: list[Node] = []
    seen: set[int] = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack_.append((parent, False))

    loss.grad = np.ones(())
    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contribution = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contribution
        if node.param is not None:
            node.param.grad += node.grad


# ---------------------------------------------------------------------------
# Optimization and verification
# ---------------------------------------------------------------------------


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def finite_diff_grad(f, params, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradients of a scalar function of Param values.

    f is called with no arguments and must read the current Param values;
    it must be deterministic and side-effect free.
    """
    grads = {}
    for p in params:
        grad = np.zeros_like(p.value)
        flat_value = p.value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat_value.size):
            original = flat_value[i]
            flat_value[i] = original + eps
            hi = f()
            flat_value[i] = original - eps
            lo = f()
            flat_value[i] = original
            flat_grad[i] = (hi - lo) / (2.0 * eps)
        grads[p.name] = grad
    return grads
