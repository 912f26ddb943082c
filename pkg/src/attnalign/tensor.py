"""Dense float64 arrays with reverse-mode differentiation.

The substrate is deliberately small: a Tensor is a box around a numpy
array, and every differentiable operation appends a Node to the active
Tape.  Nodes are recorded in creation order, which is already a
topological order, so the backward pass is a single reverse sweep over
the node list.  Each node keeps a recompute closure so the tape can be
replayed and verified bit-exactly.

Gradients of Parameters accumulate into their persistent .grad buffers
and survive across backward calls until sgd_step (or reset_gradients)
zeroes them.  Gradients of intermediate tensors live in the tape and
can be inspected with Tape.grad().
"""

import numpy as np

from attnalign import kernels
from attnalign.errors import (
    ConfigError,
    ContractError,
    InvalidMaskError,
    ShapeError,
)

INIT_RANGE = 0.08


class Tensor:
    """A dense float64 array participating in taped computation."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named leaf tensor with a persistent gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, name, value):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Node:
    """One recorded primitive application: inputs, outputs, adjoint."""

    __slots__ = ("op", "inputs", "outputs", "backward", "recompute")

    def __init__(self, op, inputs, outputs, backward, recompute):
        self.op = op
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward
        self.recompute = recompute


_TAPES = []


def _active():
    return _TAPES[-1] if _TAPES else None


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager around the forward computation, then call
    backward() on a scalar loss produced inside it.
    """

    def __init__(self):
        self.nodes = []
        self._produced = set()
        self._grads = {}

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        assert popped is self
        return False

    def _record(self, op, inputs, outputs, backward, recompute):
        self.nodes.append(Node(op, inputs, outputs, backward, recompute))
        for out in outputs:
            self._produced.add(id(out))

    def backward(self, loss):
        """Accumulate d(loss)/d(input) into every reachable Parameter.

        Multiple backward calls keep summing into Parameter.grad; the
        per-tensor gradients seen by Tape.grad() are from the latest
        call only.
        """
        if not isinstance(loss, Tensor):
            raise ContractError("backward expects a Tensor loss")
        if loss.data.size != 1:
            raise ContractError(
                f"loss must be scalar, got shape {loss.data.shape}")
        if id(loss) not in self._produced:
            raise ContractError("loss was not produced through this tape")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            out_grads = [grads.get(id(o)) for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [
                g if g is not None else np.zeros_like(o.data)
                for g, o in zip(out_grads, node.outputs)
            ]
            in_grads = node.backward(*out_grads)
            for tensor, grad in zip(node.inputs, in_grads):
                if grad is None:
                    continue
                if isinstance(tensor, Parameter):
                    tensor.grad += grad
                else:
                    key = id(tensor)
                    prev = grads.get(key)
                    grads[key] = grad if prev is None else prev + grad
        self._grads = grads

    def grad(self, tensor):
        """Gradient of the last backward's loss w.r.t. a tensor."""
        if isinstance(tensor, Parameter):
            return tensor.grad
        return self._grads.get(id(tensor))

    def replay(self):
        """Recompute every node forward; True iff all outputs match
        the recorded values bit-exactly."""
        for node in self.nodes:
            fresh = node.recompute()
            for new, out in zip(fresh, node.outputs):
                if not np.array_equal(new, out.data):
                    return False
        return True


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _const(x):
    """Non-Tensor operands are constants: no node input, no gradient."""
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(op, a, b, forward, da, db):
    a_t = a if isinstance(a, Tensor) else None
    b_t = b if isinstance(b, Tensor) else None
    a_d = a.data if a_t is not None else _const(a)
    b_d = b.data if b_t is not None else _const(b)

    def fwd():
        return (forward(a_d if a_t is None else a_t.data,
                        b_d if b_t is None else b_t.data),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:
        inputs = tuple(t for t in (a_t, b_t) if t is not None)

        def bwd(g):
            grads = []
            if a_t is not None:
                grads.append(_unbroadcast(da(g, a_t.data, b_d if b_t is None
                                             else b_t.data), a_t.data.shape))
            if b_t is not None:
                grads.append(_unbroadcast(db(g, a_d if a_t is None
                                             else a_t.data, b_t.data),
                                          b_t.data.shape))
            return tuple(grads)

        tape._record(op, inputs, (out,), bwd, fwd)
    return out


def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def matmul(a, b):
    """Matrix product of two rank-2 tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or \
            a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul shapes do not chain: {a.data.shape} x {b.data.shape}")

    def fwd():
        return (a.data @ b.data,)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (g @ b.data.T, a.data.T @ g)

        tape._record("matmul", (a, b), (out,), bwd, fwd)
    return out


def tanh(x):
    x = as_tensor(x)

    def fwd():
        return (np.tanh(x.data),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (g * (1.0 - out.data * out.data),)

        tape._record("tanh", (x,), (out,), bwd, fwd)
    return out


def sigmoid(x):
    x = as_tensor(x)

    def fwd():
        return (1.0 / (1.0 + np.exp(-x.data)),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (g * out.data * (1.0 - out.data),)

        tape._record("sigmoid", (x,), (out,), bwd, fwd)
    return out


def sum_all(x):
    """Sum every element into a scalar (0-d) tensor."""
    x = as_tensor(x)

    def fwd():
        return (np.sum(x.data),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (np.full(x.data.shape, float(g)),)

        tape._record("sum_all", (x,), (out,), bwd, fwd)
    return out


def concat_cols(a, b):
    """Concatenate two (B, *) tensors along the last axis."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or \
            a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(
            f"concat_cols needs matching rows: {a.data.shape} vs "
            f"{b.data.shape}")
    split = a.data.shape[1]

    def fwd():
        return (np.concatenate((a.data, b.data), axis=1),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (g[:, :split], g[:, split:])

        tape._record("concat_cols", (a, b), (out,), bwd, fwd)
    return out


def embedding(table, ids):
    """Row lookup into a (V, D) table; ids is an int array."""
    if not isinstance(table, Tensor):
        raise ContractError("embedding table must be a Tensor")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ContractError(
            f"embedding id out of range for table of {table.data.shape[0]}")

    def fwd():
        return (table.data[ids],)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            return (full,)

        tape._record("embedding", (table,), (out,), bwd, fwd)
    return out


def stack_steps(tensors):
    """Stack T tensors of shape (B, D) into (B, T, D)."""
    tensors = [as_tensor(t) for t in tensors]

    def fwd():
        return (np.stack([t.data for t in tensors], axis=1),)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return tuple(g[:, t] for t in range(len(tensors)))

        tape._record("stack_steps", tuple(tensors), (out,), bwd, fwd)
    return out


def attention_scores(states, query):
    """Dot products of a (B, D) query against (B, N, D) states -> (B, N)."""
    states = as_tensor(states)
    query = as_tensor(query)
    if states.data.ndim != 3 or query.data.ndim != 2 or \
            states.data.shape[2] != query.data.shape[1]:
        raise ShapeError(
            f"attention_scores needs (B,N,D) x (B,D): {states.data.shape} "
            f"vs {query.data.shape}")

    def fwd():
        return (np.matmul(states.data, query.data[:, :, None])[:, :, 0],)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            dstates = g[:, :, None] * query.data[:, None, :]
            dquery = np.matmul(g[:, None, :], states.data)[:, 0, :]
            return (dstates, dquery)

        tape._record("attention_scores", (states, query), (out,), bwd, fwd)
    return out


def attention_context(probs, states):
    """Probability-weighted sum of (B, N, D) states -> (B, D)."""
    probs = as_tensor(probs)
    states = as_tensor(states)
    if probs.data.shape != states.data.shape[:2]:
        raise ShapeError(
            f"attention_context needs (B,N) x (B,N,D): {probs.data.shape} "
            f"vs {states.data.shape}")

    def fwd():
        return (np.matmul(probs.data[:, None, :], states.data)[:, 0, :],)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            dprobs = np.matmul(states.data, g[:, :, None])[:, :, 0]
            dstates = probs.data[:, :, None] * g[:, None, :]
            return (dprobs, dstates)

        tape._record("attention_context", (probs, states), (out,), bwd, fwd)
    return out


def masked_softmax(scores, mask):
    """Softmax over the positions where mask is true.

    Accepts a vector or a (B, N) batch with a boolean mask of the same
    shape.  Masked-out outputs are exactly zero; each row of the result
    sums to one over the surviving positions.
    """
    scores = as_tensor(scores)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.data.shape:
        raise ShapeError(
            f"mask shape {mask.shape} != scores shape {scores.data.shape}")
    squeeze = scores.data.ndim == 1
    mask2 = mask[None, :] if squeeze else mask
    if not mask2.any(axis=1).all():
        raise InvalidMaskError("softmax mask selects no position in a row")

    def fwd():
        flat = scores.data[None, :] if squeeze else scores.data
        probs = kernels.masked_softmax_forward(flat, mask2)
        return (probs[0] if squeeze else probs,)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            g2 = g[None, :] if squeeze else g
            p2 = out.data[None, :] if squeeze else out.data
            ds = kernels.masked_softmax_backward(g2, p2)
            return (ds[0] if squeeze else ds,)

        tape._record("masked_softmax", (scores,), (out,), bwd, fwd)
    return out


def lstm_gates(pre, c_prev):
    """Gate nonlinearities and cell update on (B, 4H) preactivations.

    Returns the pair (hidden, cell); the gate blocks along the last
    axis of pre are [input | forget | candidate | output].
    """
    pre = as_tensor(pre)
    c_prev = as_tensor(c_prev)
    if pre.data.ndim != 2 or c_prev.data.ndim != 2 or \
            pre.data.shape != (c_prev.data.shape[0], 4 * c_prev.data.shape[1]):
        raise ShapeError(
            f"lstm_gates needs (B,4H) x (B,H): {pre.data.shape} vs "
            f"{c_prev.data.shape}")

    h_d, c_d, gates, tanh_c = kernels.lstm_gates_forward(pre.data, c_prev.data)
    h = Tensor(h_d)
    c = Tensor(c_d)
    tape = _active()
    if tape is not None:

        def bwd(dh, dc):
            return kernels.lstm_gates_backward(dh, dc, gates, tanh_c,
                                               c_prev.data)

        def fwd():
            out = kernels.lstm_gates_forward(pre.data, c_prev.data)
            return (out[0], out[1])

        tape._record("lstm_gates", (pre, c_prev), (h, c), bwd, fwd)
    return h, c


def lstm_cell(x, h_prev, c_prev, w_x, w_h, bias):
    """One standard LSTM step.

    x: (B, D) input, h_prev/c_prev: (B, H) previous states, w_x: (D, 4H),
    w_h: (H, 4H), bias: (4H,).  Returns (hidden, cell).
    """
    pre = add(add(matmul(x, w_x), matmul(h_prev, w_h)), bias)
    return lstm_gates(pre, c_prev)


def softmax_nll(logits, targets):
    """Per-row negative log likelihood of target ids under softmax.

    logits: (B, V) tensor, targets: (B,) int array.  Returns a (B,)
    tensor of losses.
    """
    logits = as_tensor(logits)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"softmax_nll needs (B,V) logits and (B,) targets: "
            f"{logits.data.shape} vs {targets.shape}")
    if targets.size and (targets.min() < 0
                         or targets.max() >= logits.data.shape[1]):
        raise ContractError("target id out of vocabulary range")

    losses_d, probs = kernels.softmax_nll_forward(logits.data, targets)
    out = Tensor(losses_d)
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (kernels.softmax_nll_backward(g, probs, targets),)

        def fwd():
            return (kernels.softmax_nll_forward(logits.data, targets)[0],)

        tape._record("softmax_nll", (logits,), (out,), bwd, fwd)
    return out


def dropout(x, rate, rng, training):
    """Inverted dropout: zero with probability rate, scale survivors.

    Identity when training is false or rate is zero.  The survivor mask
    is drawn once from rng, so replay is exact.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)

    def fwd():
        return (x.data * keep,)

    out = Tensor(fwd()[0])
    tape = _active()
    if tape is not None:

        def bwd(g):
            return (g * keep,)

        tape._record("dropout", (x,), (out,), bwd, fwd)
    return out


def uniform_init(shape, rng):
    """Conventional small-uniform weight initialization."""
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


def reset_gradients(params):
    for p in params:
        p.grad[...] = 0.0


def gradient_norm(params):
    """Global L2 norm over all parameter gradients."""
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def sgd_step(params, learning_rate, clip_norm):
    """Clipped SGD update; zeroes gradients afterwards.

    If the global gradient norm exceeds clip_norm, every gradient is
    scaled by clip_norm / norm before the update.  Returns the pre-clip
    norm.
    """
    if learning_rate <= 0:
        raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
    if clip_norm <= 0:
        raise ConfigError(f"clip_norm must be > 0, got {clip_norm}")
    norm = gradient_norm(params)
    scale = clip_norm / norm if norm > clip_norm else 1.0
    for p in params:
        p.data -= learning_rate * scale * p.grad
        p.grad[...] = 0.0
    return norm
