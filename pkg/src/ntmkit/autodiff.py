"""Reverse-mode automatic differentiation over dense float64 tensors.

A small define-by-run tape: while a Tape is active (``with Tape() as t:``),
every operation appends one node in execution order, so the node list is
already topologically sorted and the backward pass is a single reverse
sweep.  With no active tape the same functions run forward-only, which is
what evaluation workers use.

Everything is float64.  Broadcasting is deliberately limited to size-1
(scalar) operands; that is all the machine needs.

A tape and the tensors created under it belong to one thread of execution.
Leaf parameters may be shared read-only across processes.
"""

import numpy as np

_TAPE_STACK = []

_TINY = 1e-300  # guards divisions by exact-zero norms


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class Tensor:
    """Dense float64 array plus an accumulated gradient.

    ``grad`` is lazily allocated; ``None`` means "no gradient yet", which
    reads as zero.  Gradients accumulate across backward passes until the
    owner resets them.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __repr__(self):
        return "Tensor(shape=%r)" % (self.data.shape,)


def _scalar_error(t):
    raise ValueError("expected a scalar tensor, got shape %r" % (t.data.shape,))


def tensor(data):
    """Wrap data in a leaf Tensor (no tape node)."""
    return Tensor(data)


class Tape:
    """Execution-ordered record of differentiable operations.

    Each node is ``(output, inputs, pull)`` where ``pull(g)`` routes the
    output gradient ``g`` into the operands.  Nodes are appended as the
    forward pass runs, so operands always precede their consumers.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, pull):
        self.nodes.append((out, inputs, pull))

    def zero_grads(self):
        """Reset the gradient of every tensor this tape touches."""
        for out, inputs, _ in self.nodes:
            out.grad = None
            for t in inputs:
                t.grad = None


def _record(out, inputs, pull):
    if _TAPE_STACK:
        _TAPE_STACK[-1].record(out, inputs, pull)
    return out


def backward(tape, loss):
    """Accumulate d(loss)/d(leaf) for every tensor recorded on ``tape``.

    ``loss`` must be a scalar (size-1) tensor.  Deterministic: the sweep is
    a plain reverse iteration over the recorded node list, so repeating it
    after a gradient reset reproduces every gradient bit for bit.
    """
    if loss.data.size != 1:
        raise ValueError("backward needs a scalar loss, got shape %r" % (loss.data.shape,))
    loss.accumulate(np.ones_like(loss.data))
    for out, _inputs, pull in reversed(tape.nodes):
        if out.grad is not None:
            pull(out.grad)


# ---------------------------------------------------------------------
# elementwise binary ops (size-1 broadcasting only)
# ---------------------------------------------------------------------

def _check_binary(a, b):
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(
            "operand shapes %r and %r do not match" % (a.data.shape, b.data.shape)
        )


def _unbroadcast(g, shape):
    # reduce an output gradient back onto a (possibly size-1) operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def add(a, b):
    _check_binary(a, b)
    out = Tensor(a.data + b.data)

    def pull(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return _record(out, (a, b), pull)


def sub(a, b):
    _check_binary(a, b)
    out = Tensor(a.data - b.data)

    def pull(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(-g, b.data.shape))

    return _record(out, (a, b), pull)


def mul(a, b):
    _check_binary(a, b)
    out = Tensor(a.data * b.data)

    def pull(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), pull)


def div(a, b):
    _check_binary(a, b)
    out = Tensor(a.data / b.data)

    def pull(g):
        a.accumulate(_unbroadcast(g / b.data, a.data.shape))
        b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _record(out, (a, b), pull)


# ---------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------

def sigmoid(x):
    # tanh form is stable for large |x| in both directions
    out = Tensor(0.5 * (1.0 + np.tanh(0.5 * x.data)))

    def pull(g):
        x.accumulate(g * out.data * (1.0 - out.data))

    return _record(out, (x,), pull)


def tanh(x):
    out = Tensor(np.tanh(x.data))

    def pull(g):
        x.accumulate(g * (1.0 - out.data * out.data))

    return _record(out, (x,), pull)


def softplus(x):
    out = Tensor(np.logaddexp(0.0, x.data))

    def pull(g):
        x.accumulate(g * 0.5 * (1.0 + np.tanh(0.5 * x.data)))

    return _record(out, (x,), pull)


def oneplus(x):
    """1 + softplus(x); maps the reals onto (1, inf)."""
    out = Tensor(1.0 + np.logaddexp(0.0, x.data))

    def pull(g):
        x.accumulate(g * 0.5 * (1.0 + np.tanh(0.5 * x.data)))

    return _record(out, (x,), pull)


def exp(x):
    out = Tensor(np.exp(x.data))

    def pull(g):
        x.accumulate(g * out.data)

    return _record(out, (x,), pull)


def log(x):
    if np.any(x.data <= 0.0):
        raise ValueError("log of a non-positive entry")
    out = Tensor(np.log(x.data))

    def pull(g):
        x.accumulate(g / x.data)

    return _record(out, (x,), pull)


def pow_scalar(base, exponent):
    """Entrywise ``base ** exponent`` with a scalar-tensor exponent."""
    if exponent.data.size != 1:
        raise ShapeError("pow_scalar exponent must be a scalar tensor")
    e = float(exponent.data.reshape(-1)[0])
    out = Tensor(base.data ** e)

    def pull(g):
        base.accumulate(g * e * base.data ** (e - 1.0))
        # d(out)/d(e) = out * ln(base); zero-valued bases contribute nothing
        safe = np.where(base.data > 0.0, np.log(np.maximum(base.data, _TINY)), 0.0)
        exponent.accumulate(_unbroadcast(g * out.data * safe, exponent.data.shape))

    return _record(out, (base, exponent), pull)


def clip(x, lo, hi):
    """Clamp to [lo, hi]; gradient passes only where x was inside the range."""
    out = Tensor(np.clip(x.data, lo, hi))

    def pull(g):
        inside = (x.data >= lo) & (x.data <= hi)
        x.accumulate(g * inside)

    return _record(out, (x,), pull)


# ---------------------------------------------------------------------
# reductions and rearrangement
# ---------------------------------------------------------------------

def tsum(x):
    """Sum of all entries, as a 0-d scalar tensor."""
    out = Tensor(x.data.sum())

    def pull(g):
        x.accumulate(np.broadcast_to(g, x.data.shape))

    return _record(out, (x,), pull)


def concat(a, b):
    """Concatenate two 1-d tensors."""
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError("concat expects 1-d operands")
    na = a.data.shape[0]
    out = Tensor(np.concatenate([a.data, b.data]))

    def pull(g):
        a.accumulate(g[:na])
        b.accumulate(g[na:])

    return _record(out, (a, b), pull)


def stack_rows(rows):
    """Stack equal-length 1-d tensors into a matrix, one per row."""
    rows = list(rows)
    if not rows:
        raise ShapeError("stack_rows needs at least one row")
    out = Tensor(np.stack([r.data for r in rows]))

    def pull(g):
        for i, r in enumerate(rows):
            r.accumulate(g[i])

    return _record(out, tuple(rows), pull)


# ---------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-d operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            "inner dimensions disagree: %r x %r" % (a.data.shape, b.data.shape)
        )
    out = Tensor(a.data @ b.data)

    def pull(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    return _record(out, (a, b), pull)


def matvec(a, x):
    """Matrix [m x k] times vector [k] -> vector [m]."""
    if a.data.ndim != 2 or x.data.ndim != 1 or a.data.shape[1] != x.data.shape[0]:
        raise ShapeError(
            "matvec shapes disagree: %r x %r" % (a.data.shape, x.data.shape)
        )
    out = Tensor(a.data @ x.data)

    def pull(g):
        a.accumulate(np.outer(g, x.data))
        x.accumulate(a.data.T @ g)

    return _record(out, (a, x), pull)


def vecmat(v, a):
    """Row vector [n] times matrix [n x m] -> vector [m] (weighted row sum)."""
    if v.data.ndim != 1 or a.data.ndim != 2 or v.data.shape[0] != a.data.shape[0]:
        raise ShapeError(
            "vecmat shapes disagree: %r x %r" % (v.data.shape, a.data.shape)
        )
    out = Tensor(v.data @ a.data)

    def pull(g):
        v.accumulate(a.data @ g)
        a.accumulate(np.outer(v.data, g))

    return _record(out, (v, a), pull)


def outer(u, v):
    """Outer product of two 1-d tensors -> matrix [len(u) x len(v)]."""
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise ShapeError("outer expects 1-d operands")
    out = Tensor(np.outer(u.data, v.data))

    def pull(g):
        u.accumulate(g @ v.data)
        v.accumulate(g.T @ u.data)

    return _record(out, (u, v), pull)


# ---------------------------------------------------------------------
# attention primitives
# ---------------------------------------------------------------------

def softmax(x):
    """Softmax of a 1-d tensor, computed with max subtraction."""
    if x.data.ndim != 1:
        raise ShapeError("softmax expects a 1-d tensor")
    z = np.exp(x.data - x.data.max())
    out = Tensor(z / z.sum())

    def pull(g):
        x.accumulate(out.data * (g - np.dot(g, out.data)))

    return _record(out, (x,), pull)


def cosine_similarity(u, v, eps=1e-8):
    """u.v / (|u||v| + eps) as a 0-d scalar tensor."""
    if u.data.shape != v.data.shape or u.data.ndim != 1:
        raise ShapeError("cosine_similarity expects equal-length 1-d tensors")
    s = float(np.dot(u.data, v.data))
    nu = float(np.linalg.norm(u.data))
    nv = float(np.linalg.norm(v.data))
    d = nu * nv + eps
    out = Tensor(s / d)

    def pull(g):
        c = float(out.data)
        u.accumulate(g * (v.data / d - c * nv * u.data / (max(nu, _TINY) * d)))
        v.accumulate(g * (u.data / d - c * nu * v.data / (max(nv, _TINY) * d)))

    return _record(out, (u, v), pull)


def cosine_rows(m, k, eps=1e-8):
    """Cosine similarity of a key [M] against every row of a matrix [N x M].

    Batched form of :func:`cosine_similarity`; one tape node for all N rows.
    """
    if m.data.ndim != 2 or k.data.ndim != 1 or m.data.shape[1] != k.data.shape[0]:
        raise ShapeError(
            "cosine_rows shapes disagree: %r x %r" % (m.data.shape, k.data.shape)
        )
    u = m.data @ k.data                        # row dot products
    nm = np.linalg.norm(m.data, axis=1)        # row norms
    q = float(np.linalg.norm(k.data))
    d = nm * q + eps
    out = Tensor(u / d)

    def pull(g):
        gd = g / d
        k.accumulate(m.data.T @ gd - (k.data / max(q, _TINY)) * np.dot(gd, out.data * nm))
        m.accumulate(
            np.outer(gd, k.data)
            - ((gd * out.data * q) / np.maximum(nm, _TINY))[:, None] * m.data
        )

    return _record(out, (m, k), pull)


def circular_convolve(w, s):
    """Circular convolution of w [n] with a shift distribution s [k], k odd.

    s is indexed by offsets -(k//2) .. +(k//2); out[i] = sum_j w[(i - o_j) mod n] s[j].
    Preserves the mass of w whenever s sums to one.
    """
    if s.data.ndim != 1 or w.data.ndim != 1:
        raise ShapeError("circular_convolve expects 1-d operands")
    kk = s.data.shape[0]
    if kk % 2 == 0:
        raise ValueError("shift distribution must have odd length, got %d" % kk)
    offsets = range(-(kk // 2), kk // 2 + 1)
    acc = np.zeros_like(w.data)
    for j, off in enumerate(offsets):
        acc += s.data[j] * np.roll(w.data, off)
    out = Tensor(acc)

    def pull(g):
        dw = np.zeros_like(w.data)
        ds = np.zeros_like(s.data)
        for j, off in enumerate(offsets):
            dw += s.data[j] * np.roll(g, -off)
            ds[j] = np.dot(g, np.roll(w.data, off))
        w.accumulate(dw)
        s.accumulate(ds)

    return _record(out, (w, s), pull)


def sharpen(w, gamma):
    """w ** gamma, renormalized to sum one.  gamma is a scalar tensor >= 1.

    Internally rescales w by its maximum before exponentiating; the result
    is scale-invariant, so this only buys numerical head-room for large
    gamma without changing values or gradients.
    """
    if w.data.ndim != 1:
        raise ShapeError("sharpen expects a 1-d weighting")
    if gamma.data.size != 1:
        raise ShapeError("sharpen exponent must be a scalar tensor")
    c = float(w.data.max())
    if c <= 0.0:
        raise ValueError("sharpen needs at least one positive entry")
    ga = float(gamma.data.reshape(-1)[0])
    v = w.data / c
    p = v ** ga
    ssum = p.sum()
    out = Tensor(p / ssum)

    def pull(g):
        # d(out)/d(w) via v = w / max(w); the max term drops out because
        # the map is homogeneous of degree zero in w
        gv = (ga / ssum) * v ** (ga - 1.0) * (g - np.dot(g, out.data))
        w.accumulate(gv / c)
        lnv = np.where(v > 0.0, np.log(np.maximum(v, _TINY)), 0.0)
        dg = np.dot(g * out.data, lnv - np.dot(out.data, lnv))
        gamma.accumulate(np.full(gamma.data.shape, dg))

    return _record(out, (w, gamma), pull)


# ---------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------

def grad_check(f, params, h=1e-5):
    """Max relative error between tape gradients and central differences.

    ``f`` is a no-argument callable returning a scalar Tensor; it must be a
    deterministic function of ``params`` (a Tensor or list of Tensors).
    The finite-difference side never touches the tape: each probe runs
    ``f`` forward-only with one component of one parameter nudged by +-h.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if isinstance(params, Tensor):
        params = [params]
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    analytic = [np.array(p.grad) if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            denom = max(abs(an_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(an_flat[i] - numeric) / denom)
    return worst
