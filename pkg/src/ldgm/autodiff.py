"""Tape-based reverse-mode differentiation plus forward-mode Taylor jets.

The tape records every elementary operation on float64 arrays.  A tracked
value is a handle into the tape; a 0-d array is the plain scalar case, and
batched evaluation stores one array per node (same recorded computation,
evaluated at many sample points at once).  Reverse mode gives exact
gradients with respect to nodes flagged as parameters.  Jets carry
truncated Taylor coefficients along one input direction; because each
coefficient is itself a tape node, any derivative a jet produces remains
differentiable with respect to the parameters (one reverse pass suffices).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidNodeError, SmoothnessError

JET_ORDER_CAP = 6

ACTIVATION_KINDS = ("tanh", "sigmoid", "elu", "identity", "relu")

# kink margin below which elu/relu points count as sitting on the corner
_KINK_MARGIN = 1e-8


class Node:
    __slots__ = ("op", "inputs", "aux", "value", "is_param")

    def __init__(self, op, inputs, aux, value, is_param=False):
        self.op = op
        self.inputs = inputs
        self.aux = aux
        self.value = value
        self.is_param = is_param


class Tape:
    """Append-only record of a computation.

    Node ids are topologically ordered by construction: an operation can
    only reference nodes that already exist.  A tape is single-writer;
    concurrent evaluation uses one tape per worker.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def _push(self, op, inputs, aux, value, is_param=False) -> "Var":
        self.nodes.append(Node(op, inputs, aux, value, is_param))
        return Var(self, len(self.nodes) - 1)

    def const(self, value) -> "Var":
        return self._push("const", (), None, np.asarray(value, dtype=np.float64))

    def input(self, value) -> "Var":
        """A leaf that is differentiable but not a parameter (e.g. x, t)."""
        return self._push("input", (), None, np.asarray(value, dtype=np.float64))

    def param(self, value) -> "Var":
        return self._push("param", (), None, np.asarray(value, dtype=np.float64), is_param=True)

    def __len__(self):
        return len(self.nodes)


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: Tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    def item(self) -> float:
        return float(self.value)

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic ------------------------------------------------------

    def _binary(self, op, other, fn):
        t = self.tape
        if isinstance(other, Var):
            if other.tape is not t:
                raise InvalidNodeError("operands recorded on different tapes")
            return t._push(op, (self.idx, other.idx), None, fn(self.value, other.value))
        c = np.asarray(other, dtype=np.float64)
        return t._push(op + "c", (self.idx,), c, fn(self.value, c))

    def __add__(self, other):
        return self._binary("add", other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self._binary("sub", other, np.subtract)
        return self.__add__(-np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        c = np.asarray(other, dtype=np.float64)
        return self.tape._push("rsubc", (self.idx,), c, c - self.value)

    def __mul__(self, other):
        return self._binary("mul", other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self._binary("div", other, np.divide)
        return self.__mul__(1.0 / np.asarray(other, dtype=np.float64))

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=np.float64)
        return self.tape._push("rdivc", (self.idx,), c, c / self.value)

    def __neg__(self):
        return self.tape._push("neg", (self.idx,), None, -self.value)

    def __pow__(self, p):
        p = float(p)
        return self.tape._push("powc", (self.idx,), p, self.value ** p)


def _unary(op, x: Var, value, aux=None) -> Var:
    return x.tape._push(op, (x.idx,), aux, value)


def exp(x: Var) -> Var:
    return _unary("exp", x, np.exp(x.value))


def log(x: Var) -> Var:
    return _unary("log", x, np.log(x.value))


def sqrt(x: Var) -> Var:
    return _unary("sqrt", x, np.sqrt(x.value))


def tanh(x: Var) -> Var:
    return _unary("tanh", x, np.tanh(x.value))


def sigmoid(x: Var) -> Var:
    return _unary("sigmoid", x, 0.5 * (np.tanh(0.5 * x.value) + 1.0))


def sin(x: Var) -> Var:
    return _unary("sin", x, np.sin(x.value))


def cos(x: Var) -> Var:
    return _unary("cos", x, np.cos(x.value))


def elu(x: Var, alpha: float = 1.0) -> Var:
    v = x.value
    return _unary("elu", x, np.where(v > 0, v, alpha * np.expm1(v)), float(alpha))


def relu(x: Var) -> Var:
    return _unary("relu", x, np.maximum(x.value, 0.0))


def where(mask: np.ndarray, a: Var, b: Var) -> Var:
    """Elementwise select with a constant (non-differentiated) mask."""
    if a.tape is not b.tape:
        raise InvalidNodeError("operands recorded on different tapes")
    mask = np.asarray(mask, dtype=bool)
    return a.tape._push("where", (a.idx, b.idx), mask, np.where(mask, a.value, b.value))


def matmul(a: Var, b: Var) -> Var:
    if a.tape is not b.tape:
        raise InvalidNodeError("operands recorded on different tapes")
    return a.tape._push("matmul", (a.idx, b.idx), None, a.value @ b.value)


def affine(x: Var, w: Var, b: Var) -> Var:
    """x @ w + b as one node (the network's layer primitive)."""
    if x.tape is not w.tape or x.tape is not b.tape:
        raise InvalidNodeError("operands recorded on different tapes")
    return x.tape._push("affine", (x.idx, w.idx, b.idx), None, x.value @ w.value + b.value)


def column(y: Var, j: int) -> Var:
    """Extract column j of a 2-d node."""
    return y.tape._push("col", (y.idx,), int(j), y.value[:, j])


def total(x: Var) -> Var:
    return _unary("sum", x, np.asarray(np.sum(x.value)))


def mean(x: Var) -> Var:
    return _unary("mean", x, np.asarray(np.mean(x.value)))


def var_activation(x: Var, kind: str, alpha: float = 1.0) -> Var:
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "elu":
        return elu(x, alpha)
    if kind == "identity":
        return x
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation kind {kind!r}")


# -- reverse mode ---------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(tape: Tape, output: Var, wrt=None) -> dict[int, np.ndarray]:
    """Adjoints of `output` for every parameter node (plus any `wrt` vars).

    Shared subexpressions accumulate by summation in a fixed reverse order,
    so two identical calls produce bit-identical gradients.  Nodes with no
    path to the output get an explicit zero gradient.
    """
    if output.tape is not tape or not (0 <= output.idx < len(tape.nodes)):
        raise InvalidNodeError("output is not a node on this tape")

    nodes = tape.nodes
    adj: list = [None] * (output.idx + 1)
    adj[output.idx] = np.ones_like(nodes[output.idx].value)

    def acc(i, g):
        a = adj[i]
        adj[i] = g if a is None else a + g

    for i in range(output.idx, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = nodes[i]
        op = node.op
        if op in ("const", "input", "param"):
            continue
        ins = node.inputs
        if op == "affine":
            x, w, b = ins
            acc(x, g @ nodes[w].value.T)
            acc(w, nodes[x].value.T @ g)
            acc(b, _unbroadcast(g, nodes[b].value.shape))
        elif op == "add":
            a, b = ins
            acc(a, _unbroadcast(g, nodes[a].value.shape))
            acc(b, _unbroadcast(g, nodes[b].value.shape))
        elif op == "sub":
            a, b = ins
            acc(a, _unbroadcast(g, nodes[a].value.shape))
            acc(b, _unbroadcast(-g, nodes[b].value.shape))
        elif op == "mul":
            a, b = ins
            acc(a, _unbroadcast(g * nodes[b].value, nodes[a].value.shape))
            acc(b, _unbroadcast(g * nodes[a].value, nodes[b].value.shape))
        elif op == "div":
            a, b = ins
            bv = nodes[b].value
            acc(a, _unbroadcast(g / bv, nodes[a].value.shape))
            acc(b, _unbroadcast(-g * nodes[a].value / (bv * bv), nodes[b].value.shape))
        elif op == "addc":
            acc(ins[0], _unbroadcast(g, nodes[ins[0]].value.shape))
        elif op == "rsubc":
            acc(ins[0], _unbroadcast(-g, nodes[ins[0]].value.shape))
        elif op == "mulc":
            acc(ins[0], _unbroadcast(g * node.aux, nodes[ins[0]].value.shape))
        elif op == "rdivc":
            xv = nodes[ins[0]].value
            acc(ins[0], _unbroadcast(-g * node.aux / (xv * xv), nodes[ins[0]].value.shape))
        elif op == "neg":
            acc(ins[0], -g)
        elif op == "powc":
            xv = nodes[ins[0]].value
            acc(ins[0], g * node.aux * xv ** (node.aux - 1.0))
        elif op == "exp":
            acc(ins[0], g * node.value)
        elif op == "log":
            acc(ins[0], g / nodes[ins[0]].value)
        elif op == "sqrt":
            acc(ins[0], g * 0.5 / node.value)
        elif op == "tanh":
            acc(ins[0], g * (1.0 - node.value * node.value))
        elif op == "sigmoid":
            acc(ins[0], g * node.value * (1.0 - node.value))
        elif op == "sin":
            acc(ins[0], g * np.cos(nodes[ins[0]].value))
        elif op == "cos":
            acc(ins[0], -g * np.sin(nodes[ins[0]].value))
        elif op == "elu":
            xv = nodes[ins[0]].value
            acc(ins[0], g * np.where(xv > 0, 1.0, node.value + node.aux))
        elif op == "relu":
            acc(ins[0], g * (nodes[ins[0]].value > 0))
        elif op == "where":
            a, b = ins
            acc(a, _unbroadcast(g * node.aux, nodes[a].value.shape))
            acc(b, _unbroadcast(g * ~node.aux, nodes[b].value.shape))
        elif op == "matmul":
            a, b = ins
            acc(a, g @ nodes[b].value.T)
            acc(b, nodes[a].value.T @ g)
        elif op == "col":
            z = np.zeros_like(nodes[ins[0]].value)
            z[:, node.aux] = g
            acc(ins[0], z)
        elif op == "sum":
            acc(ins[0], np.broadcast_to(g, nodes[ins[0]].value.shape))
        elif op == "mean":
            xv = nodes[ins[0]].value
            acc(ins[0], np.broadcast_to(g / xv.size, xv.shape))
        else:  # pragma: no cover
            raise NotImplementedError(op)

    out: dict[int, np.ndarray] = {}
    for i, node in enumerate(nodes):
        if node.is_param:
            g = adj[i] if i <= output.idx else None
            out[i] = g if g is not None else np.zeros_like(node.value)
    if wrt is not None:
        for v in wrt:
            if v.tape is not tape:
                raise InvalidNodeError("wrt var is not on this tape")
            g = adj[v.idx] if v.idx <= output.idx else None
            out[v.idx] = g if g is not None else np.zeros_like(v.value)
    return out


def replay(tape: Tape) -> bool:
    """Recompute every node from the record; True iff all values match bit-for-bit."""
    vals: list[np.ndarray] = []
    for node in tape.nodes:
        op, ins, aux = node.op, node.inputs, node.aux
        if op in ("const", "input", "param"):
            v = node.value
        elif op == "add":
            v = np.add(vals[ins[0]], vals[ins[1]])
        elif op == "sub":
            v = np.subtract(vals[ins[0]], vals[ins[1]])
        elif op == "mul":
            v = np.multiply(vals[ins[0]], vals[ins[1]])
        elif op == "div":
            v = np.divide(vals[ins[0]], vals[ins[1]])
        elif op == "addc":
            v = np.add(vals[ins[0]], aux)
        elif op == "rsubc":
            v = aux - vals[ins[0]]
        elif op == "mulc":
            v = np.multiply(vals[ins[0]], aux)
        elif op == "rdivc":
            v = aux / vals[ins[0]]
        elif op == "neg":
            v = -vals[ins[0]]
        elif op == "powc":
            v = vals[ins[0]] ** aux
        elif op == "exp":
            v = np.exp(vals[ins[0]])
        elif op == "log":
            v = np.log(vals[ins[0]])
        elif op == "sqrt":
            v = np.sqrt(vals[ins[0]])
        elif op == "tanh":
            v = np.tanh(vals[ins[0]])
        elif op == "sigmoid":
            v = 0.5 * (np.tanh(0.5 * vals[ins[0]]) + 1.0)
        elif op == "sin":
            v = np.sin(vals[ins[0]])
        elif op == "cos":
            v = np.cos(vals[ins[0]])
        elif op == "elu":
            xv = vals[ins[0]]
            v = np.where(xv > 0, xv, aux * np.expm1(xv))
        elif op == "relu":
            v = np.maximum(vals[ins[0]], 0.0)
        elif op == "where":
            v = np.where(aux, vals[ins[0]], vals[ins[1]])
        elif op == "matmul":
            v = vals[ins[0]] @ vals[ins[1]]
        elif op == "affine":
            v = vals[ins[0]] @ vals[ins[1]] + vals[ins[2]]
        elif op == "col":
            v = vals[ins[0]][:, aux]
        elif op == "sum":
            v = np.asarray(np.sum(vals[ins[0]]))
        elif op == "mean":
            v = np.asarray(np.mean(vals[ins[0]]))
        else:  # pragma: no cover
            raise NotImplementedError(op)
        vals.append(v)
        a, b = np.asarray(v), node.value
        if a.shape != b.shape or a.tobytes() != b.tobytes():
            return False
    return True


# -- forward-mode jets ----------------------------------------------------


class Jet:
    """Truncated Taylor coefficients of a value along one input direction.

    coeffs[j] = (1/j!) * d^j f / ds^j, each coefficient a tape node.  An
    order-0 jet behaves exactly like its primal value; products follow the
    Cauchy convolution of the truncated algebra.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = list(coeffs)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def primal(self) -> Var:
        return self.coeffs[0]

    def derivative(self, j: int) -> Var:
        """d^j f/ds^j as a tape node (coefficient times j!)."""
        return self.coeffs[j] * float(math.factorial(j)) if j > 1 else self.coeffs[j]

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError("jet orders differ")
            return other
        tape = self.coeffs[0].tape
        v = other if isinstance(other, Var) else tape.const(other)
        zeros = [tape.const(np.zeros_like(v.value)) for _ in range(self.order)]
        return Jet([v] + zeros)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet([a + b for a, b in zip(self.coeffs, other.coeffs)])
        return Jet([self.coeffs[0] + other] + self.coeffs[1:])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet([a - b for a, b in zip(self.coeffs, other.coeffs)])
        return Jet([self.coeffs[0] - other] + self.coeffs[1:])

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet([c * other for c in self.coeffs])
        if other.order != self.order:
            raise ValueError("jet orders differ")
        a, b = self.coeffs, other.coeffs
        out = []
        for j in range(len(a)):
            s = a[0] * b[j]
            for i in range(1, j + 1):
                s = s + a[i] * b[j - i]
            out.append(s)
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet([c * (1.0 / np.asarray(other, dtype=np.float64)) for c in self.coeffs])
        if other.order != self.order:
            raise ValueError("jet orders differ")
        a, b = self.coeffs, other.coeffs
        out = [a[0] / b[0]]
        for j in range(1, len(a)):
            s = a[j]
            for i in range(1, j + 1):
                s = s - b[i] * out[j - i]
            out.append(s / b[0])
        return Jet(out)


def jet_lift(x: Var, direction_seed: float, order: int) -> Jet:
    """Seed a jet: coeffs (x, seed, 0, ..., 0)."""
    if order < 0:
        raise ValueError("jet order must be >= 0")
    if order == 0:
        return Jet([x])
    tape = x.tape
    shape = x.value.shape
    seed = tape.const(np.full(shape, float(direction_seed)))
    zeros = [tape.const(np.zeros(shape)) for _ in range(order - 1)]
    return Jet([x, seed] + zeros)


def _compose(x: Jet, y0: Var, gcoeff) -> Jet:
    """Univariate composition y = f(x) given y0 and the coefficients of f'(x(s)).

    gcoeff(m, ys) returns coefficient m of the derivative series, built from
    the output coefficients computed so far; the standard recurrence is
        j * y_j = sum_{i=1..j} i * x_i * g_{j-i}.
    """
    k = x.order
    xs = x.coeffs
    ys = [y0]
    gs: list[Var] = []
    for j in range(1, k + 1):
        gs.append(gcoeff(j - 1, ys))
        s = xs[1] * gs[j - 1]
        for i in range(2, j + 1):
            s = s + float(i) * xs[i] * gs[j - i]
        ys.append(s if j == 1 else s * (1.0 / j))
    return Jet(ys)


def _conv(a, b, m):
    s = a[0] * b[m]
    for i in range(1, m + 1):
        s = s + a[i] * b[m - i]
    return s


def apply_activation(x: Jet, kind: str, alpha: float = 1.0) -> Jet:
    """Compose an activation with a jet via the truncated-Taylor recurrences."""
    k = x.order
    if kind == "identity":
        return x
    if kind == "tanh":
        # y' = 1 - y^2 builds each coefficient from the lower ones
        y0 = tanh(x.coeffs[0])
        return _compose(x, y0, lambda m, ys: (1.0 - _conv(ys, ys, m)) if m == 0 else -_conv(ys, ys, m))
    if kind == "sigmoid":
        y0 = sigmoid(x.coeffs[0])
        return _compose(x, y0, lambda m, ys: ys[m] - _conv(ys, ys, m))
    if kind == "elu":
        x0 = x.coeffs[0].value
        if k >= 2 or (k >= 1 and alpha != 1.0):
            if np.any(np.abs(x0) < _KINK_MARGIN):
                raise SmoothnessError(
                    f"elu jet of order {k} evaluated at the kink (|x| < {_KINK_MARGIN:g})")
        mask = x0 > 0
        pos = x
        e = apply_exp(x)
        neg = Jet([e.coeffs[0] * alpha - alpha] + [c * alpha for c in e.coeffs[1:]])
        return Jet([where(mask, p, n) for p, n in zip(pos.coeffs, neg.coeffs)])
    if kind == "relu":
        if k >= 2:
            raise SmoothnessError("relu supports jet order <= 1")
        y0 = relu(x.coeffs[0])
        if k == 0:
            return Jet([y0])
        mask = (x.coeffs[0].value > 0).astype(np.float64)
        return Jet([y0, x.coeffs[1] * mask])
    raise ValueError(f"unknown activation kind {kind!r}")


def apply_exp(x: Jet) -> Jet:
    y0 = exp(x.coeffs[0])
    return _compose(x, y0, lambda m, ys: ys[m])


def apply_sin(x: Jet) -> Jet:
    return _sin_cos(x)[0]


def apply_cos(x: Jet) -> Jet:
    return _sin_cos(x)[1]


def _sin_cos(x: Jet):
    # paired recurrence: s' = c x', c' = -s x'
    k = x.order
    xs = x.coeffs
    ss = [sin(xs[0])]
    cs = [cos(xs[0])]
    for j in range(1, k + 1):
        s = xs[1] * cs[j - 1]
        c = xs[1] * ss[j - 1]
        for i in range(2, j + 1):
            s = s + float(i) * xs[i] * cs[j - i]
            c = c + float(i) * xs[i] * ss[j - i]
        ss.append(s if j == 1 else s * (1.0 / j))
        cs.append(c * (-1.0 / j))
    return Jet(ss), Jet(cs)
