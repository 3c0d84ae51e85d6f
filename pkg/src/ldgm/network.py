"""Feedforward multi-output networks with jet-lifted evaluation.

A network maps (x, t) -> m outputs through an input affine layer, L-1
hidden affine layers (L tanh/elu applications total) and a linear output
head, optionally split into a shared trunk plus per-group branches so that
groups of outputs stop sharing late-layer parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import autodiff as ad
from .autodiff import Jet, Tape, Var
from .errors import ShapeError, SmoothnessError, UnsupportedOrderError

TIME = "t"


def _tail(xs_tail, y0, g0, kind):
    """Taylor tail of an activation over a shared primal.

    xs_tail holds the input coefficients x1..xk; the output coefficients
    follow j*y_j = sum_{i=1..j} i*x_i*g_{j-i} with the derivative series g
    built from y itself (tanh: 1-y^2, sigmoid: y-y^2, exp: y).
    """
    k = len(xs_tail)
    xs = [None] + list(xs_tail)
    ys = [y0]
    gs = [g0]
    for j in range(1, k + 1):
        if j >= 2:
            m = j - 1
            if kind == "exp":
                gs.append(ys[m])
            else:
                conv = ys[0] * ys[m]
                for a in range(1, m + 1):
                    conv = conv + ys[a] * ys[m - a]
                gs.append(-conv if kind == "tanh" else ys[m] - conv)
        s = xs[1] * gs[j - 1]
        for i in range(2, j + 1):
            s = s + float(i) * xs[i] * gs[j - i]
        ys.append(s if j == 1 else s * (1.0 / j))
    return ys[1:]


@dataclass(frozen=True)
class DecoupledSpec:
    """Trunk/branch split: branch groups partition the output indices."""

    trunk_depth: int = 2
    branch_depth: int = 1
    groups: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_layers: int
    width: int
    output_dim: int
    hidden_activation: str = "tanh"
    output_activation: str | tuple[str, ...] = "identity"
    elu_alpha: float = 1.0
    decoupled: DecoupledSpec | None = None

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1 or self.output_dim < 1:
            raise ShapeError("hidden_layers, width and output_dim must all be >= 1")
        if self.decoupled is not None:
            d = self.decoupled
            seen = sorted(i for g in d.groups for i in g)
            if seen != list(range(self.output_dim)):
                raise ShapeError("decoupled groups must partition the output indices")
            if d.trunk_depth + d.branch_depth != self.hidden_layers:
                raise ShapeError("trunk_depth + branch_depth must equal hidden_layers")

    def out_activation(self, j: int) -> str:
        oa = self.output_activation
        return oa if isinstance(oa, str) else oa[j]


def _layer_plan(cfg: NetworkConfig):
    """(name, shape) pairs in serialization order."""
    n = cfg.width
    plan = [("w_in", (cfg.input_dim, n)), ("b_in", (n,))]
    if cfg.decoupled is None:
        for i in range(1, cfg.hidden_layers):
            plan += [(f"w_h{i}", (n, n)), (f"b_h{i}", (n,))]
        plan += [("w_out", (n, cfg.output_dim)), ("b_out", (cfg.output_dim,))]
    else:
        d = cfg.decoupled
        for i in range(1, d.trunk_depth):
            plan += [(f"w_h{i}", (n, n)), (f"b_h{i}", (n,))]
        for gi, group in enumerate(d.groups):
            for i in range(d.branch_depth):
                plan += [(f"g{gi}_w{i}", (n, n)), (f"g{gi}_b{i}", (n,))]
            plan += [(f"g{gi}_w_out", (n, len(group))), (f"g{gi}_b_out", (len(group),))]
    return plan


class ParameterSet:
    """Trainable weights in a fixed layer order."""

    def __init__(self, names, arrays):
        self.names = list(names)
        self.arrays = [np.asarray(a, dtype=np.float64) for a in arrays]

    @property
    def count(self) -> int:
        return sum(a.size for a in self.arrays)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.names, [a.copy() for a in self.arrays])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def from_vector(self, v: np.ndarray) -> None:
        off = 0
        for i, a in enumerate(self.arrays):
            self.arrays[i] = v[off:off + a.size].reshape(a.shape).astype(np.float64)
            off += a.size

    def __eq__(self, other):
        return (isinstance(other, ParameterSet) and self.names == other.names
                and all(np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)))


def init_xavier(cfg: NetworkConfig, seed: int) -> ParameterSet:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    names, arrays = [], []
    for name, shape in _layer_plan(cfg):
        names.append(name)
        if name.startswith("b") or "_b" in name:
            arrays.append(np.zeros(shape))
        else:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays.append(rng.uniform(-a, a, size=shape))
    return ParameterSet(names, arrays)


@dataclass
class NetworkOutput:
    values: list[Var]
    jets: dict[object, list[Jet]] = field(default_factory=dict)
    input_node: Var | None = None


class Network:
    def __init__(self, config: NetworkConfig, params: ParameterSet):
        self.config = config
        self.params = params

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def bind(self, tape: Tape) -> "BoundNetwork":
        return BoundNetwork(self, tape)


class BoundNetwork:
    """A network with its parameters registered on one tape."""

    def __init__(self, net: Network, tape: Tape):
        self.config = net.config
        self.tape = tape
        self.vars = {name: tape.param(a) for name, a in zip(net.params.names, net.params.arrays)}
        self.param_vars = [self.vars[name] for name in net.params.names]

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    # -- helpers ---------------------------------------------------------

    def _stack_inputs(self, x, t):
        cfg = self.config
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = x.shape[1]
        if t is None:
            if cfg.input_dim != d:
                raise ShapeError(f"expected input_dim {cfg.input_dim}, got {d} (no time)")
            return x
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        if cfg.input_dim != d + 1:
            raise ShapeError(f"expected input_dim {cfg.input_dim}, got {d}+time")
        if t.shape[0] != x.shape[0]:
            raise ShapeError("x and t batch sizes differ")
        return np.column_stack([x, t])

    def _affine(self, h: Var, w: str, b: str) -> Var:
        return ad.affine(h, self.vars[w], self.vars[b])

    def _affine_jet(self, h: Jet, w: str, b: str) -> Jet:
        wv, bv = self.vars[w], self.vars[b]
        coeffs = [ad.affine(h.coeffs[0], wv, bv)]
        coeffs += [ad.matmul(c, wv) for c in h.coeffs[1:]]
        return Jet(coeffs)

    # -- evaluation ------------------------------------------------------

    def forward(self, x, t=None) -> NetworkOutput:
        cfg = self.config
        act = cfg.hidden_activation
        X = self._stack_inputs(x, t)
        xin = self.tape.input(X)
        h = ad.var_activation(self._affine(xin, "w_in", "b_in"), act, cfg.elu_alpha)
        values: list[Var | None] = [None] * cfg.output_dim
        if cfg.decoupled is None:
            for i in range(1, cfg.hidden_layers):
                h = ad.var_activation(self._affine(h, f"w_h{i}", f"b_h{i}"), act, cfg.elu_alpha)
            y = self._affine(h, "w_out", "b_out")
            for j in range(cfg.output_dim):
                values[j] = ad.var_activation(ad.column(y, j), cfg.out_activation(j), cfg.elu_alpha)
        else:
            dec = cfg.decoupled
            for i in range(1, dec.trunk_depth):
                h = ad.var_activation(self._affine(h, f"w_h{i}", f"b_h{i}"), act, cfg.elu_alpha)
            for gi, group in enumerate(dec.groups):
                hb = h
                for i in range(dec.branch_depth):
                    hb = ad.var_activation(self._affine(hb, f"g{gi}_w{i}", f"g{gi}_b{i}"),
                                           act, cfg.elu_alpha)
                y = self._affine(hb, f"g{gi}_w_out", f"g{gi}_b_out")
                for jj, j in enumerate(group):
                    values[j] = ad.var_activation(ad.column(y, jj), cfg.out_activation(j),
                                                  cfg.elu_alpha)
        return NetworkOutput(values=values, input_node=xin)

    def _bundle_affine(self, h0: Var, tails: dict, w: str, b: str):
        wv = self.vars[w]
        out0 = ad.affine(h0, wv, self.vars[b])
        return out0, {dd: [ad.matmul(c, wv) for c in cs] for dd, cs in tails.items()}

    def _bundle_act(self, h0: Var, tails: dict, kind: str):
        """Activation over a shared primal plus per-direction Taylor tails."""
        alpha = self.config.elu_alpha
        if kind == "identity":
            return h0, tails
        if kind == "tanh":
            y0 = ad.tanh(h0)
            g0 = 1.0 - y0 * y0
            return y0, {dd: _tail(cs, y0, g0, "tanh") for dd, cs in tails.items()}
        if kind == "sigmoid":
            y0 = ad.sigmoid(h0)
            g0 = y0 - y0 * y0
            return y0, {dd: _tail(cs, y0, g0, "sigmoid") for dd, cs in tails.items()}
        if kind == "elu":
            x0v = h0.value
            max_order = max((len(cs) for cs in tails.values()), default=0)
            if max_order >= 2 or (max_order >= 1 and alpha != 1.0):
                if np.any(np.abs(x0v) < 1e-8):
                    raise SmoothnessError(
                        f"elu jet of order {max_order} evaluated at the kink")
            mask = x0v > 0
            e0 = ad.exp(h0)
            y0 = ad.where(mask, h0, e0 * alpha - alpha)
            out = {}
            for dd, cs in tails.items():
                etail = _tail(cs, e0, e0, "exp")
                out[dd] = [ad.where(mask, c, e * alpha) for c, e in zip(cs, etail)]
            return y0, out
        if kind == "relu":
            y0 = ad.relu(h0)
            out = {}
            for dd, cs in tails.items():
                if len(cs) >= 2:
                    raise SmoothnessError("relu supports jet order <= 1")
                mask = (h0.value > 0).astype(np.float64)
                out[dd] = [c * mask for c in cs]
            return y0, out
        raise ValueError(f"unknown activation kind {kind!r}")

    def _bundle_layers(self, h0, tails, kind):
        cfg = self.config
        outs: list[Jet | None] = [None] * cfg.output_dim

        def heads(h0, tails, w, b, group):
            y0, ytails = self._bundle_affine(h0, tails, w, b)
            for jj, j in enumerate(group):
                c0 = ad.column(y0, jj)
                jtails = {dd: [ad.column(c, jj) for c in cs] for dd, cs in ytails.items()}
                oa = cfg.out_activation(j)
                c0, jtails = self._bundle_act(c0, jtails, oa)
                outs[j] = (c0, jtails)

        if cfg.decoupled is None:
            for i in range(1, cfg.hidden_layers):
                h0, tails = self._bundle_affine(h0, tails, f"w_h{i}", f"b_h{i}")
                h0, tails = self._bundle_act(h0, tails, kind)
            heads(h0, tails, "w_out", "b_out", range(cfg.output_dim))
        else:
            dec = cfg.decoupled
            for i in range(1, dec.trunk_depth):
                h0, tails = self._bundle_affine(h0, tails, f"w_h{i}", f"b_h{i}")
                h0, tails = self._bundle_act(h0, tails, kind)
            for gi, group in enumerate(dec.groups):
                hb0, btails = h0, tails
                for i in range(dec.branch_depth):
                    hb0, btails = self._bundle_affine(hb0, btails, f"g{gi}_w{i}", f"g{gi}_b{i}")
                    hb0, btails = self._bundle_act(hb0, btails, kind)
                heads(hb0, btails, f"g{gi}_w_out", f"g{gi}_b_out", group)
        return outs

    def forward_jets(self, x, t=None, orders: dict | None = None) -> NetworkOutput:
        """Jets for several directions in one pass over a shared primal chain.

        orders maps direction (spatial axis index or TIME) to the jet order
        wanted along it; coeffs[j]*j! is the exact j-th derivative.
        """
        orders = orders or {}
        for od in orders.values():
            if od > ad.JET_ORDER_CAP:
                raise UnsupportedOrderError(f"jet order {od} exceeds cap {ad.JET_ORDER_CAP}")
        X = self._stack_inputs(x, t)
        if TIME in orders and t is None:
            raise ShapeError("time direction requested for a stationary network")
        d_space = X.shape[1] - (0 if t is None else 1)
        for dd in orders:
            if dd != TIME and not (0 <= int(dd) < d_space):
                raise ShapeError(f"direction {dd!r} outside the spatial axes")
        if not orders:
            return self.forward(x, t)

        n_pts, dim = X.shape
        c0 = self.tape.input(X)
        tails = {}
        for dd, od in orders.items():
            axis = dim - 1 if dd == TIME else int(dd)
            seed = np.zeros((n_pts, dim))
            seed[:, axis] = 1.0
            tails[dd] = [self.tape.const(seed)] + [
                self.tape.const(np.zeros((n_pts, dim))) for _ in range(od - 1)]

        cfg = self.config
        h0, tails = self._bundle_affine(c0, tails, "w_in", "b_in")
        h0, tails = self._bundle_act(h0, tails, cfg.hidden_activation)
        outs = self._bundle_layers(h0, tails, cfg.hidden_activation)

        result = NetworkOutput(values=[o[0] for o in outs], input_node=c0)
        for dd in orders:
            result.jets[dd] = [Jet([o[0]] + o[1][dd]) for o in outs]
        return result

    def forward_with_derivatives(self, x, t=None, directions=(), order: int = 1) -> NetworkOutput:
        """Jets along each listed direction, all expanded to the same order."""
        return self.forward_jets(x, t, {dd: order for dd in directions})


class AnalyticNetwork:
    """Mock network backed by closed-form expressions.

    Presents the same bind/forward surface as a trained network so losses
    can be evaluated on exact fields; all emitted nodes are constants.
    """

    def __init__(self, exprs, spatial_dim: int, with_time: bool = True):
        self.spatial_dim = spatial_dim
        self.with_time = with_time
        self.xsyms = sp.symbols(f"x0:{spatial_dim}")
        self.tsym = sp.Symbol("t")
        self.exprs = [sp.sympify(e) for e in exprs]
        self.output_dim = len(self.exprs)
        self._fns: dict = {}

    def _fn(self, i, direction, order):
        key = (i, direction, order)
        if key not in self._fns:
            e = self.exprs[i]
            s = self.tsym if direction == TIME else self.xsyms[direction]
            e = sp.diff(e, s, order) if order else e
            args = list(self.xsyms) + ([self.tsym] if self.with_time else [])
            self._fns[key] = sp.lambdify(args, e, "numpy")
        return self._fns[key]

    def _eval(self, i, direction, order, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        args = [x[:, a] for a in range(self.spatial_dim)]
        if self.with_time:
            args.append(np.asarray(t, dtype=np.float64).reshape(-1))
        v = self._fn(i, direction, order)(*args)
        return np.broadcast_to(np.asarray(v, dtype=np.float64), (x.shape[0],)).copy()

    def bind(self, tape: Tape) -> "BoundAnalytic":
        return BoundAnalytic(self, tape)


class BoundAnalytic:
    def __init__(self, net: AnalyticNetwork, tape: Tape):
        self.net = net
        self.tape = tape

    @property
    def output_dim(self) -> int:
        return self.net.output_dim

    def forward(self, x, t=None) -> NetworkOutput:
        vals = [self.tape.const(self.net._eval(i, 0, 0, x, t))
                for i in range(self.net.output_dim)]
        return NetworkOutput(values=vals)

    def forward_with_derivatives(self, x, t=None, directions=(), order: int = 1) -> NetworkOutput:
        return self.forward_jets(x, t, {dd: order for dd in directions})

    def forward_jets(self, x, t=None, orders: dict | None = None) -> NetworkOutput:
        out = self.forward(x, t)
        for dd, order in (orders or {}).items():
            jets = []
            for i in range(self.net.output_dim):
                coeffs = [out.values[i]]
                for j in range(1, order + 1):
                    arr = self.net._eval(i, dd, j, x, t) / math.factorial(j)
                    coeffs.append(self.tape.const(arr))
                jets.append(Jet(coeffs))
            out.jets[dd] = jets
        return out


# -- checkpoint io ----------------------------------------------------------


def _encode_config(cfg: NetworkConfig) -> str:
    oa = cfg.output_activation
    oa = oa if isinstance(oa, str) else ",".join(oa)
    parts = [f"input_dim={cfg.input_dim}", f"hidden_layers={cfg.hidden_layers}",
             f"width={cfg.width}", f"output_dim={cfg.output_dim}",
             f"hidden_activation={cfg.hidden_activation}", f"output_activation={oa}",
             f"elu_alpha={cfg.elu_alpha!r}"]
    if cfg.decoupled is not None:
        d = cfg.decoupled
        groups = "|".join("-".join(str(i) for i in g) for g in d.groups)
        parts.append(f"decoupled={d.trunk_depth}:{d.branch_depth}:{groups}")
    return " ".join(parts)


def _decode_config(header: str) -> NetworkConfig:
    kv = dict(item.split("=", 1) for item in header.split())
    oa = kv["output_activation"]
    dec = None
    if "decoupled" in kv:
        trunk, branch, groups = kv["decoupled"].split(":")
        dec = DecoupledSpec(int(trunk), int(branch),
                            tuple(tuple(int(i) for i in g.split("-")) for g in groups.split("|")))
    return NetworkConfig(
        input_dim=int(kv["input_dim"]), hidden_layers=int(kv["hidden_layers"]),
        width=int(kv["width"]), output_dim=int(kv["output_dim"]),
        hidden_activation=kv["hidden_activation"],
        output_activation=oa if "," not in oa else tuple(oa.split(",")),
        elu_alpha=float(kv["elu_alpha"]), decoupled=dec)


def save_checkpoint(path, cfg: NetworkConfig, params: ParameterSet) -> None:
    """Header line with the config, then one hex float64 per line (bit-exact)."""
    with open(path, "w") as f:
        f.write(_encode_config(cfg) + "\n")
        for v in params.to_vector():
            f.write(float(v).hex() + "\n")


def load_checkpoint(path) -> tuple[NetworkConfig, ParameterSet]:
    with open(path) as f:
        cfg = _decode_config(f.readline().strip())
        vec = np.array([float.fromhex(line.strip()) for line in f if line.strip()])
    params = init_xavier(cfg, seed=0)
    if vec.size != params.count:
        raise ShapeError(f"checkpoint holds {vec.size} values, config expects {params.count}")
    params.from_vector(vec)
    return cfg, params
