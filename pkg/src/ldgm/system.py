"""PDE problem registry and order-reduction rewrites.

A ProblemSpec describes one initial boundary value problem
    u_t = F(u, Du, ..., D^k u)
through a callable `rhs` that reads derivatives from an abstract view, so
the same definition can be evaluated three ways: on the order-reduced
roster (intermediate variables approximated by extra network outputs), on
the strong form (derivatives from high-order jets), or on an analytic
solution for exactness checks.

A SystemForm is one concrete rewrite: the roster of unknowns, the
constraint and evolution residuals expressed with first (or at most
second) derivatives of roster variables, and the boundary residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .errors import OrderError, UnavailableError

TIME = "t"


@dataclass(frozen=True)
class BoundaryCond:
    """Boundary targets as (derivative order, data) pairs.

    Dirichlet penalizes the listed derivative orders of u against their
    data, Neumann penalizes derivative variables, periodic pairs opposite
    faces (targets ignored).  Data is a constant or a callable g(x, t).
    """

    kind: str
    targets: tuple = ()

    def data(self, i, x, t):
        g = self.targets[i][1]
        if callable(g):
            return np.asarray(g(x, t), dtype=np.float64)
        return np.full(x.shape[0], float(g))


@dataclass
class ProblemSpec:
    name: str
    spatial_dim: int
    domain: tuple[tuple[float, float], ...]
    horizon: Optional[float]
    pde_order: int
    rhs: Optional[Callable]
    initial: Optional[Callable]
    boundary: Optional[BoundaryCond]
    exact_expr: Optional[object] = None
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    params: dict = field(default_factory=dict)
    ldgm_form: Optional[Callable] = None      # override for the trained first-order system
    second_form: Optional[Callable] = None    # override for the second-order system
    dgm_boundary: Optional[Callable] = None   # override for strong-form boundary residuals

    def __post_init__(self):
        self._exact_fn = None

    @property
    def stationary(self) -> bool:
        return self.horizon is None

    def exact(self, x, t=None):
        """Closed-form solution values, if the problem has one."""
        if self.exact_expr is None:
            raise UnavailableError(f"{self.name} has no closed-form solution")
        if self._exact_fn is None:
            xs = sp.symbols(f"x0:{self.spatial_dim}")
            args = list(xs) + ([] if self.stationary else [sp.Symbol("t")])
            self._exact_fn = sp.lambdify(args, sp.sympify(self.exact_expr), "numpy")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        args = [x[:, i] for i in range(self.spatial_dim)]
        if not self.stationary:
            args.append(np.asarray(t, dtype=np.float64).reshape(-1))
        v = self._exact_fn(*args)
        return np.broadcast_to(np.asarray(v, dtype=np.float64), (x.shape[0],)).copy()


@dataclass
class SystemForm:
    """One order-reduced rewrite of a ProblemSpec."""

    spec: ProblemSpec
    roster: tuple[str, ...]
    jet_orders: dict                 # direction -> jet order needed at interior points
    evolution: Callable              # ctx -> residual
    constraints: tuple               # ((name, ctx -> residual), ...)
    boundary: Callable               # bctx -> list of residuals
    exact_outputs: Optional[tuple] = None   # sympy exprs per roster slot

    @property
    def size(self) -> int:
        return len(self.roster)


# -- derivative views ---------------------------------------------------------


class ChainView:
    """First-order roster (u, v_1, ..., v_{k-1}) with v_{i+1} = D v_i."""

    def __init__(self, ctx, k: int):
        self.ctx = ctx
        self.k = k

    @property
    def u(self):
        return self.ctx.out(0)

    @property
    def x(self):
        return self.ctx.x

    @property
    def t(self):
        return self.ctx.t

    def d(self, p: int, axis: int = 0):
        if p == 0:
            return self.ctx.out(0)
        if p < self.k:
            return self.ctx.out(p)
        if p == self.k:
            return self.ctx.dx(self.k - 1, axis)
        raise OrderError(f"derivative order {p} above pde order {self.k}")

    def grad(self, i: int):
        return self.ctx.out(1 + i)

    def lap(self):
        s = self.ctx.dx(1, 0)
        for i in range(1, self.ctx.spatial_dim):
            s = s + self.ctx.dx(1 + i, i)
        return s


class Chain2View:
    """Second-order roster (u, w_1, ..., w_J) with w_1 = D^2 u, w_{j+1} = D^2 w_j."""

    def __init__(self, ctx, k: int):
        self.ctx = ctx
        self.k = k

    @property
    def u(self):
        return self.ctx.out(0)

    @property
    def x(self):
        return self.ctx.x

    @property
    def t(self):
        return self.ctx.t

    def d(self, p: int, axis: int = 0):
        if p == 0:
            return self.ctx.out(0)
        if p == 1:
            return self.ctx.dx(0, axis, order=1)
        j, rem = divmod(p, 2)
        if rem == 0:
            return self.ctx.out(j)
        return self.ctx.dx(j, axis, order=1)

    def grad(self, i: int):
        return self.ctx.dx(0, i, order=1)

    def lap(self):
        return self.ctx.out(1)


class StrongView:
    """Direct view: all derivatives from jets of the single output."""

    def __init__(self, ctx):
        self.ctx = ctx

    @property
    def u(self):
        return self.ctx.out(0)

    @property
    def x(self):
        return self.ctx.x

    @property
    def t(self):
        return self.ctx.t

    def d(self, p: int, axis: int = 0):
        return self.ctx.dx(0, axis, order=p) if p else self.ctx.out(0)

    def grad(self, i: int):
        return self.ctx.dx(0, i, order=1)

    def lap(self):
        s = self.ctx.dx(0, 0, order=2)
        for i in range(1, self.ctx.spatial_dim):
            s = s + self.ctx.dx(0, i, order=2)
        return s


def strong_jet_orders(spec: ProblemSpec) -> dict:
    """Jet orders the strong-form residual needs per direction."""
    if spec.spatial_dim == 1:
        orders = {0: spec.pde_order}
    else:
        if spec.pde_order > 2:
            raise OrderError("strong form above order 2 is 1-d only")
        orders = {i: 2 for i in range(spec.spatial_dim)}
    if not spec.stationary:
        orders[TIME] = 1
    return orders


# -- rewrites -----------------------------------------------------------------


def _chain_boundary(spec: ProblemSpec, slot_of_order):
    """Boundary residual builder shared by the chain rewrites.

    slot_of_order maps a derivative order from the boundary condition to a
    roster slot (or to a first-derivative request when no slot holds it).
    """
    bc = spec.boundary

    def boundary(bctx):
        if bc.kind == "periodic":
            return [bctx.out(i) - bctx.out_mirror(i) for i in range(bctx.size)]
        res = []
        for i, (order, _) in enumerate(bc.targets):
            g = bc.data(i, bctx.x, bctx.t)
            res.append(slot_of_order(bctx, order) - g)
        return res

    return boundary


def rewrite_first_order(spec: ProblemSpec) -> SystemForm:
    """Roster (u, v_1..v_{k-1}); only first derivatives appear in the system."""
    k = spec.pde_order
    d = spec.spatial_dim
    if spec.stationary:
        raise OrderError("rewrites apply to evolution problems")
    if k < 1:
        raise OrderError("pde order must be >= 1")
    if d > 1 and k > 2:
        raise OrderError("first-order rewrite above order 2 is 1-d only")

    if d == 1:
        roster = ("u",) + tuple("u_" + "x" * i for i in range(1, k))
        constraints = tuple(
            (f"{roster[i + 1]} = D {roster[i]}",
             (lambda i: lambda ctx: ctx.dx(i, 0) - ctx.out(i + 1))(i))
            for i in range(k - 1))
        exact = None
        if spec.exact_expr is not None:
            x0 = sp.Symbol("x0")
            u = sp.sympify(spec.exact_expr)
            exact = tuple(sp.diff(u, x0, i) for i in range(k))
    else:
        roster = ("u",) + tuple(f"u_x{i}" for i in range(d))
        constraints = tuple(
            (f"u_x{i} = d u/d x{i}",
             (lambda i: lambda ctx: ctx.dx(0, i) - ctx.out(1 + i))(i))
            for i in range(d))
        exact = None
        if spec.exact_expr is not None:
            u = sp.sympify(spec.exact_expr)
            exact = (u,) + tuple(sp.diff(u, sp.Symbol(f"x{i}")) for i in range(d))

    def evolution(ctx):
        return ctx.dt(0) - spec.rhs(ChainView(ctx, k))

    def slot_of_order(bctx, order):
        if d == 1 and order < k:
            return bctx.out(order)
        if d > 1 and order == 0:
            return bctx.out(0)
        raise OrderError(f"boundary derivative order {order} has no roster slot")

    return SystemForm(
        spec=spec, roster=roster,
        jet_orders=({0: 1, TIME: 1} if d == 1 else {**{i: 1 for i in range(d)}, TIME: 1}),
        evolution=evolution, constraints=constraints,
        boundary=_chain_boundary(spec, slot_of_order),
        exact_outputs=exact)


def rewrite_second_order(spec: ProblemSpec) -> SystemForm:
    """Roster (u, w_1..w_J), w_{j+1} = D^2 w_j; at most second derivatives."""
    k = spec.pde_order
    d = spec.spatial_dim
    if spec.stationary:
        raise OrderError("rewrites apply to evolution problems")
    if k < 2:
        raise OrderError("second-order rewrite needs pde order >= 2")
    if spec.second_form is not None:
        return spec.second_form(spec)
    if d > 1 and k > 2:
        raise OrderError("second-order rewrite above order 2 is 1-d only")
    nw = k // 2

    if d == 1:
        roster = ("u",) + tuple("u_" + "x" * (2 * j) for j in range(1, nw + 1))

        def lap_of(ctx, slot):
            return ctx.dx(slot, 0, order=2)
    else:
        roster = ("u", "lap_u")

        def lap_of(ctx, slot):
            s = ctx.dx(slot, 0, order=2)
            for i in range(1, d):
                s = s + ctx.dx(slot, i, order=2)
            return s

    constraints = tuple(
        (f"{roster[j + 1]} = D^2 {roster[j]}",
         (lambda j: lambda ctx: lap_of(ctx, j) - ctx.out(j + 1))(j))
        for j in range(nw))

    def evolution(ctx):
        return ctx.dt(0) - spec.rhs(Chain2View(ctx, k))

    exact = None
    if spec.exact_expr is not None:
        u = sp.sympify(spec.exact_expr)
        if d == 1:
            x0 = sp.Symbol("x0")
            exact = tuple(sp.diff(u, x0, 2 * j) for j in range(nw + 1))
        else:
            lap = sum(sp.diff(u, sp.Symbol(f"x{i}"), 2) for i in range(d))
            exact = (u, lap)

    def slot_of_order(bctx, order):
        if order % 2 == 0 and order // 2 <= nw:
            return bctx.out(order // 2)
        if order == 1:
            return bctx.dx(0, 0, order=1)
        raise OrderError(f"boundary derivative order {order} unsupported here")

    return SystemForm(
        spec=spec, roster=roster,
        jet_orders=({0: 2, TIME: 1} if d == 1 else {**{i: 2 for i in range(d)}, TIME: 1}),
        evolution=evolution, constraints=constraints,
        boundary=_chain_boundary(spec, slot_of_order),
        exact_outputs=exact)


def ldgm_system(spec: ProblemSpec) -> SystemForm:
    """The first-order system a training run uses (problem override wins)."""
    if spec.ldgm_form is not None:
        return spec.ldgm_form(spec)
    return rewrite_first_order(spec)


# -- builtin problems ---------------------------------------------------------


def _fcubic(u):
    # double-well derivative f(u) = u - u^3
    return u - u * u * u


def beam() -> ProblemSpec:
    return ProblemSpec(
        name="beam", spatial_dim=1, domain=((0.0, 2 * math.pi),), horizon=1.0,
        pde_order=4,
        rhs=lambda v: -v.d(4),
        initial=lambda x: np.sin(x[:, 0]),
        boundary=BoundaryCond("dirichlet", ((0, 0.0), (2, 0.0))),
        exact_expr="exp(-t)*sin(x0)")


def _ch_ldgm_form(spec: ProblemSpec) -> SystemForm:
    eps = spec.params["epsilon"]

    def evolution(ctx):
        return ctx.dt(0) - ctx.dx(3, 0)

    constraints = (
        ("phi + eps*(u_x)_x + f(u)",
         lambda ctx: ctx.out(2) + eps * ctx.dx(1, 0) + _fcubic(ctx.out(0))),
        ("u_x = (u)_x", lambda ctx: ctx.out(1) - ctx.dx(0, 0)),
        ("phi_x = (phi)_x", lambda ctx: ctx.out(3) - ctx.dx(2, 0)),
    )

    def boundary(bctx):
        # flux-free walls penalize the derivative variables themselves
        return [bctx.out(1), bctx.out(3)]

    return SystemForm(spec=spec, roster=("u", "u_x", "phi", "phi_x"),
                      jet_orders={0: 1, TIME: 1},
                      evolution=evolution, constraints=constraints, boundary=boundary)


def _ch_second_form(spec: ProblemSpec) -> SystemForm:
    eps = spec.params["epsilon"]

    def evolution(ctx):
        return ctx.dt(0) + ctx.dx(1, 0, order=2)

    constraints = (
        ("v = eps*u_xx + f(u)",
         lambda ctx: ctx.out(1) - eps * ctx.dx(0, 0, order=2) - _fcubic(ctx.out(0))),
    )

    def boundary(bctx):
        return [bctx.dx(0, 0, order=1)]

    return SystemForm(spec=spec, roster=("u", "mu"), jet_orders={0: 2, TIME: 1},
                      evolution=evolution, constraints=constraints, boundary=boundary)


def _ch_dgm_boundary(spec: ProblemSpec):
    eps = spec.params["epsilon"]

    def boundary(bctx):
        u = bctx.out(0)
        d1 = bctx.dx(0, 0, order=1)
        d3 = bctx.dx(0, 0, order=3)
        # phi_x with phi = -eps*u_xx - f(u)
        phi_x = -eps * d3 - (1.0 - 3.0 * u * u) * d1
        return [d1, phi_x]

    return boundary


def cahn_hilliard(epsilon: float = 0.1) -> ProblemSpec:
    def rhs(v):
        u = v.u
        return -epsilon * v.d(4) + 6.0 * u * v.d(1) * v.d(1) - (1.0 - 3.0 * u * u) * v.d(2)

    spec = ProblemSpec(
        name="cahn_hilliard", spatial_dim=1, domain=((0.0, 2 * math.pi),), horizon=1.0,
        pde_order=4, rhs=rhs,
        initial=lambda x: np.cos(x[:, 0]),
        boundary=BoundaryCond("neumann", ((1, 0.0), (3, 0.0))),
        params={"epsilon": epsilon},
        ldgm_form=_ch_ldgm_form, second_form=_ch_second_form)
    spec.dgm_boundary = _ch_dgm_boundary(spec)
    return spec


def allen_cahn(epsilon: float = 1.0) -> ProblemSpec:
    return ProblemSpec(
        name="allen_cahn", spatial_dim=1, domain=((0.0, 2 * math.pi),), horizon=1.0,
        pde_order=2,
        rhs=lambda v: epsilon * v.lap() + _fcubic(v.u),
        initial=lambda x: np.cos(x[:, 0]),
        boundary=BoundaryCond("periodic"),
        params={"epsilon": epsilon})


def mkdv() -> ProblemSpec:
    def g(x, t):
        return np.tanh(x[:, 0] + 2.0 * t - 1.0)

    return ProblemSpec(
        name="mkdv", spatial_dim=1, domain=((-2.0, 2.0),), horizon=1.0,
        pde_order=3,
        rhs=lambda v: 6.0 * v.u * v.u * v.d(1) - v.d(3),
        initial=lambda x: np.tanh(x[:, 0] - 1.0),
        boundary=BoundaryCond("dirichlet", ((0, g),)),
        exact_expr="tanh(x0 + 2*t - 1)")


def heat_nd(d: int = 5) -> ProblemSpec:
    def source(x, t):
        return 2.0 * d * (t + 1.0) + np.sum(x * (1.0 - x), axis=1)

    def g(x, t):
        return np.sum(x * (1.0 - x), axis=1) * (t + 1.0)

    expr = "+".join(f"x{i}*(1-x{i})" for i in range(d))
    return ProblemSpec(
        name="heat_nd", spatial_dim=d, domain=tuple(((0.0, 1.0),) * d), horizon=1.0,
        pde_order=2,
        rhs=lambda v: v.lap() + source(v.x, v.t),
        initial=lambda x: np.sum(x * (1.0 - x), axis=1),
        boundary=BoundaryCond("dirichlet", ((0, g),)),
        exact_expr=f"({expr})*(t + 1)",
        params={"d": d})


def bilaplacian_ritz(d: int = 1) -> ProblemSpec:
    """Clamped fourth-order elliptic benchmark with a manufactured solution."""
    xs = sp.symbols(f"x0:{d}")
    u = sp.prod([sp.sin(sp.pi * s) ** 2 for s in xs])
    lap = lambda e: sum(sp.diff(e, s, 2) for s in xs)  # noqa: E731
    f_expr = sp.expand(lap(lap(u)))
    f_fn = sp.lambdify(list(xs), f_expr, "numpy")

    def source(x):
        return np.asarray(f_fn(*[x[:, i] for i in range(d)]), dtype=np.float64)

    return ProblemSpec(
        name="bilaplacian_ritz", spatial_dim=d, domain=tuple(((0.0, 1.0),) * d),
        horizon=None, pde_order=4, rhs=None,
        initial=None,
        boundary=BoundaryCond("dirichlet", ((0, 0.0), (1, 0.0))),
        exact_expr=str(u),
        params={"source": source, "source_expr": f_expr})


_REGISTRY = {
    "beam": beam,
    "cahn_hilliard": cahn_hilliard,
    "allen_cahn": allen_cahn,
    "mkdv": mkdv,
    "heat_nd": heat_nd,
    "bilaplacian_ritz": bilaplacian_ritz,
}


def builtin_problems() -> list[ProblemSpec]:
    return [beam(), cahn_hilliard(), allen_cahn(), mkdv(), heat_nd(), bilaplacian_ritz()]


def get_problem(name: str, **params) -> ProblemSpec:
    if name not in _REGISTRY:
        raise KeyError(f"unknown problem {name!r}; have {sorted(_REGISTRY)}")
    return _REGISTRY[name](**params)
