"""Variational losses for the clamped fourth-order problem.

The split form trades the Laplacian for a divergence: with outputs
p = phi_1 and q = (phi_2..phi_{d+1}),

    J = |O| * mean[ 1/2 (div q)^2 - f p + ||grad p - q||^2 ]
      + lambda * |dO| * mean[ p^2 + (q.n)^2 ],

so only first derivatives of any output appear.  The baseline keeps the
Laplacian and therefore needs order-2 jets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .loss import LossBreakdown, _interior_ctx
from .sampling import SampleBatch, SamplerConfig, draw_batch
from .system import ProblemSpec


@dataclass(frozen=True)
class RitzConfig:
    penalty: float = 500.0     # boundary weight lambda
    interior: int = 400
    boundary: int = 100
    seed: int = 0


def _measures(spec: ProblemSpec) -> tuple[float, float]:
    sides = np.array([b - a for a, b in spec.domain])
    volume = float(np.prod(sides))
    if spec.spatial_dim == 1:
        surface = 2.0
    else:
        surface = float(sum(2.0 * np.prod(np.delete(sides, ax))
                            for ax in range(spec.spatial_dim)))
    return volume, surface


def ldrm_loss(spec: ProblemSpec, bound, batch: SampleBatch,
              cfg: RitzConfig) -> LossBreakdown:
    d = spec.spatial_dim
    if bound.output_dim != d + 1:
        raise ShapeError(f"split form needs {d + 1} outputs, got {bound.output_dim}")
    f = spec.params["source"](batch.interior_x)
    volume, surface = _measures(spec)

    orders = {i: 1 for i in range(d)}
    ctx = _interior_ctx(bound, batch.interior_x, None, orders, d)
    div_q = ctx.dx(1, 0)
    for i in range(1, d):
        div_q = div_q + ctx.dx(1 + i, i)
    integrand = 0.5 * div_q * div_q - ctx.out(0) * f
    for i in range(d):
        gap = ctx.dx(0, i) - ctx.out(1 + i)
        integrand = integrand + gap * gap
    J_e = ad.mean(integrand) * volume

    bvals = bound.forward(batch.boundary_x, None).values
    p = bvals[0]
    axes = batch.boundary_axis
    qn = bvals[1] if d == 1 else None
    if d > 1:
        # pick each point's normal component of q by masking on its face axis
        qn = bvals[1] * (axes == 0).astype(np.float64)
        for i in range(1, d):
            qn = qn + bvals[1 + i] * (axes == i).astype(np.float64)
    J_b = ad.mean(p * p + qn * qn) * surface

    J_i = bound.tape.const(0.0)
    lam = cfg.penalty
    total = J_e + lam * J_b
    return LossBreakdown(J_e, J_i, J_b, total, {}, (1.0, 0.0, lam))


def drm_loss(spec: ProblemSpec, bound, batch: SampleBatch,
             cfg: RitzConfig) -> LossBreakdown:
    d = spec.spatial_dim
    if bound.output_dim != 1:
        raise ShapeError("baseline form needs a single output")
    f = spec.params["source"](batch.interior_x)
    volume, surface = _measures(spec)

    orders = {i: 2 for i in range(d)}
    ctx = _interior_ctx(bound, batch.interior_x, None, orders, d)
    lap = ctx.dx(0, 0, order=2)
    for i in range(1, d):
        lap = lap + ctx.dx(0, i, order=2)
    integrand = 0.5 * lap * lap - ctx.out(0) * f
    J_e = ad.mean(integrand) * volume

    from .loss import BoundaryCtx
    bctx = BoundaryCtx(bound, batch, d)
    p = bctx.out(0)
    axes = batch.boundary_axis
    dn = bctx.dx(0, 0, order=1) * (axes == 0).astype(np.float64)
    for i in range(1, d):
        dn = dn + bctx.dx(0, i, order=1) * (axes == i).astype(np.float64)
    J_b = ad.mean(p * p + dn * dn) * surface

    J_i = bound.tape.const(0.0)
    lam = cfg.penalty
    total = J_e + lam * J_b
    return LossBreakdown(J_e, J_i, J_b, total, {}, (1.0, 0.0, lam))


def train_ritz(spec: ProblemSpec, method: str, net_cfg, train_cfg,
               ritz_cfg: RitzConfig = RitzConfig(), seed: int = 0):
    """Stage/step loop over fresh quadrature samples for ldrm or drm."""
    from . import metrics
    from .network import Network, init_xavier
    from .trainer import train_loop

    if method not in ("ldrm", "drm"):
        raise ValueError(f"method must be 'ldrm' or 'drm', got {method!r}")
    loss = ldrm_loss if method == "ldrm" else drm_loss
    net = Network(net_cfg, init_xavier(net_cfg, seed))
    sampler = SamplerConfig(interior=ritz_cfg.interior, initial=0,
                            boundary=ritz_cfg.boundary, seed=ritz_cfg.seed + seed)

    grid = metrics.evaluation_grid(spec)
    truth = spec.exact(grid.x)
    metric = lambda n: metrics.network_relative_l2(n, grid, truth)  # noqa: E731
    draw = lambda stage: draw_batch(sampler, spec, stage)  # noqa: E731
    loss_fn = lambda bound, batch: loss(spec, bound, batch, ritz_cfg)  # noqa: E731
    return train_loop(net, draw, loss_fn, train_cfg, metric)
