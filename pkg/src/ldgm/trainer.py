"""Two-level training loop: sampling stages times optimizer steps.

Each stage draws a fresh batch and runs a fixed number of Adam steps on
it.  Every run is a pure function of (seed, configs): the sampler stream,
the initialization and the update rule are all deterministic, and the
report's numeric columns (everything but wall-clock) reproduce exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import Tape, backward
from .errors import NonFiniteLossError
from .loss import dgm_loss, ldgm_loss
from .network import Network, NetworkConfig, ParameterSet, init_xavier
from .sampling import SamplerConfig, draw_batch
from .system import ProblemSpec, ldgm_system


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    stages: int = 1000            # s_1
    steps_per_stage: int = 5      # s_2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule: Optional[str] = None  # None | "piecewise_log"
    log_every: int = 1

    def rate_at(self, step: int) -> float:
        if self.schedule == "piecewise_log":
            # 10^-floor(log10 k), clipped so it never exceeds the base rate
            return min(self.learning_rate, 10.0 ** (-math.floor(math.log10(max(step, 1)))))
        return self.learning_rate


class AdamState:
    """First/second moment accumulators plus the update counter."""

    def __init__(self, params: ParameterSet):
        self.m = [np.zeros_like(a) for a in params.arrays]
        self.v = [np.zeros_like(a) for a in params.arrays]
        self.step = 0


def adam_step(params: ParameterSet, grads, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8) -> tuple[ParameterSet, AdamState]:
    """Standard bias-corrected update; params and state advance in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(t, f"gradient of {params.names[i]}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        params.arrays[i] = params.arrays[i] - lr * (state.m[i] / c1) / (
            np.sqrt(state.v[i] / c2) + eps)
    return params, state


@dataclass
class TrainReport:
    columns = ("step", "J_total", "J_e", "J_i", "J_b", "rel_l2", "seconds")
    rows: list[tuple] = field(default_factory=list)

    def log(self, step, j_total, j_e, j_i, j_b, rel_l2, seconds):
        self.rows.append((step, j_total, j_e, j_i, j_b, rel_l2, seconds))

    @property
    def final_rel_l2(self) -> float:
        return self.rows[-1][5] if self.rows else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "TrainReport":
        rep = cls()
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            assert tuple(header) == cls.columns
            for row in r:
                rep.rows.append((int(row[0]),) + tuple(float(v) for v in row[1:]))
        return rep


def train_loop(net: Network, draw, loss_fn, cfg: TrainConfig,
               metric: Optional[Callable] = None,
               callback: Optional[Callable] = None) -> tuple[TrainReport, ParameterSet]:
    """Generic engine behind all the training entry points.

    draw(stage) -> batch; loss_fn(bound_net, batch) -> LossBreakdown;
    metric(net) -> relative error for the report (may be None).
    """
    report = TrainReport()
    state = AdamState(net.params)
    t0 = time.perf_counter()
    last = None
    for stage in range(cfg.stages):
        batch = draw(stage)
        for _ in range(cfg.steps_per_stage):
            tape = Tape()
            bound = net.bind(tape)
            lb = loss_fn(bound, batch)
            total = float(lb.J_total.value)
            if not math.isfinite(total):
                raise NonFiniteLossError(stage)
            grads_by_id = backward(tape, lb.J_total)
            grads = [grads_by_id[v.idx] for v in bound.param_vars]
            adam_step(net.params, grads, state, cfg.rate_at(state.step + 1),
                      cfg.beta1, cfg.beta2, cfg.epsilon)
            last = lb
        if stage % cfg.log_every == 0 or stage == cfg.stages - 1:
            rel = metric(net) if metric is not None else math.nan
            report.log(state.step, float(last.J_total.value), float(last.J_e.value),
                       float(last.J_i.value), float(last.J_b.value), rel,
                       time.perf_counter() - t0)
            if callback is not None:
                callback(stage, report)
    return report, net.params


def default_network_config(spec: ProblemSpec, method: str,
                           hidden_layers=3, width=50, activation="tanh",
                           decoupled=None) -> NetworkConfig:
    m = 1 if method in ("dgm", "drm") else (
        ldgm_system(spec).size if method == "ldgm" else spec.spatial_dim + 1)
    return NetworkConfig(
        input_dim=spec.spatial_dim + (0 if spec.stationary else 1),
        hidden_layers=hidden_layers, width=width, output_dim=m,
        hidden_activation=activation, decoupled=decoupled)


def train(spec: ProblemSpec, method: str, net_cfg: NetworkConfig,
          sampler_cfg: SamplerConfig, train_cfg: TrainConfig, seed: int = 0,
          truth: Optional[Callable] = None,
          eval_grid=None) -> tuple[TrainReport, ParameterSet]:
    """Run the nested stage/step loop for one residual method.

    `truth(x, t) -> values` enables the relative-error column; for problems
    with a closed form it defaults to the exact solution.
    """
    if method not in ("ldgm", "dgm"):
        raise ValueError(f"method must be 'ldgm' or 'dgm', got {method!r}")
    from . import metrics

    params = init_xavier(net_cfg, seed)
    net = Network(net_cfg, params)

    if method == "ldgm":
        form = ldgm_system(spec)
        loss_fn = lambda bound, batch: ldgm_loss(form, bound, batch)  # noqa: E731
    else:
        loss_fn = lambda bound, batch: dgm_loss(spec, bound, batch)  # noqa: E731

    if truth is None and spec.exact_expr is not None:
        truth = spec.exact
    metric = None
    if truth is not None:
        grid = eval_grid if eval_grid is not None else metrics.evaluation_grid(spec)
        truth_vals = truth(grid.x, grid.t)
        metric = lambda n: metrics.network_relative_l2(n, grid, truth_vals)  # noqa: E731

    effective_sampler = dataclasses.replace(sampler_cfg, seed=sampler_cfg.seed + seed)
    draw = lambda stage: draw_batch(effective_sampler, spec, stage)  # noqa: E731
    return train_loop(net, draw, loss_fn, train_cfg, metric)


def success_rate(spec: ProblemSpec, method: str, net_cfg: NetworkConfig,
                 sampler_cfg: SamplerConfig, train_cfg: TrainConfig,
                 seeds, threshold: float = 0.01) -> tuple[float, list[float]]:
    """Fraction of seeds whose final relative error beats the threshold.

    Diverging runs (non-finite loss) count as failures, not crashes.
    """
    finals = []
    for seed in seeds:
        try:
            report, _ = train(spec, method, net_cfg, sampler_cfg, train_cfg, seed=seed)
            finals.append(report.final_rel_l2)
        except NonFiniteLossError:
            finals.append(math.inf)
    ok = sum(1 for v in finals if v < threshold)
    return ok / len(finals), finals
