import math

import numpy as np
import pytest

from ldgm.errors import NonFiniteLossError
from ldgm.network import NetworkConfig, init_xavier
from ldgm.sampling import SamplerConfig
from ldgm.trainer import (AdamState, TrainConfig, TrainReport, adam_step,
                          default_network_config, train)
from ldgm.system import get_problem

from test_system import advection


def tiny_params():
    cfg = NetworkConfig(input_dim=2, hidden_layers=1, width=3, output_dim=1)
    return init_xavier(cfg, seed=0)


def test_zero_gradient_leaves_parameters_unchanged():
    params = tiny_params()
    before = params.to_vector()
    state = AdamState(params)
    adam_step(params, [np.zeros_like(a) for a in params.arrays], state, lr=0.1)
    assert np.array_equal(params.to_vector(), before)
    assert state.step == 1


def test_first_step_magnitude_is_learning_rate():
    params = tiny_params()
    state = AdamState(params)
    grads = [np.full_like(a, 2.7) for a in params.arrays]
    before = params.to_vector()
    adam_step(params, grads, state, lr=0.01)
    moves = np.abs(params.to_vector() - before)
    # bias-corrected ratio is 1, up to the epsilon in the denominator
    assert np.allclose(moves, 0.01, rtol=1e-6)


def test_adam_is_deterministic_over_100_steps():
    def run():
        params = tiny_params()
        state = AdamState(params)
        rng = np.random.default_rng(3)
        for _ in range(100):
            grads = [rng.normal(size=a.shape) for a in params.arrays]
            adam_step(params, grads, state, lr=1e-3)
        return params.to_vector()

    assert run().tobytes() == run().tobytes()


def test_non_finite_gradient_aborts_with_diagnostics():
    params = tiny_params()
    state = AdamState(params)
    grads = [np.zeros_like(a) for a in params.arrays]
    grads[1][0] = np.nan
    with pytest.raises(NonFiniteLossError) as e:
        adam_step(params, grads, state, lr=1e-3)
    assert "b_in" in str(e.value)


def test_zero_stages_returns_empty_report_and_initial_params():
    spec = advection()
    net_cfg = default_network_config(spec, "ldgm", hidden_layers=1, width=4)
    report, params = train(spec, "ldgm", net_cfg, SamplerConfig(interior=5, initial=2, boundary=2),
                           TrainConfig(stages=0), seed=1)
    assert report.rows == []
    assert params == init_xavier(net_cfg, 1)


def test_training_trajectory_is_deterministic():
    spec = advection()
    net_cfg = default_network_config(spec, "ldgm", hidden_layers=2, width=6)
    args = (spec, "ldgm", net_cfg,
            SamplerConfig(interior=16, initial=8, boundary=8, seed=0),
            TrainConfig(stages=5, steps_per_stage=3))
    r1, p1 = train(*args, seed=4)
    r2, p2 = train(*args, seed=4)
    num1 = [row[:6] for row in r1.rows]
    num2 = [row[:6] for row in r2.rows]
    assert num1 == num2
    assert p1.to_vector().tobytes() == p2.to_vector().tobytes()
    r3, _ = train(*args, seed=5)
    assert [row[:6] for row in r3.rows] != num1


def test_report_row_cadence_and_columns():
    spec = advection()
    net_cfg = default_network_config(spec, "ldgm", hidden_layers=1, width=4)
    cfg = TrainConfig(stages=6, steps_per_stage=2)
    report, _ = train(spec, "ldgm", net_cfg, SamplerConfig(interior=8, initial=4, boundary=4),
                      cfg, seed=0)
    assert len(report.rows) == 6
    assert [row[0] for row in report.rows] == [2, 4, 6, 8, 10, 12]
    assert all(math.isfinite(row[1]) for row in report.rows)
    secs = [row[6] for row in report.rows]
    assert all(b >= a for a, b in zip(secs, secs[1:]))


def test_report_csv_roundtrip(tmp_path):
    rep = TrainReport()
    rep.log(5, 0.25, 0.1, 0.05, 0.1, 0.5, 1.25)
    rep.log(10, 0.12, 0.04, 0.04, 0.04, float("nan"), 2.5)
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    back = TrainReport.from_csv(path)
    assert back.rows[0] == rep.rows[0]
    assert math.isnan(back.rows[1][5])
    assert back.rows[1][0] == 10


def test_piecewise_log_rate_schedule():
    cfg = TrainConfig(learning_rate=1e-3, schedule="piecewise_log")
    assert cfg.rate_at(1) == 1e-3     # clipped by the base rate
    assert cfg.rate_at(5000) == 1e-3
    assert cfg.rate_at(10_000) == 1e-4
    assert cfg.rate_at(99_999) == 1e-4
    assert cfg.rate_at(100_000) == 1e-5
    assert TrainConfig(learning_rate=0.5).rate_at(123) == 0.5


def test_short_ldgm_run_reduces_beam_error():
    spec = get_problem("beam")
    net_cfg = default_network_config(spec, "ldgm", hidden_layers=2, width=16)
    report, _ = train(spec, "ldgm", net_cfg,
                      SamplerConfig(interior=64, initial=16, boundary=16, seed=0),
                      TrainConfig(stages=120, steps_per_stage=5, learning_rate=3e-3,
                                  log_every=20), seed=0)
    assert report.rows[-1][5] < report.rows[0][5]
    assert all(math.isfinite(r[1]) for r in report.rows)
