import numpy as np
import pytest

from ldgm.autodiff import Tape, backward
from ldgm.errors import ShapeError, UnsupportedOrderError
from ldgm.network import (TIME, AnalyticNetwork, DecoupledSpec, Network, NetworkConfig,
                          init_xavier, load_checkpoint, save_checkpoint)

from oracles import nested_derivative, relative


def beam_like_config():
    return NetworkConfig(input_dim=2, hidden_layers=3, width=50, output_dim=4)


def test_parameter_count_matches_shape_arithmetic():
    params = init_xavier(beam_like_config(), seed=0)
    # input affine + (L-1) hidden affines + output head
    assert params.count == (2 * 50 + 50) + 2 * (50 * 50 + 50) + (4 * 50 + 4)


def test_same_seed_gives_identical_parameters():
    cfg = beam_like_config()
    assert init_xavier(cfg, seed=42) == init_xavier(cfg, seed=42)
    assert init_xavier(cfg, seed=42) != init_xavier(cfg, seed=43)


def test_xavier_hidden_layer_variance_near_one_over_n():
    params = init_xavier(beam_like_config(), seed=1)
    w = params.arrays[params.names.index("w_h1")]
    assert w.size >= 2500
    assert abs(w.var() - 1 / 50) < 0.2 * (1 / 50)


def test_zero_parameters_give_zero_outputs():
    cfg = NetworkConfig(input_dim=2, hidden_layers=2, width=8, output_dim=3)
    params = init_xavier(cfg, seed=0)
    for i, a in enumerate(params.arrays):
        params.arrays[i] = np.zeros_like(a)
    tape = Tape()
    out = Network(cfg, params).bind(tape).forward(np.linspace(0, 1, 5).reshape(-1, 1),
                                                  np.zeros(5))
    for v in out.values:
        assert np.all(v.value == 0.0)


def test_single_identity_layer_is_affine():
    cfg = NetworkConfig(input_dim=2, hidden_layers=1, width=4, output_dim=2,
                        hidden_activation="identity")
    params = init_xavier(cfg, seed=3)
    x = np.random.default_rng(0).normal(size=(6, 1))
    t = np.random.default_rng(1).uniform(size=6)
    X = np.column_stack([x, t])
    w0, b0, w1, b1 = params.arrays
    want = (X @ w0 + b0) @ w1 + b1
    tape = Tape()
    out = Network(cfg, params).bind(tape).forward(x, t)
    got = np.stack([v.value for v in out.values], axis=1)
    assert np.allclose(got, want, rtol=0, atol=1e-14)


def straight_line_eval(cfg, params, X):
    h = X
    arrays = dict(zip(params.names, params.arrays))
    h = np.tanh(h @ arrays["w_in"] + arrays["b_in"])
    for i in range(1, cfg.hidden_layers):
        h = np.tanh(h @ arrays[f"w_h{i}"] + arrays[f"b_h{i}"])
    return h @ arrays["w_out"] + arrays["b_out"]


def test_forward_matches_independent_reimplementation():
    cfg = beam_like_config()
    params = init_xavier(cfg, seed=7)
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 2 * np.pi, size=(40, 1))
    t = rng.uniform(0, 1, size=40)
    tape = Tape()
    out = Network(cfg, params).bind(tape).forward(x, t)
    got = np.stack([v.value for v in out.values], axis=1)
    want = straight_line_eval(cfg, params, np.column_stack([x, t]))
    assert relative(got, want) < 1e-12


def test_mixed_mode_agreement_jet_vs_reverse():
    # order-1 jet coefficient along each axis == reverse-mode input gradient
    cfg = NetworkConfig(input_dim=3, hidden_layers=2, width=8, output_dim=2)
    params = init_xavier(cfg, seed=5)
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, size=(9, 2))
    t = rng.uniform(0, 1, size=9)
    net = Network(cfg, params)
    tape = Tape()
    bound = net.bind(tape)
    jout = bound.forward_with_derivatives(x, t, directions=[0, 1, TIME], order=1)
    plain = bound.forward(x, t)
    for j in range(cfg.output_dim):
        g = backward(tape, plain.values[j], wrt=[plain.input_node])[plain.input_node.idx]
        for col, dd in enumerate([0, 1, TIME]):
            jet_d1 = jout.jets[dd][j].coeffs[1].value
            assert relative(jet_d1, g[:, col]) < 1e-10


def test_jet_derivatives_match_fd_through_network():
    cfg = NetworkConfig(input_dim=2, hidden_layers=2, width=6, output_dim=1)
    params = init_xavier(cfg, seed=11)
    net = Network(cfg, params)
    t0 = 0.37

    def f(xv):
        tape = Tape()
        out = net.bind(tape).forward(np.array([[xv]]), np.array([t0]))
        return float(out.values[0].value[0])

    tape = Tape()
    out = net.bind(tape).forward_with_derivatives(np.array([[0.21]]), np.array([t0]),
                                                  directions=[0], order=4)
    for order in range(1, 5):
        got = float(out.jets[0][0].derivative(order).value[0])
        want = nested_derivative(f, 0.21, order)
        assert abs(got - want) <= 2e-4 * max(abs(want), 1e-6)


def test_constant_network_has_zero_derivatives():
    cfg = NetworkConfig(input_dim=2, hidden_layers=2, width=5, output_dim=1)
    params = init_xavier(cfg, seed=0)
    for i, (name, a) in enumerate(zip(params.names, params.arrays)):
        params.arrays[i] = np.zeros_like(a)
        if name == "b_out":
            params.arrays[i] = np.full_like(a, 1.5)
    tape = Tape()
    out = Network(cfg, params).bind(tape).forward_with_derivatives(
        np.array([[0.3], [0.6]]), np.array([0.1, 0.9]), directions=[0, TIME], order=3)
    assert np.allclose(out.values[0].value, 1.5)
    for dd in (0, TIME):
        for c in out.jets[dd][0].coeffs[1:]:
            assert np.all(c.value == 0.0)


def test_decoupled_outputs_have_private_branch_parameters():
    dec = DecoupledSpec(trunk_depth=2, branch_depth=1, groups=((0, 1), (2,)))
    cfg = NetworkConfig(input_dim=2, hidden_layers=3, width=6, output_dim=3, decoupled=dec)
    params = init_xavier(cfg, seed=9)
    net = Network(cfg, params)
    tape = Tape()
    bound = net.bind(tape)
    out = bound.forward(np.array([[0.2], [0.6]]), np.array([0.1, 0.4]))
    from ldgm import autodiff as ad
    g = backward(tape, ad.mean(out.values[0]))
    for name, var in bound.vars.items():
        if name.startswith("g1_"):
            assert np.all(g[var.idx] == 0.0), name
        if name.startswith(("w_in", "g0_")):
            assert np.any(g[var.idx] != 0.0), name


def test_decoupled_group_validation():
    with pytest.raises(ShapeError):
        NetworkConfig(input_dim=2, hidden_layers=3, width=4, output_dim=3,
                      decoupled=DecoupledSpec(groups=((0, 1),)))


def test_shape_and_order_errors():
    cfg = NetworkConfig(input_dim=2, hidden_layers=1, width=4, output_dim=1)
    net = Network(cfg, init_xavier(cfg, seed=0))
    with pytest.raises(ShapeError):
        net.bind(Tape()).forward(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(UnsupportedOrderError):
        net.bind(Tape()).forward_with_derivatives(np.zeros((3, 1)), np.zeros(3),
                                                  directions=[0], order=7)
    with pytest.raises(ShapeError):
        stat = NetworkConfig(input_dim=1, hidden_layers=1, width=4, output_dim=1)
        Network(stat, init_xavier(stat, 0)).bind(Tape()).forward_with_derivatives(
            np.zeros((3, 1)), None, directions=[TIME], order=1)


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    cfg = NetworkConfig(input_dim=2, hidden_layers=2, width=7, output_dim=3,
                        output_activation=("identity", "tanh", "identity"))
    params = init_xavier(cfg, seed=13)
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, cfg, params)
    cfg2, params2 = load_checkpoint(path)
    assert cfg2 == cfg
    assert params2 == params
    assert params2.to_vector().tobytes() == params.to_vector().tobytes()


def test_analytic_network_values_and_jets():
    mock = AnalyticNetwork(["exp(-t)*sin(x0)", "exp(-t)*cos(x0)"], spatial_dim=1)
    tape = Tape()
    x = np.array([[0.4], [1.1]])
    t = np.array([0.2, 0.5])
    out = mock.bind(tape).forward_with_derivatives(x, t, directions=[0, TIME], order=2)
    want = np.exp(-t) * np.sin(x[:, 0])
    assert np.allclose(out.values[0].value, want, rtol=1e-14)
    assert np.allclose(out.jets[0][0].coeffs[1].value, np.exp(-t) * np.cos(x[:, 0]), rtol=1e-13)
    assert np.allclose(out.jets[0][0].coeffs[2].value * 2, -want, rtol=1e-13)
    assert np.allclose(out.jets[TIME][1].coeffs[1].value, -np.exp(-t) * np.cos(x[:, 0]),
                       rtol=1e-13)
