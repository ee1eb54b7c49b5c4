import numpy as np
import pytest

from boltzflow.forward import (
    collision_operator,
    dissipation,
    energy_identity_report,
    entropy,
    solve_forward,
)
from boltzflow.metric import boltzmann_flux


def test_collision_operator_conserves(net, tilted):
    f = tilted(0)
    q = collision_operator(net, f)
    w = net.node_weight
    assert abs(w * q.sum()) <= 1e-12
    assert np.max(np.abs(w * (q @ net.nodes))) <= 1e-12
    assert abs(w * np.sum(q * np.sum(net.nodes**2, axis=1))) <= 1e-12


def test_collision_operator_vanishes_at_equilibrium(net, feq):
    assert np.max(np.abs(collision_operator(net, feq))) <= 1e-12


def test_collision_operator_is_flux_divergence(net, tilted):
    f = tilted(4)
    q = collision_operator(net, f)
    rhs = net.div_bar(net.W_q * net.B_q * boltzmann_flux(net, f)) / net.node_weight
    assert np.allclose(q, rhs, atol=1e-15)


def test_collision_operator_rejects_negative(net):
    with pytest.raises(ValueError):
        collision_operator(net, -np.ones(net.n_nodes))


def test_entropy_and_dissipation(net, feq, tilted):
    f = tilted(1)
    assert entropy(net, f) > entropy(net, feq)  # equilibrium minimizes H
    assert dissipation(net, f) > 0
    assert abs(dissipation(net, feq)) <= 1e-14
    # 0 log 0 convention
    g = np.zeros(net.n_nodes)
    g[0] = 1.0 / net.node_weight
    assert np.isfinite(entropy(net, g))


def test_forward_conservation_and_monotonicity(net, tilted):
    traj = solve_forward(net, tilted(2), 2.0)
    drift = np.max(np.abs(traj.moments - traj.moments[0]))
    assert drift <= 1e-10
    assert np.all(np.diff(traj.H) <= 1e-12)
    assert np.all(traj.D >= 0)


def test_forward_equilibrium_fixed_point(net, feq):
    traj = solve_forward(net, feq, 1.0)
    assert np.max(np.abs(traj.states[-1] - feq)) <= 1e-10


def test_forward_relaxes_toward_equilibrium(net, feq, tilted):
    traj = solve_forward(net, tilted(3), 8.0)
    l1_start = net.node_weight * np.sum(np.abs(traj.states[0] - feq))
    l1_end = net.node_weight * np.sum(np.abs(traj.states[-1] - feq))
    assert l1_end < 0.02 * l1_start


def test_forward_input_validation(net):
    with pytest.raises(ValueError):
        solve_forward(net, np.zeros(net.n_nodes), 1.0)


def test_state_at_interpolates(net, tilted):
    traj = solve_forward(net, tilted(5), 1.0)
    assert np.array_equal(traj.state_at(0.0), traj.states[0])
    assert np.array_equal(traj.state_at(1.0), traj.states[-1])
    mid = traj.state_at(0.5)
    assert np.all(mid > 0)
    with pytest.raises(ValueError):
        traj.state_at(2.0)


def test_trajectory_csv(net, tilted):
    traj = solve_forward(net, tilted(6), 0.5)
    lines = traj.to_csv().strip().split("\n")
    assert lines[0] == "time,H,D,mass,px,py,energy"
    assert len(lines) == len(traj.times) + 1


def test_energy_identity_small_run(net, tilted):
    traj = solve_forward(net, tilted(7), 3.0, max_step=0.05)
    rep = energy_identity_report(traj)
    assert rep["global_residual"] <= 1e-6
    assert rep["max_interval_residual"] <= 1e-6


def test_max_step_is_respected(net, tilted):
    traj = solve_forward(net, tilted(8), 1.0, max_step=0.01)
    assert np.max(np.diff(traj.times)) <= 0.01 + 1e-12
