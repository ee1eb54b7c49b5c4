import numpy as np
import pytest

from boltzflow.forward import collision_operator, entropy, solve_forward
from boltzflow.jko import compare_to_forward, jko_step, jko_trajectory
from boltzflow.metric import SolverOptions


def test_equilibrium_is_fixed_point(net, feq):
    step = jko_step(net, feq, 0.1, K=4)
    assert np.max(np.abs(step.state - feq)) <= 1e-6
    assert step.squared_distance <= 1e-10


def test_step_decreases_objective_and_entropy(net, tilted):
    f = tilted(1)
    step = jko_step(net, f, 0.1, K=4)
    H_prev = entropy(net, f)
    assert step.entropy <= H_prev
    assert step.objective <= H_prev + 1e-7
    assert step.squared_distance > 0
    assert np.all(step.state > 0)
    # moments preserved by the proximal step
    assert np.max(np.abs(net.moments(step.state) - net.moments(f))) <= 1e-7


def test_single_step_consistency(net, tilted):
    # (f_step - f_prev)/tau approximates Q(f_prev) to first order in tau
    f = tilted(2)
    Q = collision_operator(net, f)
    w = net.node_weight
    defects = []
    for tau in (2e-2, 1e-2):
        step = jko_step(net, f, tau, K=4)
        defects.append(w * np.sum(np.abs((step.state - f) / tau - Q)))
    assert defects[1] <= 0.7 * defects[0]


def test_step_validation(net, tilted):
    with pytest.raises(ValueError):
        jko_step(net, np.zeros(net.n_nodes), 0.1)
    with pytest.raises(ValueError):
        jko_step(net, tilted(0), -0.1)


def test_trajectory_entropy_monotone(net, tilted):
    traj = jko_trajectory(net, tilted(3), 0.1, 0.3, K=4)
    assert traj.n_steps == 3
    assert np.all(np.diff(traj.entropies) <= 1e-10)
    assert np.all(traj.residuals <= 1e-8)


def test_interpolant_piecewise_constant(net, tilted):
    traj = jko_trajectory(net, tilted(4), 0.1, 0.2, K=4)
    assert np.array_equal(traj.interpolant(0.0), traj.states[0])
    assert np.array_equal(traj.interpolant(0.05), traj.states[1])
    assert np.array_equal(traj.interpolant(0.1), traj.states[1])
    assert np.array_equal(traj.interpolant(0.15), traj.states[2])
    assert np.array_equal(traj.interpolant(5.0), traj.states[-1])
    with pytest.raises(ValueError):
        traj.interpolant(-0.5)


def test_csv_shape(net, tilted):
    traj = jko_trajectory(net, tilted(5), 0.1, 0.2, K=4)
    lines = traj.to_csv().strip().split("\n")
    assert lines[0] == "n,t,H,step_distance,residual"
    assert len(lines) == len(traj.states) + 1


def test_compare_to_forward(net, tilted):
    f0 = tilted(6)
    traj = jko_trajectory(net, f0, 0.1, 0.2, K=4)
    fwd = solve_forward(net, f0, 0.2)
    rep = compare_to_forward(traj, fwd, [0.1, 0.2])
    assert rep["max_l1"] < 0.1
    assert rep["max_w1"] <= rep["max_l1"] * 10  # sanity scale only
    assert len(rep["rows"]) == 2


def test_compare_network_mismatch(net, tilted):
    from boltzflow.kinematics import Kernel
    from boltzflow.network import build_network, maxent_project

    other = build_network(2, 1.0, 1.0, Kernel("constant", b=1.0))
    g = maxent_project(other, energy=1.0)
    fwd = solve_forward(other, g, 0.1)
    traj = jko_trajectory(net, tilted(7), 0.1, 0.1, K=4, opts=SolverOptions(tol=1e-8))
    with pytest.raises(ValueError, match="different networks"):
        compare_to_forward(traj, fwd, [0.1])
