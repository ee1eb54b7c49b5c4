import numpy as np
import pytest

from boltzflow.forward import dissipation, solve_forward
from boltzflow.metric import (
    SolverOptions,
    boltzmann_flux,
    cre_residual,
    discrete_action,
    gradient_form_residual,
    single_quadruple_oracle,
    solve_distance,
    w1_distance,
)
from boltzflow.network import MomentError, restrict_quadruples
from boltzflow.scalars import action_density


def test_discrete_action_zero_flux(net, tilted):
    assert discrete_action(net, tilted(0), np.zeros(net.n_quadruples)) == 0.0


def test_discrete_action_brute_force(net, tilted):
    rng = np.random.default_rng(1)
    f = tilted(1)
    J = 0.01 * rng.standard_normal(net.n_quadruples)
    p, r = net.pair_products(f)
    ref = sum(
        4.0 * net.W_q[q] * net.B_q[q] * action_density(J[q], p[q], r[q])
        for q in range(net.n_quadruples)
    )
    assert np.isclose(discrete_action(net, f, J), ref, rtol=1e-12)


def test_discrete_action_dead_quadruple(net):
    f = np.zeros(net.n_nodes)
    J = np.zeros(net.n_quadruples)
    assert discrete_action(net, f, J) == 0.0
    J[0] = 1.0
    assert discrete_action(net, f, J) == np.inf


def test_cre_residual_trivial(net, tilted):
    f = tilted(2)
    path = np.broadcast_to(f, (5, net.n_nodes)).copy()
    assert cre_residual(net, path, np.zeros((4, net.n_quadruples))) == 0.0
    with pytest.raises(ValueError):
        cre_residual(net, path[:3], np.zeros((4, net.n_quadruples)))


def test_cre_single_reaction_bookkeeping(net, tilted):
    # one interval, flux on one quadruple moves exactly the endpoint gap
    sub = restrict_quadruples(net, [0])
    i, j, k, l = sub.quad[0]
    f0 = np.full(net.n_nodes, 0.2)
    delta = 0.01
    s = np.zeros(net.n_nodes)
    s[[i, j]] += 1.0
    s[[k, l]] -= 1.0
    f1 = f0 - delta / sub.node_weight * s
    kappa = float(sub.W_q[0] * sub.B_q[0])
    J = np.array([[delta / kappa]])
    assert cre_residual(sub, np.stack([f0, f1]), J) <= 1e-15


def test_boltzmann_flux_satisfies_cre(net, tilted):
    # resample a forward trajectory; CRE residual vanishes with the slice width
    # (fine max_step so state interpolation error stays subdominant)
    traj = solve_forward(net, tilted(3), 0.2, max_step=0.2 / 256)
    res = []
    for K in (8, 16):
        ts = np.linspace(0.0, 0.2, K + 1)
        path = np.array([traj.state_at(t) for t in ts])
        flux = np.array(
            [boltzmann_flux(net, 0.5 * (path[m] + path[m + 1])) for m in range(K)]
        )
        # time rescaling: path on [0,1] carries dt = T/K worth of physical flux
        res.append(cre_residual(net, path, 0.2 * flux))
    assert res[1] <= 0.6 * res[0]  # at least first order in the slice width


def test_flux_action_equals_dissipation(net, tilted):
    f = tilted(4)
    J = boltzmann_flux(net, f)
    assert np.isclose(discrete_action(net, f, J), dissipation(net, f), rtol=1e-10)


def test_distance_zero_on_identical(net, tilted):
    f = tilted(5)
    sol = solve_distance(net, f, f, K=4)
    assert sol.value <= 1e-8
    assert np.max(np.abs(sol.flux)) <= 1e-8


def test_distance_symmetry_and_positivity(net, tilted):
    f0, f1 = tilted(6), tilted(7)
    a = solve_distance(net, f0, f1, K=4)
    b = solve_distance(net, f1, f0, K=4)
    assert a.value > 0
    assert abs(a.value - b.value) <= 2e-8
    assert a.kkt_residual <= 1e-8


def test_distance_path_properties(net, tilted):
    f0, f1 = tilted(6), tilted(7)
    sol = solve_distance(net, f0, f1, K=4)
    assert np.allclose(sol.path[0], f0) and np.allclose(sol.path[-1], f1)
    assert np.all(sol.path > 0)
    # moments conserved along the path
    for m in range(sol.path.shape[0]):
        assert np.max(np.abs(net.moments(sol.path[m]) - net.moments(f0))) <= 1e-7
    assert cre_residual(net, sol.path, sol.flux) <= 1e-9
    spread = np.std(sol.slice_actions) / np.mean(sol.slice_actions)
    assert spread <= 1e-3


def test_distance_moment_mismatch_rejected(net, feq, tilted):
    bad = feq * 1.01
    with pytest.raises(MomentError):
        solve_distance(net, feq, bad, K=4)
    with pytest.raises(ValueError):
        solve_distance(net, feq, np.zeros_like(feq), K=4)


def test_gradient_form_residual_optimal_vs_circulated(net, tilted):
    f0, f1 = tilted(6), tilted(7)
    sol = solve_distance(net, f0, f1, K=4, opts=SolverOptions(tol=1e-10))
    assert gradient_form_residual(net, sol) <= 1e-4
    # corrupt the flux with a divergence-free circulation: residual jumps
    rng = np.random.default_rng(0)
    pert = rng.standard_normal(net.n_quadruples)
    # project onto the kernel of div_bar(W B .) by least squares
    i, j, k, l = net.quad.T
    S = np.zeros((net.n_nodes, net.n_quadruples))
    for q in range(net.n_quadruples):
        S[[k[q], l[q]], q] += net.W_q[q] * net.B_q[q]
        S[[i[q], j[q]], q] -= net.W_q[q] * net.B_q[q]
    pert -= np.linalg.lstsq(S, S @ pert, rcond=None)[0]
    bad = sol.flux.copy()
    bad[2] += 0.05 * pert
    from dataclasses import replace

    worse = replace(sol, flux=bad)
    assert gradient_form_residual(net, worse) > 1e-2


def test_single_quadruple_oracle_matches(net):
    sub = restrict_quadruples(net, [0])
    i, j, k, l = sub.quad[0]
    f0 = np.full(net.n_nodes, 0.1)
    s = np.zeros(net.n_nodes)
    s[[i, j]] += 1.0
    s[[k, l]] -= 1.0
    f1 = f0 - 0.02 / sub.node_weight * s
    ref = single_quadruple_oracle(sub, f0, f1)
    # Richardson in K: K-slice values converge from above at order K^-2
    sq = {K: solve_distance(sub, f0, f1, K=K).squared for K in (16, 32)}
    extrap = np.sqrt((4.0 * sq[32] - sq[16]) / 3.0)
    assert abs(extrap - ref) <= 1e-8 * ref


def test_single_quadruple_oracle_validation(net, tilted):
    with pytest.raises(ValueError):
        single_quadruple_oracle(net, tilted(0), tilted(1))
    sub = restrict_quadruples(net, [0])
    with pytest.raises(ValueError, match="not connected"):
        single_quadruple_oracle(sub, np.full(net.n_nodes, 0.1), np.full(net.n_nodes, 0.2))


def test_w1_distance():
    from boltzflow.kinematics import Kernel
    from boltzflow.network import build_network

    small = build_network(2, 1.0, 1.0, Kernel("constant", b=1.0))
    f0 = np.zeros(small.n_nodes)
    f1 = np.zeros(small.n_nodes)
    # move unit mass between two nodes a known distance apart
    a, b = 0, small.n_nodes - 1
    f0[a] = 1.0
    f1[b] = 1.0
    dist = np.linalg.norm(small.nodes[a] - small.nodes[b])
    assert np.isclose(w1_distance(small, f0, f1), small.node_weight * dist, rtol=1e-9)
    assert w1_distance(small, f0, f0) <= 1e-12
