"""Finite collision network on a velocity lattice.

Nodes are h * z for integer vectors z with |h z|_inf <= V.  Collision
quadruples (i, j) -> (k, l) are enumerated exactly with integer
conservation keys; each quadruple carries a kernel value B_q and a
quadrature weight W_q = h^{2d}.  Densities are arrays over nodes with
node weight w = h^d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kinematics import Kernel, collide


class BuildError(RuntimeError):
    pass


class MomentError(ValueError):
    pass


class NewtonError(RuntimeError):
    pass


@dataclass
class VelocityNetwork:
    d: int
    V: float
    h: float
    kernel: Kernel
    lattice: np.ndarray  # (n, d) integer coordinates
    nodes: np.ndarray  # (n, d) velocities, h * lattice
    quad: np.ndarray  # (Q, 4) node indices (i, j, k, l)
    omega: np.ndarray  # (Q, d) representative collision directions
    B_q: np.ndarray  # (Q,)
    W_q: np.ndarray  # (Q,)
    invariants: np.ndarray = field(default=None)  # (n, m) orthonormal basis

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_quadruples(self) -> int:
        return self.quad.shape[0]

    @property
    def node_weight(self) -> float:
        return self.h**self.d

    # -- density functionals -------------------------------------------------

    def mass(self, f: np.ndarray) -> float:
        return float(self.node_weight * np.sum(f))

    def momentum(self, f: np.ndarray) -> np.ndarray:
        return self.node_weight * (f @ self.nodes)

    def energy(self, f: np.ndarray) -> float:
        return float(self.node_weight * np.sum(f * np.sum(self.nodes**2, axis=1)))

    def moments(self, f: np.ndarray) -> np.ndarray:
        """(mass, momentum..., energy) as a flat vector of length d + 2."""
        return np.concatenate(
            [[self.mass(f)], self.momentum(f), [self.energy(f)]]
        )

    def pair_products(self, f: np.ndarray):
        """Forward and backward products (f_i f_j, f_k f_l) per quadruple."""
        i, j, k, l = self.quad.T
        return f[i] * f[j], f[k] * f[l]

    def grad_bar(self, phi: np.ndarray) -> np.ndarray:
        """Discrete collision gradient: phi_k + phi_l - phi_i - phi_j."""
        i, j, k, l = self.quad.T
        return phi[k] + phi[l] - phi[i] - phi[j]

    def div_bar(self, q_values: np.ndarray) -> np.ndarray:
        """Adjoint of grad_bar: scatter +1 on (k, l), -1 on (i, j)."""
        i, j, k, l = self.quad.T
        out = np.zeros(self.n_nodes)
        np.add.at(out, k, q_values)
        np.add.at(out, l, q_values)
        np.subtract.at(out, i, q_values)
        np.subtract.at(out, j, q_values)
        return out

    # -- export --------------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "d": self.d,
            "V": self.V,
            "h": self.h,
            "kernel": {
                "kind": self.kernel.kind,
                "b": self.kernel.b,
                "lo": self.kernel.lo,
                "hi": self.kernel.hi,
            },
            "lattice": self.lattice.tolist(),
            "quadruples": [
                {
                    "nodes": q.tolist(),
                    "omega": om.tolist(),
                    "B": float(b),
                    "W": float(wq),
                }
                for q, om, b, wq in zip(self.quad, self.omega, self.B_q, self.W_q)
            ],
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def _invariant_basis(n: int, quad: np.ndarray) -> np.ndarray:
    """Orthonormal basis of node functions conserved by every quadruple."""
    A = np.zeros((n, n))
    slots = [(0, 1.0), (1, 1.0), (2, -1.0), (3, -1.0)]
    for a, sa in slots:
        for b, sb in slots:
            np.add.at(A, (quad[:, a], quad[:, b]), sa * sb)
    vals, vecs = np.linalg.eigh(A)
    null = vals < 1e-9 * max(vals.max(), 1.0)
    return vecs[:, null]


def build_network(d: int, V: float, h: float, kernel: Kernel) -> VelocityNetwork:
    """Enumerate lattice nodes and all conservative collision quadruples.

    The join key is the exact integer pair (z_i + z_j, |z_i|^2 + |z_j|^2);
    quadruples are kept in canonical form i <= j, k <= l,
    (i, j) < (k, l), {i, j} != {k, l}, sorted for reproducible output.
    """
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    M = V / h
    if abs(M - round(M)) > 1e-9 or round(M) < 1:
        raise ValueError("V/h must be a positive integer")
    M = int(round(M))
    axes = np.arange(-M, M + 1)
    lattice = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    # deterministic node order: lexicographic in lattice coordinates
    order = np.lexsort(lattice.T[::-1])
    lattice = lattice[order]
    nodes = h * lattice.astype(float)
    n = len(lattice)

    groups: dict[tuple, list[tuple[int, int]]] = {}
    sq = np.sum(lattice**2, axis=1)
    for i in range(n):
        for j in range(i, n):
            key = tuple(lattice[i] + lattice[j]) + (int(sq[i] + sq[j]),)
            groups.setdefault(key, []).append((i, j))

    quads = []
    for pairs in groups.values():
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                (i, j), (k, l) = pairs[a], pairs[b]
                quads.append((i, j, k, l))
    if not quads:
        raise BuildError(
            f"no conservative quadruples on this grid (V/h = {M}); "
            "the smallest usable grid has V/h = 1 in d = 2"
        )
    quad = np.array(sorted(quads), dtype=np.int64)

    vi, vk = nodes[quad[:, 0]], nodes[quad[:, 2]]
    diff = vi - vk
    omega = diff / np.linalg.norm(diff, axis=1, keepdims=True)
    rel = nodes[quad[:, 0]] - nodes[quad[:, 1]]
    B_q = kernel(rel)
    W_q = np.full(len(quad), h ** (2 * d))

    net = VelocityNetwork(
        d=d,
        V=float(V),
        h=float(h),
        kernel=kernel,
        lattice=lattice,
        nodes=nodes,
        quad=quad,
        omega=omega,
        B_q=B_q,
        W_q=W_q,
    )
    net.invariants = _invariant_basis(n, quad)

    # every emitted quadruple must reproduce (v_k, v_l) under the collision map
    vp, vp_star = collide(nodes[quad[:, 0]], nodes[quad[:, 1]], omega)
    err = max(
        np.max(np.abs(vp - nodes[quad[:, 2]])), np.max(np.abs(vp_star - nodes[quad[:, 3]]))
    )
    if err > 1e-12:
        raise BuildError(f"quadruple collision-consistency failed (max error {err:.2e})")
    return net


def brute_force_quadruples(d: int, V: float, h: float) -> np.ndarray:
    """O(n^4) oracle enumeration of canonical conservative quadruples."""
    M = int(round(V / h))
    axes = np.arange(-M, M + 1)
    lattice = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    lattice = lattice[np.lexsort(lattice.T[::-1])]
    n = len(lattice)
    sq = np.sum(lattice**2, axis=1)
    out = []
    for i in range(n):
        for j in range(i, n):
            for k in range(n):
                for l in range(k, n):
                    if (i, j) >= (k, l) or {i, j} == {k, l}:
                        continue
                    if np.array_equal(lattice[i] + lattice[j], lattice[k] + lattice[l]) and (
                        sq[i] + sq[j] == sq[k] + sq[l]
                    ):
                        out.append((i, j, k, l))
    return np.array(sorted(out), dtype=np.int64)


def restrict_quadruples(net: VelocityNetwork, indices) -> VelocityNetwork:
    """Copy of the network keeping only the selected quadruples.

    Useful for single-reaction tests; the invariant basis is recomputed.
    """
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    sub = VelocityNetwork(
        d=net.d,
        V=net.V,
        h=net.h,
        kernel=net.kernel,
        lattice=net.lattice,
        nodes=net.nodes,
        quad=net.quad[indices],
        omega=net.omega[indices],
        B_q=net.B_q[indices],
        W_q=net.W_q[indices],
    )
    sub.invariants = _invariant_basis(net.n_nodes, sub.quad)
    return sub


# -- moment-matched densities ----------------------------------------------


def _exponential_fit(
    net: VelocityNetwork,
    log_base: np.ndarray,
    targets: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-12,
) -> np.ndarray:
    """Fit f = base * exp(a.v + b|v|^2) to (mass, momentum, energy) targets.

    Damped Newton on the normalized moment map; the Hessian is the
    feature covariance, positive definite on feasible interiors.
    """
    mass_t = targets[0]
    if mass_t <= 0:
        raise MomentError("target mass must be positive")
    feats = np.column_stack([net.nodes, np.sum(net.nodes**2, axis=1)])  # (n, d+1)
    want = targets[1:] / mass_t  # per-unit-mass momentum and energy
    lo, hi = feats.min(axis=0), feats.max(axis=0)
    if np.any(want <= lo) or np.any(want >= hi):
        raise MomentError(
            f"moment targets {targets} are not strictly inside the attainable range"
        )
    theta = np.zeros(net.d + 1)
    for _ in range(max_iter):
        logits = log_base + feats @ theta
        logits = logits - logits.max()
        p = np.exp(logits)
        p /= p.sum()
        mean = p @ feats
        resid = mean - want
        if np.max(np.abs(resid)) < tol:
            break
        cov = feats.T @ (p[:, None] * feats) - np.outer(mean, mean)
        try:
            step = np.linalg.solve(cov, resid)
        except np.linalg.LinAlgError as exc:
            raise NewtonError("singular moment covariance") from exc
        # backtracking on the dual objective log Z - theta . want
        def dual(th):
            z = log_base + feats @ th
            m = z.max()
            return m + np.log(np.sum(np.exp(z - m))) - th @ want

        base_val = dual(theta)
        scale = 1.0
        while scale > 1e-8:
            cand = theta - scale * step
            if dual(cand) < base_val + 1e-12:
                theta = cand
                break
            scale *= 0.5
        else:
            theta = theta - 1e-8 * step
    else:
        raise NewtonError(
            f"moment Newton did not converge in {max_iter} iterations "
            f"(residual {np.max(np.abs(resid)):.2e})"
        )
    logits = log_base + feats @ theta
    logits = logits - logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return mass_t * p / net.node_weight


def maxent_project(
    net: VelocityNetwork,
    mass: float = 1.0,
    momentum: np.ndarray = None,
    energy: float = None,
) -> np.ndarray:
    """Discrete Maxwellian: f ~ exp(a.v + b|v|^2) with prescribed moments.

    Defaults: unit mass, zero momentum, energy = d (per-coordinate unit
    variance).  This is the entropy minimizer and the network equilibrium.
    """
    if momentum is None:
        momentum = np.zeros(net.d)
    if energy is None:
        energy = float(net.d)
    targets = np.concatenate([[mass], np.asarray(momentum, dtype=float), [energy]])
    return _exponential_fit(net, np.zeros(net.n_nodes), targets)


def tilt_to_moments(net: VelocityNetwork, f0: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Minimal exponential tilt of f0 matching (mass, momentum, energy)."""
    f0 = np.asarray(f0, dtype=float)
    if np.any(f0 <= 0):
        raise MomentError("tilt_to_moments requires strictly positive f0")
    targets = np.asarray(targets, dtype=float)
    return _exponential_fit(net, np.log(f0), targets)
