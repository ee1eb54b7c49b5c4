"""Command-line surface and reproducible run artifacts.

Each subcommand dispatches one experiment, writes CSV/JSON outputs to
the run directory, and finishes with a manifest recording the config
hash and a checksum inventory of every emitted file.

Exit codes: 0 success, 2 configuration error, 3 domain error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_to_dict, parse_config
from .forward import (
    NumericalError,
    StiffnessError,
    energy_identity_report,
    solve_forward,
)
from .jko import compare_to_forward, jko_trajectory
from .kac import (
    consistency_report,
    empirical_entropy,
    empirical_moments,
    sample_initial,
    simulate,
)
from .kinematics import Kernel
from .metric import ConvergenceError, SolverOptions, solve_distance
from .network import (
    BuildError,
    MomentError,
    NewtonError,
    VelocityNetwork,
    build_network,
    maxent_project,
    tilt_to_moments,
)
from .scalars import GaussianMixture

EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_NUMERICAL = 4

_DOMAIN_ERRORS = (MomentError, BuildError, ValueError)
_NUMERICAL_ERRORS = (NumericalError, StiffnessError, ConvergenceError, NewtonError)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_clock: float
    tolerances: dict
    files: dict  # name -> sha256

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "version": self.version,
                "wall_clock": self.wall_clock,
                "tolerances": self.tolerances,
                "files": self.files,
            },
            indent=1,
            sort_keys=True,
        )


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _net(cfg: RunConfig) -> VelocityNetwork:
    return build_network(cfg.network.d, cfg.network.V, cfg.network.h,
                         cfg.kernel.build())


def _tilted_state(net: VelocityNetwork, amplitude: float, seed: int) -> np.ndarray:
    """Seeded positive perturbation of the equilibrium, moments restored."""
    feq = maxent_project(net)
    rng = np.random.Generator(np.random.Philox(seed))
    pert = feq * np.exp(amplitude * rng.standard_normal(net.n_nodes))
    return tilt_to_moments(net, pert, net.moments(feq))


def bimodal_mixture(d: int, speed: float, sigma2: float = None) -> GaussianMixture:
    """Symmetric two-bump mixture at +-speed e_1.

    With sigma2 = None the component variance is set so the mixture has
    energy d exactly (needed when particles are drawn from it); pass an
    explicit variance when only the lattice shape matters.
    """
    if sigma2 is None:
        if speed**2 >= d:
            raise ValueError(
                f"bimodal speed {speed} exceeds the energy budget for d={d}"
            )
        sigma2 = (d - speed**2) / d
    u = np.zeros(d)
    u[0] = speed
    return GaussianMixture(
        np.array([0.5, 0.5]), np.array([u, -u]),
        np.array([sigma2 * np.eye(d)] * 2),
    )


def density_from_mixture(net: VelocityNetwork, mix: GaussianMixture) -> np.ndarray:
    """Mixture pdf restricted to the nodes, tilted to (1, 0, d) moments."""
    pdf = mix.pdf(net.nodes)
    base = pdf / (net.node_weight * pdf.sum())
    targets = np.concatenate([[1.0], np.zeros(net.d), [float(net.d)]])
    return tilt_to_moments(net, base, targets)


# -- experiment runners ------------------------------------------------------


def _run_forward(cfg: RunConfig, write) -> dict:
    net = _net(cfg)
    exp = cfg.experiment
    f0 = _tilted_state(net, exp["perturbation"], cfg.seed)
    max_step = exp["max_step"] if exp["max_step"] > 0 else np.inf
    traj = solve_forward(net, f0, exp["T"], dt_init=exp["dt_init"],
                         tol=exp["tol"], max_step=max_step)
    write("trajectory.csv", traj.to_csv())
    report = energy_identity_report(traj)
    write("report.json", json.dumps({
        "steps": len(traj.times) - 1,
        "H_initial": traj.H[0],
        "H_final": traj.H[-1],
        "dissipation_final": traj.D[-1],
        "energy_identity_global_residual": report["global_residual"],
        "energy_identity_max_interval_residual": report["max_interval_residual"],
    }, indent=1, sort_keys=True))
    return {"forward.tol": exp["tol"]}


def _run_distance(cfg: RunConfig, write) -> dict:
    net = _net(cfg)
    exp = cfg.experiment
    feq = maxent_project(net)
    f1 = _tilted_state(net, exp["perturbation"], cfg.seed)
    sol = solve_distance(net, feq, f1, K=exp["K"],
                         opts=SolverOptions(tol=exp["tol"]))
    write("solution.json", json.dumps({
        "value": sol.value,
        "squared": sol.squared,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "floor_sensitivity": sol.floor_sensitivity,
        "slice_actions": sol.slice_actions.tolist(),
    }, indent=1, sort_keys=True))
    lines = ["slice," + ",".join(f"node{v}" for v in range(net.n_nodes))]
    for m, row in enumerate(sol.path):
        lines.append(f"{m}," + ",".join(f"{x:.17g}" for x in row))
    write("path.csv", "\n".join(lines) + "\n")
    return {"distance.tol": exp["tol"]}


def _run_jko(cfg: RunConfig, write) -> dict:
    net = _net(cfg)
    exp = cfg.experiment
    # unit-variance bumps: keeps lattice tails well above the solver floor
    f0 = density_from_mixture(net, bimodal_mixture(net.d, exp["bimodal_speed"], 1.0))
    opts = SolverOptions(tol=exp["tol"])
    traj = jko_trajectory(net, f0, exp["tau"], exp["T"], K=exp["K"], opts=opts)
    write("jko.csv", traj.to_csv())
    fwd = solve_forward(net, f0, exp["T"])
    probes = [t for t in exp["probe_times"] if t <= exp["T"] + 1e-12] or [exp["T"]]
    comp = compare_to_forward(traj, fwd, probes)
    write("comparison.json", json.dumps({
        "tau": comp["tau"],
        "max_l1": comp["max_l1"],
        "max_w1": comp["max_w1"],
        "rows": comp["rows"],
    }, indent=1, sort_keys=True))
    return {"jko.tol": exp["tol"]}


def _kac_replicate(args):
    d, speed, N, T, kernel, seed, jump, ou_time = args
    rng = np.random.Generator(np.random.Philox(seed).jumped(jump))
    mix = bimodal_mixture(d, speed)
    state = sample_initial(N, mix, rng)
    final, log = simulate(state, kernel, T, rng)
    est, se = empirical_entropy(final, ou_time, seed=rng) if ou_time > 0 else (0.0, 0.0)
    mom = empirical_moments(final)
    return {
        "events": log.n_events,
        "accepted": log.n_accepted,
        "fourth": mom["fourth"],
        "second": mom["second"],
        "entropy": est,
        "entropy_se": se,
        "log_csv": log.to_csv(),
    }


def _parallel_map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _run_kac(cfg: RunConfig, write) -> dict:
    exp = cfg.experiment
    kernel = cfg.kernel.build()
    jobs = [
        (cfg.network.d, exp["bimodal_speed"], exp["N"], exp["T"], kernel,
         cfg.seed, rep, exp["ou_time"])
        for rep in range(exp["replicates"])
    ]
    results = _parallel_map(_kac_replicate, jobs, cfg.threads)
    for rep, res in enumerate(results):
        write(f"events_{rep:03d}.csv", res.pop("log_csv"))
    write("summary.json", json.dumps({
        "replicates": exp["replicates"],
        "derived_streams": [f"philox({cfg.seed}).jumped({r})"
                            for r in range(exp["replicates"])],
        "results": results,
    }, indent=1, sort_keys=True))
    return {"kac.ou_time": exp["ou_time"]}


def _consistency_replicate(args):
    d, speed, N, T, kernel, seed, jump, probes = args
    rng = np.random.Generator(np.random.Philox(seed).jumped(jump))
    mix = bimodal_mixture(d, speed)
    state = sample_initial(N, mix, rng)
    _, _, snaps = simulate(state, kernel, T, rng, record_times=probes)
    return snaps


def _run_consistency(cfg: RunConfig, write) -> dict:
    exp = cfg.experiment
    kernel = cfg.kernel.build()
    d = cfg.network.d
    ref = build_network(d, cfg.network.V, exp["reference_h"], kernel)
    f0 = density_from_mixture(ref, bimodal_mixture(d, exp["bimodal_speed"]))
    probes = list(exp["probe_times"])
    fwd = solve_forward(ref, f0, max(max(probes), 1e-6))
    runs = {}
    jump = 0
    for N in exp["Ns"]:
        jobs = []
        for _ in range(exp["replicates"]):
            jobs.append((d, exp["bimodal_speed"], int(N), exp["T"], kernel,
                         cfg.seed, jump, probes))
            jump += 1
        runs[int(N)] = _parallel_map(_consistency_replicate, jobs, cfg.threads)
    report = consistency_report(runs, fwd, probes)
    lines = ["time,N,kac_mean,kac_ci,fwd_value"]
    for row in report["rows"]:
        for a, t in enumerate(report["probe_times"]):
            lines.append(
                f"{t:.17g},{row['N']},{row['kac_mean'][a]:.17g},"
                f"{1.96 * row['per_time_se'][a]:.17g},{row['fwd'][a]:.17g}"
            )
    write("report.csv", "\n".join(lines) + "\n")
    write("report.json", json.dumps({
        "monotone": report["monotone"],
        "separated": report["separated"],
        "discrepancies": [
            {"N": r["N"], "discrepancy": r["discrepancy"], "ci": r["ci"]}
            for r in report["rows"]
        ],
    }, indent=1, sort_keys=True))
    return {"consistency.replicates": exp["replicates"]}


def _run_network_build(cfg: RunConfig, write) -> dict:
    net = _net(cfg)
    write("network.json", net.to_json())
    return {}


_RUNNERS = {
    "network": _run_network_build,
    "forward": _run_forward,
    "distance": _run_distance,
    "jko": _run_jko,
    "kac": _run_kac,
    "consistency": _run_consistency,
}


def run(cfg: RunConfig, experiment_kind: str = None) -> RunManifest:
    """Dispatch the configured experiment and write outputs plus manifest."""
    kind = experiment_kind or cfg.experiment["type"]
    if kind != "network" and cfg.experiment["type"] != kind:
        raise ConfigError(
            f"config experiment.type {cfg.experiment['type']!r} does not match "
            f"requested command {kind!r}"
        )
    os.makedirs(cfg.out, exist_ok=True)
    written = {}

    def write(name: str, text: str):
        path = os.path.join(cfg.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written[name] = path

    start = time.monotonic()
    tolerances = _RUNNERS[kind](cfg, write)
    wall = time.monotonic() - start

    manifest = RunManifest(
        config_hash=_config_hash(cfg),
        version=__version__,
        wall_clock=wall,
        tolerances=tolerances,
        files={name: _sha256(path) for name, path in sorted(written.items())},
    )
    with open(os.path.join(cfg.out, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    return manifest


# -- selftest ----------------------------------------------------------------


def selftest() -> list:
    """Fast invariant battery; returns (name, ok, detail) triples."""
    from .forward import collision_operator, dissipation, entropy
    from .kinematics import collide
    from .metric import single_quadruple_oracle
    from .network import restrict_quadruples

    checks = []
    rng = np.random.default_rng(0)

    v, vs = rng.standard_normal((2, 100, 3))
    om = rng.standard_normal((100, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    vp, vps = collide(v, vs, om)
    vb, vsb = collide(vp, vps, om)
    err = max(np.max(np.abs(vb - v)), np.max(np.abs(vsb - vs)))
    checks.append(("collision involution", err <= 1e-12, f"max error {err:.2e}"))

    net = build_network(2, 3, 1, Kernel("constant", b=1.0))
    checks.append(("network invariant count", net.invariants.shape[1] == net.d + 2,
                   f"dim {net.invariants.shape[1]}"))
    feq = maxent_project(net)
    q = collision_operator(net, feq)
    checks.append(("detailed balance", np.max(np.abs(q)) <= 1e-12,
                   f"|Q(f_eq)| {np.max(np.abs(q)):.2e}"))

    f0 = _tilted_state(net, 0.3, 1)
    traj = solve_forward(net, f0, 1.0)
    checks.append(("entropy monotone", bool(np.all(np.diff(traj.H) <= 1e-12)),
                   f"H: {traj.H[0]:.6f} -> {traj.H[-1]:.6f}"))
    drift = np.max(np.abs(traj.moments - traj.moments[0]))
    checks.append(("moment conservation", drift <= 1e-10, f"drift {drift:.2e}"))

    sub = restrict_quadruples(net, [0])
    i, j, k, l = sub.quad[0]
    g0 = np.full(net.n_nodes, 0.1)
    s = np.zeros(net.n_nodes)
    s[[i, j]] += 1.0
    s[[k, l]] -= 1.0
    g1 = g0 - 0.02 / sub.node_weight * s
    oracle = single_quadruple_oracle(sub, g0, g1)
    sol = solve_distance(sub, g0, g1, K=16)
    gap = abs(sol.value - oracle)
    checks.append(("metric vs 1-d oracle", gap <= 1e-4, f"gap {gap:.2e}"))

    D = dissipation(net, f0)
    H0 = entropy(net, f0)
    checks.append(("dissipation positive off equilibrium", D > 0,
                   f"D {D:.3e}, H {H0:.3f}"))
    return checks


# -- argument parsing --------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None, help="JSON config path")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="overrides config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="replicate-level worker count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boltzflow",
        description="Kinetic gradient-flow toolkit on finite velocity networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    net_cmd = sub.add_parser("network", help="velocity network utilities")
    net_sub = net_cmd.add_subparsers(dest="network_command", required=True)
    build_cmd = net_sub.add_parser("build", help="enumerate and export the network")
    _add_common(build_cmd)

    for name, desc in (
        ("forward", "integrate the collision dynamics"),
        ("distance", "collision distance between two states"),
        ("jko", "minimizing-movement scheme vs forward flow"),
        ("kac", "Kac N-particle random walk"),
        ("consistency", "Kac mean-field consistency report"),
    ):
        cmd = sub.add_parser(name, help=desc)
        _add_common(cmd)

    selftest_cmd = sub.add_parser("selftest", help="run the invariant battery")
    _add_common(selftest_cmd)
    return parser


def _load_config(args, default_experiment: str) -> RunConfig:
    if args.config is not None:
        cfg = parse_config(args.config)
    else:
        from .config import parse_config_dict
        cfg = parse_config_dict({"experiment": {"type": default_experiment}})
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be a positive integer")
        cfg.threads = args.threads
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            ok = True
            for name, passed, detail in selftest():
                ok &= bool(passed)
                print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
            return 0 if ok else EXIT_NUMERICAL
        if args.command == "network":
            cfg = _load_config(args, "forward")
            run(cfg, experiment_kind="network")
            print(f"network written to {cfg.out}")
            return 0
        cfg = _load_config(args, args.command)
        manifest = run(cfg, experiment_kind=args.command)
        print(f"{args.command} run complete in {manifest.wall_clock:.2f}s; "
              f"outputs in {cfg.out}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _DOMAIN_ERRORS as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
