import numpy as np
import pytest

from boltzflow.kinematics import Kernel
from boltzflow.network import build_network, maxent_project, tilt_to_moments


@pytest.fixture(scope="session")
def net():
    return build_network(2, 3.0, 1.0, Kernel("constant", b=1.0))


@pytest.fixture(scope="session")
def feq(net):
    return maxent_project(net)


@pytest.fixture(scope="session")
def tilted(net, feq):
    """Seeded moment-matched perturbations of the equilibrium."""

    def make(seed: int, amplitude: float = 0.3) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(seed))
        pert = feq * np.exp(amplitude * rng.standard_normal(net.n_nodes))
        return tilt_to_moments(net, pert, net.moments(feq))

    return make
