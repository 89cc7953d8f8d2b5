import numpy as np
import pytest

from eigennet.topology import Graph, metropolis_weights, spectral_bounds


@pytest.fixture
def path3():
    return Graph(3, ((0, 1), (1, 2)))


@pytest.fixture
def path3_weights(path3):
    return metropolis_weights(path3)


@pytest.fixture
def path3_cheb(path3_weights):
    return spectral_bounds(path3_weights)


def random_hermitian_psd(k, seed, n=None):
    """Random PSD Hermitian matrix via a complex sample product."""
    rng = np.random.default_rng(seed)
    n = n or k
    y = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    return (y @ y.conj().T) / n


def random_samples(k, n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))


def random_connected_graph(k, seed, p=0.45):
    """Erdos-Renyi-style connected graph: spanning chain plus random edges."""
    rng = np.random.default_rng(seed)
    edges = {(i, i + 1) for i in range(k - 1)}
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < p:
                edges.add((i, j))
    return Graph(k, tuple(sorted(edges)))
