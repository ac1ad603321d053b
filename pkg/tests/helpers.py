"""Small shared builders for the test modules."""
import numpy as np

from qetlab.model import ising, prepare
from qetlab.protocol import FeedbackControl, MeasurementScheme, Region


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


def random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def reference_setup(n_sites=8, b=1.0, g=0.5, n_a=1, n_b=5, l_a=0, l_b=1):
    model, ground = prepare(ising(n_sites, b, g))
    a, bb = Region(n_a, l_a), Region(n_b, l_b)
    scheme = MeasurementScheme.bloch_projective(a.sites, (1, 0, 0))
    control = FeedbackControl.bloch(n_b, (0, 1, 0), len(scheme))
    return model, ground, a, bb, scheme, control
