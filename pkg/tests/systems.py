"""Random system generators shared by the tests."""
import numpy as np

from dampedmodes import OscillatorSystem


def random_system(rng, n, damping=1.0, stiffness=1.0):
    """Stable system: ``K`` positive definite, ``Gamma`` positive semidefinite."""
    a = rng.normal(size=(n, n))
    k = stiffness * (a @ a.T / n + 0.5 * np.eye(n))
    c = rng.normal(size=(n, n))
    g = damping * (c @ c.T) / n
    return OscillatorSystem(k, g)


def random_state(rng, dim, real=False):
    v = rng.normal(size=dim)
    if not real:
        v = v + 1j * rng.normal(size=dim)
    return v
