"""Built-in example systems."""

import numpy as np

from .system import make_system

LINEAR = ("double-integrator", "triple-integrator", "harmonic", "double-integrator-2input")
PLANAR = ("planar-pendulum",)


class UnknownSystem(KeyError):
    def __str__(self):
        return self.args[0]


def _linear(name):
    if name == "double-integrator":
        return make_system([[0, 1], [0, 0]], [[0], [1]], name)
    if name == "triple-integrator":
        return make_system([[0, 1, 0], [0, 0, 1], [0, 0, 0]], [[0], [0], [1]], name)
    if name == "harmonic":
        return make_system([[0, 1], [-1, 0]], [[0], [1]], name)
    if name == "double-integrator-2input":
        # second column padded so that both inputs act on the velocity; each column stays normal
        return make_system([[0, 1], [0, 0]], [[0, 0], [1, 0.5]], name)
    raise AssertionError(name)


def catalog(name):
    """Return a fresh LinearSystem or PlanarSystem by catalog name."""
    if name in LINEAR:
        return _linear(name)
    if name in PLANAR:
        from .planar import pendulum_like

        return pendulum_like()
    raise UnknownSystem(f"unknown catalog entry {name!r}; available: {', '.join(LINEAR + PLANAR)}")


def names():
    return list(LINEAR + PLANAR)


def closed_form_double_integrator(x):
    """T for x1' = x2, x2' = u, |u| <= 1.

    Right of the switching curve x1 = -x2|x2|/2 the time is x2 + 2 sqrt(x1 + x2^2/2);
    the left side follows from T(x) = T(-x).
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    s = x1 + 0.5 * x2 * np.abs(x2)
    right = x2 + 2.0 * np.sqrt(np.maximum(x1 + 0.5 * x2 * x2, 0.0))
    left = -x2 + 2.0 * np.sqrt(np.maximum(-x1 + 0.5 * x2 * x2, 0.0))
    return np.where(s >= 0, right, left)
