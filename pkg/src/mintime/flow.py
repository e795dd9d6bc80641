"""Tabulated flows s -> e^{sA t} b_i and their antiderivatives, cached per system."""

import math

import numpy as np

from .linalg import expint, expm

FORWARD = 1
REVERSED = -1
_DIRECTIONS = {"forward": FORWARD, "reversed": REVERSED, 1: FORWARD, -1: REVERSED}


def direction_sign(direction):
    try:
        return _DIRECTIONS[direction]
    except (KeyError, TypeError):
        raise ValueError(f"direction must be 'forward' or 'reversed', got {direction!r}") from None


def spectral_window(A):
    """Zero-window estimate from the spectrum: 1.0 for real spectra, else 0.9*pi/omega_max."""
    omega = float(np.max(np.abs(np.linalg.eigvals(A).imag)))
    if omega <= 1e-12:
        return 1.0
    return 0.9 * math.pi / omega


class FlowTable:
    """Node values W[i,k,j] = (sA)^j e^{sA s_k} b_i and F[i,k] = int_0^{s_k} e^{sA u} b_i du."""

    def __init__(self, sys, sign, horizon):
        self.sign = sign
        A = np.asarray(sys.A, dtype=float)
        self.N = A.shape[0]
        self.M = sys.M
        self.J = 12 + self.N
        normA = float(np.linalg.norm(A, 2))
        h = spectral_window(A) / (4 * self.N)
        if normA > 0:
            h = min(h, 0.25 / normA)
        self.h = h
        self.invfact = np.array([1.0 / math.factorial(j) for j in range(self.J + 2)])
        self._A = A
        self._B = np.asarray(sys.B, dtype=float)
        self.K1 = 0
        self.W = np.zeros((self.M, 0, self.J, self.N))
        self.F = np.zeros((self.M, 0, self.N))
        self.extend(horizon)

    @property
    def horizon(self):
        # the last cell is usable up to its right end
        return (self.K1 - 2) * self.h

    def extend(self, horizon):
        K1 = int(math.ceil(horizon / self.h)) + 3
        if K1 <= self.K1:
            return
        sA = self.sign * self._A
        W = np.empty((self.M, K1, self.J, self.N))
        F = np.empty((self.M, K1, self.N))
        W[:, : self.K1] = self.W
        F[:, : self.K1] = self.F
        for k in range(self.K1, K1):
            s = k * self.h
            P = expm(sA, s)
            for i in range(self.M):
                b = self._B[:, i]
                v = P @ b
                for j in range(self.J):
                    W[i, k, j] = v
                    v = sA @ v
                F[i, k] = expint(self._A, b, 0.0, s, self.sign)
        self.W, self.F, self.K1 = W, F, K1

    def ensure(self, t):
        if t > self.horizon:
            self.extend(max(2.0 * self.horizon, 1.25 * t))

    def top(self):
        return self.N - 1


def flow_table(sys, direction, horizon=4.0):
    sign = direction_sign(direction)
    key = ("flow", sign)
    tab = sys._cache.get(key)
    if tab is None:
        tab = FlowTable(sys, sign, max(horizon, 4.0))
        sys._cache[key] = tab
    else:
        tab.ensure(horizon)
    return tab
