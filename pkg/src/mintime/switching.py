"""Switching functions g_i(t) = <zeta, e^{+-At} b_i>: evaluation, zeros, sign patterns.

Direction "forward" uses e^{At}, "reversed" uses e^{-At}.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .flow import direction_sign, flow_table, spectral_window
from .linalg import expm

MULT_REL = 1e-7


@dataclass(frozen=True)
class SwitchingProfile:
    channel: int
    direction: str
    horizon: float
    zeros: tuple  # ((time, multiplicity), ...)
    initial_sign: int
    pattern: tuple  # ((start, end, sign), ...) on open intervals, consecutive signs alternate

    @property
    def times(self):
        return np.array([z for z, _ in self.zeros])

    @property
    def multiplicities(self):
        return [m for _, m in self.zeros]

    def switch_times(self):
        """Interior zeros where the sign actually flips."""
        return [p[1] for p in self.pattern[:-1]]

    def sign_at(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, b, s in self.pattern:
            out[(t > a) & (t < b)] = s
        return out


def _check_channel(sys, i):
    if not 0 <= int(i) < sys.M:
        raise IndexError(f"channel {i} out of range for M={sys.M}")
    return int(i)


def _name(direction):
    return "forward" if direction_sign(direction) > 0 else "reversed"


def switching_eval(sys, zeta, i, t, direction="reversed"):
    """<zeta, e^{+-At} b_i> through a direct matrix exponential."""
    i = _check_channel(sys, i)
    s = direction_sign(direction)
    return float(np.dot(np.asarray(zeta, dtype=float), expm(s * sys.A, t) @ sys.B[:, i]))


def switching_derivative(sys, zeta, i, t, m, direction="reversed"):
    """d^m/dt^m <zeta, e^{sAt} b_i> = <zeta, (sA)^m e^{sAt} b_i>."""
    i = _check_channel(sys, i)
    s = direction_sign(direction)
    sA = s * np.asarray(sys.A)
    v = expm(sA, t) @ sys.B[:, i]
    for _ in range(m):
        v = sA @ v
    return float(np.dot(np.asarray(zeta, dtype=float), v))


def _zeros_raw(sys, zeta, i, tau, direction):
    tab = flow_table(sys, direction, tau)
    return tab, K.channel_zeros(tab.W, tab.h, tab.invfact, i, zeta, float(tau), tab.top())


def _multiplicity(sys, c, tab, kmax, z, zeta, i):
    normA = sys.norm2
    scale = float(np.linalg.norm(zeta)) * float(np.linalg.norm(sys.B[:, i]))
    for m in range(1, sys.N):
        d = K.gder(c, tab.h, tab.invfact, z, m, kmax)
        if abs(d) > MULT_REL * scale * normA ** m:
            return m
    return sys.N - 1


def find_zeros(sys, zeta, i, tau, direction="reversed"):
    """All zeros of g_i on [0, tau] with multiplicities and the sign pattern between them."""
    sys.require_normal()
    i = _check_channel(sys, i)
    zeta = np.asarray(zeta, dtype=float)
    if not np.any(zeta):
        raise ValueError("zeta must be nonzero")
    tau = float(tau)
    if tau < 0:
        raise ValueError("horizon must be nonnegative")
    if tau == 0.0:
        return SwitchingProfile(i, _name(direction), 0.0, (), 0, ())
    tab, (z, c, kmax) = _zeros_raw(sys, zeta, i, tau, direction)
    zeros = tuple((float(t), _multiplicity(sys, c, tab, kmax, float(t), zeta, i)) for t in z)
    # pieces between consecutive zeros, merged where the sign does not change
    cuts = [0.0] + [t for t, _ in zeros if 0.0 < t < tau] + [tau]
    pattern = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        g = K.gder(c, tab.h, tab.invfact, 0.5 * (a + b), 0, kmax)
        s = 1 if g > 0 else -1
        if pattern and pattern[-1][2] == s:
            pattern[-1] = (pattern[-1][0], b, s)
        else:
            pattern.append((a, b, s))
    initial = pattern[0][2] if pattern else 0
    return SwitchingProfile(i, _name(direction), tau, zeros, initial, tuple(pattern))


def sign_pattern(sys, zeta, tau, direction="reversed"):
    """Per-channel sign profiles; this is the map zeta -> sign(g(., zeta))."""
    return [find_zeros(sys, zeta, i, tau, direction) for i in range(sys.M)]


def max_zeros_in_window(profile, width):
    """Largest multiplicity-weighted zero count over windows [s, s + width]."""
    ts = [t for t, _ in profile.zeros]
    ms = [m for _, m in profile.zeros]
    best = 0
    for a in range(len(ts)):
        total = 0
        for b in range(a, len(ts)):
            if ts[b] - ts[a] > width:
                break
            total += ms[b]
        best = max(best, total)
    return best


def zero_window_bound(sys, samples=1000, seed=0, span=4.0):
    """Window length tau_bar with no sampled switching function having N zeros inside it.

    Starts from the spectral estimate (1 for real spectra, 0.9*pi/omega_max
    otherwise) and halves it until random costates on [0, span*tau_bar] in
    both directions pass.  Empirical, not a certified bound.
    """
    sys.require_normal()
    key = ("tau_bar", samples, seed, span)
    if key in sys._cache:
        return sys._cache[key]
    tau = spectral_window(sys.A)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((samples, sys.N))
    for _ in range(30):
        if _window_ok(sys, Z, tau, span):
            break
        tau *= 0.5
    sys._cache[key] = tau
    return tau


def _window_ok(sys, Z, tau, span):
    for direction in ("reversed", "forward"):
        for zeta in Z:
            for i in range(sys.M):
                if max_zeros_in_window(find_zeros(sys, zeta, i, span * tau, direction), tau) >= sys.N:
                    return False
    return True
