"""Dense kernels: matrix exponentials, exponential-weighted integrals, Krylov chains."""

import numpy as np
import scipy.linalg

MAX_DIM = 8
# e^{||Mt||} must stay well inside double range
_MAX_NORM = 700.0


class ExpmRangeError(OverflowError):
    """Raised when e^{Mt} cannot be represented in double precision."""


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def expm(M, t=1.0):
    """Return e^{Mt}.

    Scaling and squaring with a degree-13 Pade approximant (scipy's
    Al-Mohy/Higham implementation).
    """
    M = _as_square(M)
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("time must be finite")
    Mt = M * t
    if np.linalg.norm(Mt, 1) > _MAX_NORM:
        raise ExpmRangeError(f"||Mt||_1 = {np.linalg.norm(Mt, 1):.3g} exceeds representable range")
    out = scipy.linalg.expm(Mt)
    if not np.all(np.isfinite(out)):
        raise ExpmRangeError("matrix exponential overflowed")
    return out


def expint(A, b, t0, t1, sign=-1):
    """Return the integral of e^{sign*A*s} b over s in [t0, t1].

    Read off the top-right block of exp([[sA, b], [0, 0]] * dt), then shift
    by e^{sA t0}.
    """
    A = _as_square(A)
    b = np.asarray(b, dtype=float).reshape(-1)
    if t1 < t0:
        raise ValueError("expint requires t0 <= t1")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    n = A.shape[0]
    if t1 == t0:
        return np.zeros(n)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = sign * A
    aug[:n, n] = b
    block = expm(aug, t1 - t0)[:n, n]
    if t0 == 0.0:
        return block
    return expm(sign * A, t0) @ block


def krylov_chain(A, b, k):
    """[b, Ab, ..., A^k b] by dense products."""
    A = _as_square(A)
    b = np.asarray(b, dtype=float).reshape(-1)
    if not 0 <= k <= A.shape[0] - 1:
        raise ValueError(f"k must lie in [0, {A.shape[0] - 1}]")
    chain = [b.copy()]
    for _ in range(k):
        chain.append(A @ chain[-1])
    return chain


def numerical_rank(vectors, rtol=1e-10):
    """Rank of the matrix whose columns are ``vectors``.

    Singular values below rtol * (largest singular value) count as zero.
    """
    V = np.asarray(vectors, dtype=float)
    if V.size == 0:
        return 0
    s = np.linalg.svd(V, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


def sphere_points(dim, n, seed=0):
    """n quasi-uniform unit vectors in R^dim (deterministic).

    Evenly spaced angles on the circle, a Fibonacci lattice on S^2, and a
    Gaussian-mapped scrambled Sobol sequence beyond that.
    """
    if n <= 0:
        return np.zeros((0, dim))
    if dim == 1:
        return np.array([[1.0], [-1.0]] * ((n + 1) // 2))[:n]
    if dim == 2:
        ang = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        phi = np.pi * (1.0 + 5.0 ** 0.5) * i
        rho = np.sqrt(1.0 - z * z)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    from scipy.stats import norm, qmc

    pts = qmc.Sobol(dim, scramble=True, seed=seed).random(n)
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
