"""Linear control systems x' = Ax + Bu, u in [-1, 1]^M, and their JSON documents."""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import MAX_DIM, krylov_chain, numerical_rank

RANK_TOL = 1e-10


class SystemDocumentError(ValueError):
    """Base class for malformed system documents."""


class DimensionMismatch(SystemDocumentError):
    pass


class NonFiniteEntries(SystemDocumentError):
    pass


class TooManyInputs(SystemDocumentError):
    """M > N."""


class NotNormal(ValueError):
    """Raised by operations that require every column of B to satisfy the Kalman rank condition."""


class NonNormalWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray
    name: str = "system"
    k: int = 0
    kalman_ranks: tuple = ()
    normal: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def M(self):
        return self.B.shape[1]

    @property
    def columns(self):
        return [self.B[:, i] for i in range(self.M)]

    @property
    def norm2(self):
        """Spectral norm of A (cached)."""
        if "norm2" not in self._cache:
            self._cache["norm2"] = float(np.linalg.norm(self.A, 2))
        return self._cache["norm2"]

    def require_normal(self):
        if not self.normal:
            raise NotNormal(
                f"system {self.name!r} is not normal (Kalman ranks {list(self.kalman_ranks)}, N={self.N})"
            )

    def to_document(self):
        return {
            "name": self.name,
            "N": self.N,
            "M": self.M,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
        }


def make_system(A, B, name="system"):
    """Validate (A, B) and build a LinearSystem with rank and normality cached."""
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    if not 2 <= n <= MAX_DIM:
        raise DimensionMismatch(f"N must lie in [2, {MAX_DIM}], got {n}")
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
    if B.shape[1] < 1:
        raise DimensionMismatch("B needs at least one column")
    if B.shape[1] > n:
        raise TooManyInputs(f"M = {B.shape[1]} exceeds N = {n}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NonFiniteEntries("A and B must have finite entries")
    A.setflags(write=False)
    B.setflags(write=False)
    ranks = tuple(_kalman_rank(A, B[:, i]) for i in range(B.shape[1]))
    normal = all(r == n for r in ranks)
    sys = LinearSystem(
        A=A,
        B=B,
        name=str(name),
        k=numerical_rank(B, RANK_TOL),
        kalman_ranks=ranks,
        normal=normal,
    )
    if not normal:
        warnings.warn(f"system {name!r} is not normal: Kalman ranks {list(ranks)}", NonNormalWarning)
    return sys


def _kalman_rank(A, b):
    return numerical_rank(np.column_stack(krylov_chain(A, b, A.shape[0] - 1)), RANK_TOL)


def load_system(doc):
    """Build a LinearSystem from a document dict, a JSON string, or a path."""
    if isinstance(doc, (str, Path)):
        text = str(doc)
        if not text.lstrip().startswith("{"):
            text = Path(doc).read_text()
        doc = json.loads(text)
    try:
        n, m = int(doc["N"]), int(doc["M"])
        A, B = doc["A"], doc["B"]
    except KeyError as exc:
        raise SystemDocumentError(f"missing field {exc.args[0]!r}") from None
    if m > n:
        raise TooManyInputs(f"M = {m} exceeds N = {n}")
    try:
        A = np.array(A, dtype=float)
        B = np.array(B, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"ragged or non-numeric matrix: {exc}") from None
    if B.ndim == 1 and m == 1:
        B = B.reshape(-1, 1)
    if A.shape != (n, n):
        raise DimensionMismatch(f"A has shape {A.shape}, document says N={n}")
    if B.shape != (n, m):
        raise DimensionMismatch(f"B has shape {B.shape}, document says ({n}, {m})")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NonFiniteEntries("A and B must have finite entries")
    return make_system(A, B, name=doc.get("name", "system"))


def dump_system(sys):
    return json.dumps(sys.to_document(), indent=2)


def check_normality(sys):
    """Per-column rank of [b_i, A b_i, ..., A^{N-1} b_i]."""
    return list(sys.kalman_ranks)


def singular_set_is_empty(sys):
    return sys.k == sys.N
