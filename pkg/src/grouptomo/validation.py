"""Input validation helpers shared by every module.

All public entry points funnel their array arguments through these
checks, so downstream code can assume square, finite, complex128
operators and well-formed probability data.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ValidationError",
    "NumericalFailure",
    "as_operator",
    "as_vector",
    "check_same_dim",
    "hermiticity_defect",
    "check_hermitian",
    "check_unit_vector",
    "check_probabilities",
]


class ValidationError(ValueError):
    """Malformed input: wrong shape, non-finite entries, broken invariant."""


class NumericalFailure(RuntimeError):
    """Computation diagnosed as unreliable (ill conditioning, mass leakage)."""


def as_operator(m, name: str = "operator") -> np.ndarray:
    """Coerce to a square, finite complex128 matrix."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite complex128 vector."""
    a = np.asarray(v, dtype=np.complex128).ravel()
    if a.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise ValidationError(f"{name} contains non-finite entries")
    return a


def check_same_dim(a: np.ndarray, b: np.ndarray, what: str = "operands") -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{what} have mismatched shapes {a.shape} vs {b.shape}")


def hermiticity_defect(m: np.ndarray) -> float:
    """Largest entrywise deviation of m from its adjoint."""
    return float(np.max(np.abs(m - m.conj().T)))


def check_hermitian(m, tol: float = 1e-10, name: str = "matrix") -> np.ndarray:
    a = as_operator(m, name)
    defect = hermiticity_defect(a)
    if defect > tol:
        raise ValidationError(f"{name} is not Hermitian: defect {defect:.3e} > {tol:.3e}")
    return a


def check_unit_vector(v, tol: float = 1e-10, name: str = "vector") -> np.ndarray:
    a = as_vector(v, name)
    norm = float(np.linalg.norm(a))
    if abs(norm - 1.0) > tol:
        raise ValidationError(f"{name} is not normalized: |norm - 1| = {abs(norm - 1.0):.3e}")
    return a


def check_probabilities(p, tol: float = 1e-10, name: str = "probabilities") -> np.ndarray:
    """Clamp tolerated numerical negativity to zero, reject real violations."""
    a = np.asarray(p, dtype=np.float64).ravel()
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contain non-finite entries")
    low = float(a.min(initial=0.0))
    if low < -tol:
        raise ValidationError(f"{name} contain a negative weight {low:.3e} below -{tol:.3e}")
    return np.clip(a, 0.0, None)
