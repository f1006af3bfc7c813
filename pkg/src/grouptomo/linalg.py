"""Dense complex linear algebra on operators.

Everything here is a pure function of its arguments: Hilbert-Schmidt
inner product, Hermitian eigendecomposition, unitary exponentials
exp(i*s*H), and the fidelity / trace-distance metrics used to score
reconstructed states.  Matrices are plain complex128 ndarrays; density
matrices get a thin validated wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import (
    ValidationError,
    as_operator,
    check_hermitian,
    check_same_dim,
    hermiticity_defect,
)

__all__ = [
    "hs_inner",
    "hs_norm",
    "HermitianEigensystem",
    "herm_eig",
    "expm_i_herm",
    "DensityMatrix",
    "nearest_density",
    "pure_state_density",
    "random_pure_density",
    "random_mixed_density",
    "random_hermitian",
    "fidelity",
    "trace_distance",
]


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product Tr[a^dag b]."""
    am = as_operator(a, "a")
    bm = as_operator(b, "b")
    check_same_dim(am, bm)
    return complex(np.vdot(am, bm))


def hs_norm(a) -> float:
    """Hilbert-Schmidt norm sqrt(Tr[a^dag a])."""
    am = as_operator(a, "a")
    return float(np.linalg.norm(am))


@dataclass(frozen=True)
class HermitianEigensystem:
    """Ascending eigenvalues and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reassemble(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def herm_eig(m, tol: float = 1e-10) -> HermitianEigensystem:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Rejects inputs whose hermiticity defect exceeds ``tol``.  The LAPACK
    driver is deterministic for a fixed input, which the reproducibility
    contract relies on.
    """
    a = check_hermitian(m, tol)
    vals, vecs = np.linalg.eigh(a)
    return HermitianEigensystem(vals, vecs)


def expm_i_herm(h, s: float = 1.0, tol: float = 1e-10) -> np.ndarray:
    """Unitary exp(i*s*h) for Hermitian h, via eigendecomposition."""
    eig = herm_eig(h, tol)
    phases = np.exp(1j * s * eig.eigenvalues)
    v = eig.eigenvectors
    return (v * phases) @ v.conj().T


class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix.

    Tolerances are overridable per construction; truncated-Fock work
    needs looser bounds than the defaults.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix, *, herm_tol: float = 1e-12,
                 trace_tol: float = 1e-12, eig_floor: float = 1e-10):
        m = as_operator(matrix, "density matrix")
        defect = hermiticity_defect(m)
        if defect > herm_tol:
            raise ValidationError(f"density matrix not Hermitian: defect {defect:.3e}")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > trace_tol:
            raise ValidationError(f"density matrix trace {tr:.12g} differs from 1")
        lo = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0).min())
        if lo < -eig_floor:
            raise ValidationError(f"density matrix has eigenvalue {lo:.3e} below -{eig_floor:.3e}")
        m = m.copy()
        m.setflags(write=False)
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self) -> str:  # pragma: no cover
        return f"DensityMatrix(dim={self.dim})"


def _as_density_array(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.matrix
    return as_operator(rho, "density matrix")


def nearest_density(matrix, *, eig_floor: float = 1e-10) -> DensityMatrix:
    """Project a noisy estimate onto the density-matrix cone.

    Hermitian part, eigenvalues clamped at zero, trace renormalized.
    This is the canonical cleanup for Monte Carlo estimates, which are
    Hermitian and positive only in expectation.
    """
    m = as_operator(matrix, "estimate")
    h = (m + m.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(h)
    vals = np.clip(vals, 0.0, None)
    total = float(vals.sum())
    if total <= 0.0:
        raise ValidationError("estimate has no positive part to normalize")
    vals /= total
    out = (vecs * vals) @ vecs.conj().T
    return DensityMatrix(out, herm_tol=1e-9, trace_tol=1e-9, eig_floor=eig_floor)


def pure_state_density(vec) -> DensityMatrix:
    v = np.asarray(vec, dtype=np.complex128).ravel()
    n = np.linalg.norm(v)
    if n == 0:
        raise ValidationError("cannot build a state from the zero vector")
    v = v / n
    return DensityMatrix(np.outer(v, v.conj()))


def random_pure_density(dim: int, rng: np.random.Generator) -> DensityMatrix:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return pure_state_density(v)


def random_mixed_density(dim: int, rng: np.random.Generator) -> DensityMatrix:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, herm_tol=1e-9, trace_tol=1e-9)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2.0


def _sqrt_psd(h: np.ndarray) -> np.ndarray:
    # Negative eigenvalues from numerical noise are clamped to zero.
    vals, vecs = np.linalg.eigh(h)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    r = _as_density_array(rho)
    s = _as_density_array(sigma)
    check_same_dim(r, s, "states")
    sq = _sqrt_psd((r + r.conj().T) / 2.0)
    inner = sq @ ((s + s.conj().T) / 2.0) @ sq
    vals = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    root_sum = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    return root_sum * root_sum


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference of two states."""
    r = _as_density_array(rho)
    s = _as_density_array(sigma)
    check_same_dim(r, s, "states")
    diff = (r - s + (r - s).conj().T) / 2.0
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())
