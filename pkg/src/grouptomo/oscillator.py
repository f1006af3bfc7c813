"""Truncated Fock-space toolbox for one bosonic mode.

Ladder operators live on the first nmax+1 number states.  The
commutation relation [a, a^dag] = 1 holds everywhere except the
(nmax, nmax) corner, where truncation forces the value -nmax; tests and
frames quarantine that corner by evaluating observables supported on
n <= nmax/2.
"""

from __future__ import annotations

import numpy as np

from .frames import OperatorFrame
from .linalg import DensityMatrix, expm_i_herm
from .validation import ValidationError

__all__ = [
    "FockSpace",
    "fock_space",
    "number_operator",
    "quadrature",
    "displacement",
    "fock_state",
    "coherent_state",
    "thermal_state",
    "mean_photon",
    "alpha_lattice",
    "displacement_frame",
    "DisplacementFactory",
]


class FockSpace:
    """Truncated single-mode space with cached ladder operators."""

    __slots__ = ("nmax", "dim", "a", "adag")

    def __init__(self, nmax: int):
        nmax = int(nmax)
        if nmax < 0:
            raise ValidationError("nmax must be nonnegative")
        self.nmax = nmax
        self.dim = nmax + 1
        a = np.zeros((self.dim, self.dim), dtype=np.complex128)
        ns = np.arange(1, self.dim)
        a[ns - 1, ns] = np.sqrt(ns)
        a.setflags(write=False)
        self.a = a
        adag = a.conj().T.copy()
        adag.setflags(write=False)
        self.adag = adag

    def __repr__(self) -> str:  # pragma: no cover
        return f"FockSpace(nmax={self.nmax})"


def fock_space(nmax: int) -> FockSpace:
    return FockSpace(nmax)


def number_operator(space: FockSpace) -> np.ndarray:
    return np.diag(np.arange(space.dim, dtype=np.float64)).astype(np.complex128)


def quadrature(space: FockSpace, phi: float) -> np.ndarray:
    """X_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2, Hermitian tridiagonal."""
    return (space.adag * np.exp(1j * phi) + space.a * np.exp(-1j * phi)) / 2.0


def displacement(space: FockSpace, alpha: complex) -> np.ndarray:
    """exp(alpha a^dag - alpha* a) as a dense exponential of the truncated generator.

    Unitary by construction.  Accuracy needs |alpha| well inside
    sqrt(nmax)/2 (documented, not enforced).
    """
    alpha = complex(alpha)
    gen = alpha * space.adag - np.conj(alpha) * space.a
    return expm_i_herm(-1j * gen, 1.0)


class DisplacementFactory:
    """Fast displacement operators sharing one eigendecomposition.

    With alpha = r e^{i theta}, the Hermitian generator of D(alpha) is a
    phase-rotated copy of M0 = -i(a^dag - a), so a single eigh of M0
    serves every alpha:  D(alpha) = P(theta) V e^{i r w} V^dag P(theta)^dag
    with P(theta) = diag(e^{i theta n}).  The result equals the dense
    exponential of the truncated generator to roundoff.
    """

    def __init__(self, space: FockSpace):
        self.space = space
        m0 = -1j * (space.adag - space.a)
        self._w, self._v = np.linalg.eigh(m0)
        self._n = np.arange(space.dim)

    def matrix(self, alpha: complex) -> np.ndarray:
        alpha = complex(alpha)
        r = abs(alpha)
        theta = np.angle(alpha) if r > 0 else 0.0
        phases = np.exp(1j * theta * self._n)
        w = (phases[:, None] * self._v) * np.exp(1j * r * self._w)
        return w @ (phases[:, None] * self._v).conj().T

    def apply(self, alpha: complex, vec: np.ndarray) -> np.ndarray:
        alpha = complex(alpha)
        r = abs(alpha)
        theta = np.angle(alpha) if r > 0 else 0.0
        phases = np.exp(1j * theta * self._n)
        t = self._v.conj().T @ (phases.conj() * vec)
        t *= np.exp(1j * r * self._w)
        return phases * (self._v @ t)

    def apply_batch(self, alphas: np.ndarray, vec: np.ndarray) -> np.ndarray:
        """D(alpha_b) @ vec for a batch of alphas: (B, dim)."""
        r = np.abs(alphas)
        theta = np.where(r > 0, np.angle(alphas), 0.0)
        phases = np.exp(1j * np.outer(theta, self._n))  # (B, N)
        t = self._v.conj().T @ (phases.conj() * vec[None, :]).T  # (N, B)
        t *= np.exp(1j * np.outer(self._w, r))
        return phases * (self._v @ t).T


def enlarged_nmax(nmax: int, reach: float) -> int:
    """Workspace size keeping displacements of size ``reach`` on states
    below nmax away from the truncation edge."""
    top = (reach + np.sqrt(nmax + 1.0)) ** 2
    return max(nmax, int(np.ceil(top + 4.0 * np.sqrt(top + 1.0) + 8)))


class BlockDisplacementFactory:
    """Truthful displacement blocks on a truncated space.

    The dense exponential on the declared space is unitary, which is
    wrong for matrix-element purposes: a real displacement moves mass
    across the truncation edge.  This factory runs the same dense
    exponential on an enlarged workspace sized for ``reach`` and crops,
    reproducing the true sub-unitary amplitudes of D(alpha) between the
    retained levels.
    """

    def __init__(self, space: FockSpace, reach: float):
        self.space = space
        self.dim = space.dim
        self.big = FockSpace(enlarged_nmax(space.nmax, reach))
        self._factory = DisplacementFactory(self.big)

    def columns(self, alpha: complex) -> np.ndarray:
        """All workspace rows of the retained columns: (nbig, dim)."""
        fac = self._factory
        alpha = complex(alpha)
        r = abs(alpha)
        theta = np.angle(alpha) if r > 0 else 0.0
        phases = np.exp(1j * theta * fac._n)
        t = fac._v.conj().T[:, :self.dim] * phases[:self.dim].conj()[None, :]
        t = np.exp(1j * r * fac._w)[:, None] * t
        return phases[:, None] * (fac._v @ t)

    def block(self, alpha: complex) -> np.ndarray:
        return self.columns(alpha)[:self.dim, :]

    def apply(self, alpha: complex, vec: np.ndarray) -> np.ndarray:
        big_vec = np.zeros(self.big.dim, dtype=np.complex128)
        big_vec[:self.dim] = vec
        return self._factory.apply(alpha, big_vec)

    def apply_batch(self, alphas: np.ndarray, vec: np.ndarray) -> np.ndarray:
        big_vec = np.zeros(self.big.dim, dtype=np.complex128)
        big_vec[:self.dim] = vec
        return self._factory.apply_batch(alphas, big_vec)


def fock_state(space: FockSpace, n: int) -> DensityMatrix:
    if not 0 <= n <= space.nmax:
        raise ValidationError(f"Fock index {n} outside truncation 0..{space.nmax}")
    m = np.zeros((space.dim, space.dim), dtype=np.complex128)
    m[n, n] = 1.0
    return DensityMatrix(m)


def coherent_state(space: FockSpace, alpha: complex) -> DensityMatrix:
    """Displaced vacuum, renormalized for the (tiny) truncation loss."""
    d = displacement(space, alpha)
    vec = d[:, 0]
    vec = vec / np.linalg.norm(vec)
    return DensityMatrix(np.outer(vec, vec.conj()))


def thermal_state(space: FockSpace, nbar: float) -> DensityMatrix:
    if nbar < 0:
        raise ValidationError("thermal occupation nbar must be >= 0")
    if nbar == 0:
        return fock_state(space, 0)
    ratio = nbar / (1.0 + nbar)
    p = ratio ** np.arange(space.dim)
    p /= p.sum()
    return DensityMatrix(np.diag(p).astype(np.complex128))


def mean_photon(rho, space: FockSpace) -> float:
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.real(np.sum(np.diag(m) * np.arange(space.dim))))


def alpha_lattice(radius: float, steps: int):
    """Cell-center square lattice over [-R, R]^2 clipped to the disk |alpha| <= R.

    Returns (alphas, weights); each weight is the cell area h^2 with
    h = 2R/steps, so the weights sum to the covered area exactly.
    """
    if radius <= 0:
        raise ValidationError("lattice radius must be positive")
    if steps < 1:
        raise ValidationError("lattice needs at least one step per axis")
    h = 2.0 * radius / steps
    axis = -radius + h * (np.arange(steps) + 0.5)
    re, im = np.meshgrid(axis, axis, indexing="ij")
    alphas = (re + 1j * im).ravel()
    keep = np.abs(alphas) <= radius
    alphas = alphas[keep]
    weights = np.full(alphas.shape, h * h)
    return alphas, weights


def displacement_frame(space: FockSpace, radius: float, steps: int) -> OperatorFrame:
    """The frame {D(alpha)} on an alpha lattice (k converges to pi).

    Covariance: D(beta) D(alpha) = phase * D(alpha + beta).  Elements
    are truthful sub-unitary blocks (see BlockDisplacementFactory); the
    quoted discretization tolerance holds for operators supported on
    n <= nmax/2, whose reach the lattice radius must cover.
    """
    alphas, weights = alpha_lattice(radius, steps)
    factory = BlockDisplacementFactory(space, radius + 1.0)

    def op(label):
        return factory.block(complex(label[0], label[1]))

    def apply(label, vec):
        return factory.apply(complex(label[0], label[1]), vec)[:space.dim]

    def amplitude(labels, phi, psi):
        alphas = np.array([complex(l[0], l[1]) for l in labels])
        moved = factory.apply_batch(alphas, psi)
        phi_big = np.zeros(factory.big.dim, dtype=np.complex128)
        phi_big[:space.dim] = phi
        return moved @ phi_big.conj()

    def cov(g, h):
        s = complex(g[0], g[1]) + complex(h[0], h[1])
        return (s.real, s.imag)

    return OperatorFrame(
        dim=space.dim,
        labels=[(a.real, a.imag) for a in alphas],
        weights=weights,
        operator_fn=op,
        apply_fn=apply,
        amplitude_fn=amplitude,
        covariance_fn=cov,
        identity_label=(0.0, 0.0),
        discretization_tol=2e-2,
        name="displacement",
    )
