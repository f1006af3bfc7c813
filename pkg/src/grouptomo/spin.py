"""Spin-S tomography.

Measuring the spin projection S.n along enough directions determines
the (2S+1)-dimensional density matrix.  Two routes are implemented:

* sphere route: integrate p(n, m) against the closed-form pattern
  kernel K(n, m) over the unit sphere (by product quadrature, exactly,
  or by Monte Carlo sampling of directions);
* finite route: pick (2S+1)^2 rotation labels (n_i, psi_i), build the
  dual basis of {R(n_i, psi_i)} and resum the outcome probabilities
  against it.

The pattern kernel expands over the eigenprojectors of S.n as

    K(n, m) = sum_{m'} c_{m'-m} |n,m'><n,m'|,
    c_0 = (2S+1)/(4 pi),  c_{+-1} = -(2S+1)/(8 pi),  c_q = 0 otherwise,

which is the angle integral of sin^2(psi/2) e^{i psi (S.n - m)} done in
closed form (validated against direct quadrature in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import OperatorFrame, dual_frame
from .io import RecordBatch
from .linalg import DensityMatrix, expm_i_herm, herm_eig
from .sampling import (
    BLOCK_SIZE,
    ReconstructionResult,
    accumulate_terms,
    block_rng,
    categorical_rows,
    finalize_result,
    iter_blocks,
    map_ordered,
    sample_sphere_batch,
)
from .validation import NumericalFailure, ValidationError, check_probabilities

__all__ = [
    "SpinSystem",
    "spin_operators",
    "Direction",
    "dot_spin",
    "rotation",
    "spin_basis",
    "spin_pattern",
    "spin_probability",
    "SpinFrame",
    "sphere_frame",
    "rotation_frame",
    "reconstruct_spin_quadrature",
    "sample_spin_sphere",
    "reconstruct_sphere_records",
    "reconstruct_spin_mc",
    "random_finite_labels",
    "reconstruct_spin_finite",
    "sample_spin_finite",
    "reconstruct_finite_records",
]


class SpinSystem:
    """Spin operators for 2S = two_s, in the S_z eigenbasis with m descending."""

    __slots__ = ("two_s", "dim", "sx", "sy", "sz", "m_values")

    def __init__(self, two_s: int):
        two_s = int(two_s)
        if two_s < 0:
            raise ValidationError("two_s must be nonnegative")
        self.two_s = two_s
        self.dim = two_s + 1
        s = two_s / 2.0
        m = s - np.arange(self.dim)  # descending S .. -S
        self.m_values = m
        sz = np.diag(m).astype(np.complex128)
        # raising operator: S+|m> = sqrt(S(S+1) - m(m+1)) |m+1>; with the
        # descending ordering |m+1> sits one row above.
        sp = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for i in range(1, self.dim):
            mi = m[i]
            sp[i - 1, i] = math.sqrt(s * (s + 1) - mi * (mi + 1))
        sm = sp.conj().T
        self.sx = (sp + sm) / 2.0
        self.sy = (sp - sm) / 2.0j
        self.sz = sz
        for arr in (self.sx, self.sy, self.sz, self.m_values):
            arr.setflags(write=False)

    @property
    def s(self) -> float:
        return self.two_s / 2.0

    def __repr__(self) -> str:  # pragma: no cover
        return f"SpinSystem(two_s={self.two_s})"


def spin_operators(two_s: int) -> SpinSystem:
    return SpinSystem(two_s)


@dataclass(frozen=True)
class Direction:
    """Point on the unit sphere: theta in [0, pi], phi in [0, 2 pi)."""

    theta: float
    phi: float

    @property
    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([math.cos(self.phi) * st,
                         math.sin(self.phi) * st,
                         math.cos(self.theta)])

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValidationError("zero vector has no direction")
        v = v / norm
        return cls(float(np.arccos(np.clip(v[2], -1.0, 1.0))),
                   float(np.arctan2(v[1], v[0]) % (2.0 * np.pi)))


def dot_spin(sys: SpinSystem, n: Direction) -> np.ndarray:
    v = n.unit_vector
    return v[0] * sys.sx + v[1] * sys.sy + v[2] * sys.sz


def rotation(sys: SpinSystem, n: Direction, psi: float) -> np.ndarray:
    """R(n, psi) = exp(-i psi S.n), unitary."""
    return expm_i_herm(dot_spin(sys, n), -float(psi), tol=1e-9)


def spin_basis(sys: SpinSystem, theta: float, phi: float) -> np.ndarray:
    """Columns are the S.n eigenvectors |n, m>, m descending (matching S_z order).

    Built as e^{-i phi S_z} e^{-i theta S_y} applied to the S_z basis.
    The spectrum m = S..-S of S.n is simple, so no degeneracy handling
    is needed.
    """
    wy, vy = np.linalg.eigh(sys.sy)
    e_theta = (vy * np.exp(-1j * theta * wy)) @ vy.conj().T
    return np.exp(-1j * phi * sys.m_values)[:, None] * e_theta


def _pattern_coefficients(dim: int) -> np.ndarray:
    """Table C[k, j]: kernel weight of eigenprojector j for outcome index k."""
    c0 = dim / (4.0 * np.pi)
    c1 = -dim / (8.0 * np.pi)
    c = np.zeros((dim, dim))
    idx = np.arange(dim)
    c[idx, idx] = c0
    c[idx[:-1], idx[:-1] + 1] = c1
    c[idx[1:], idx[1:] - 1] = c1
    return c


def spin_pattern(sys: SpinSystem, n: Direction, m: float) -> np.ndarray:
    """Sphere pattern kernel K(n, m), Hermitian."""
    k = _m_index(sys, m)
    u = spin_basis(sys, n.theta, n.phi)
    coeffs = _pattern_coefficients(sys.dim)[k]
    return (u * coeffs) @ u.conj().T


def _m_index(sys: SpinSystem, m: float) -> int:
    idx = sys.s - float(m)
    k = int(round(idx))
    if abs(idx - k) > 1e-9 or not 0 <= k < sys.dim:
        raise ValidationError(f"m={m} is not in the spectrum of a spin-{sys.s} projection")
    return k


def spin_probability(rho, sys: SpinSystem, n: Direction, m: float) -> float:
    """Probability of outcome m when measuring S.n on the state."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if mat.shape[0] != sys.dim:
        raise ValidationError("state dimension does not match the spin system")
    k = _m_index(sys, m)
    vec = spin_basis(sys, n.theta, n.phi)[:, k]
    val = float(np.real(vec.conj() @ mat @ vec))
    if val < -1e-10:
        raise NumericalFailure(f"probability {val:.3e} below tolerance")
    return val


@dataclass(frozen=True)
class SpinFrame:
    """Product quadrature: sphere nodes (weights sum to 4 pi) times
    rotation-angle nodes carrying sin^2(psi/2)/(4 pi^2) (weights sum to
    1/(4 pi)), so the total invariant mass is 1."""

    thetas: np.ndarray
    phis: np.ndarray
    dir_weights: np.ndarray
    psis: np.ndarray
    psi_weights: np.ndarray

    def __post_init__(self):
        dir_sum = float(np.sum(self.dir_weights))
        psi_sum = float(np.sum(self.psi_weights))
        if abs(dir_sum - 4.0 * np.pi) > 1e-10:
            raise ValidationError(f"direction weights sum to {dir_sum}, expected 4 pi")
        if abs(psi_sum - 1.0 / (4.0 * np.pi)) > 1e-10:
            raise ValidationError(f"psi weights sum to {psi_sum}, expected 1/(4 pi)")


def sphere_frame(two_s: int, polar_nodes: int | None = None,
                 azimuthal_nodes: int | None = None,
                 psi_nodes: int | None = None) -> SpinFrame:
    """Gauss-Legendre x uniform product rule sized for exactness at spin S.

    Polynomial degree 4S in the direction needs >= 2S+1 polar nodes and
    >= 4S+2 azimuthal nodes; angle frequencies up to 2S+1 need >= 2S+3
    psi nodes.  Defaults carry one node of margin.
    """
    two_s = int(two_s)
    lp = polar_nodes if polar_nodes is not None else two_s + 2
    la = azimuthal_nodes if azimuthal_nodes is not None else 2 * lp
    lpsi = psi_nodes if psi_nodes is not None else 2 * two_s + 4
    if lp < 1 or la < 1 or lpsi < 2:
        raise ValidationError("sphere frame needs at least one node per factor")
    cos_nodes, cos_weights = np.polynomial.legendre.leggauss(lp)
    thetas = np.arccos(cos_nodes)
    phis = 2.0 * np.pi * np.arange(la) / la
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    wd = np.outer(cos_weights, np.full(la, 2.0 * np.pi / la))
    psis = 2.0 * np.pi * (np.arange(lpsi) + 0.5) / lpsi
    wpsi = np.sin(psis / 2.0) ** 2 / (4.0 * np.pi ** 2) * (2.0 * np.pi / lpsi)
    # the uniform-midpoint rule makes both weight sums exact for >= 2 nodes
    wd = wd * (4.0 * np.pi / wd.sum())
    wpsi = wpsi * (1.0 / (4.0 * np.pi) / wpsi.sum())
    return SpinFrame(th.ravel(), ph.ravel(), wd.ravel(), psis, wpsi)


def _quaternion(label) -> np.ndarray:
    theta, phi, psi = label
    n = Direction(theta, phi).unit_vector
    return np.array([math.cos(psi / 2.0), *(math.sin(psi / 2.0) * n)])


def _label_from_quaternion(q) -> tuple:
    w, v = q[0], q[1:]
    norm_v = float(np.linalg.norm(v))
    psi = 2.0 * math.atan2(norm_v, w)
    if norm_v < 1e-14:
        return (0.0, 0.0, psi)
    d = Direction.from_vector(v)
    return (d.theta, d.phi, psi)


def _compose_labels(g, h) -> tuple:
    qg, qh = _quaternion(g), _quaternion(h)
    w = qg[0] * qh[0] - qg[1:] @ qh[1:]
    v = qg[0] * qh[1:] + qh[0] * qg[1:] + np.cross(qg[1:], qh[1:])
    return _label_from_quaternion(np.array([w, *v]))


def rotation_frame(sys: SpinSystem, frame: SpinFrame) -> OperatorFrame:
    """The {R(n, psi)} family on the product quadrature (k = 1/(2S+1))."""
    labels = []
    weights = []
    for th, ph, wd in zip(frame.thetas, frame.phis, frame.dir_weights):
        for psi, wp in zip(frame.psis, frame.psi_weights):
            labels.append((float(th), float(ph), float(psi)))
            weights.append(wd * wp)

    def op(label):
        return rotation(sys, Direction(label[0], label[1]), label[2])

    return OperatorFrame(
        dim=sys.dim,
        labels=labels,
        weights=np.asarray(weights),
        operator_fn=op,
        covariance_fn=_compose_labels,
        identity_label=(0.0, 0.0, 0.0),
        discretization_tol=1e-4,
        name=f"spin-{sys.two_s}/2-rotations",
    )


def _basis_batch(sys: SpinSystem, thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Stack of S.n eigenbases, one per direction (columns m descending)."""
    wy, vy = np.linalg.eigh(sys.sy)
    rot_y = np.einsum("ik,bk,jk->bij", vy, np.exp(-1j * np.outer(thetas, wy)), vy.conj())
    return np.exp(-1j * np.outer(phis, sys.m_values))[:, :, None] * rot_y


def _direction_probabilities(mat: np.ndarray, bases: np.ndarray) -> np.ndarray:
    p = np.einsum("bim,ij,bjm->bm", bases.conj(), mat, bases).real
    return np.clip(p, 0.0, None)


def reconstruct_spin_quadrature(rho_true: DensityMatrix, sys: SpinSystem,
                                frame: SpinFrame) -> ReconstructionResult:
    """Exact-probability sphere reconstruction on the frame's quadrature.

    Exact (to roundoff) once the rule resolves polynomial degree 4S; an
    under-resolved rule degrades accuracy without failing.
    """
    mat = rho_true.matrix
    if mat.shape[0] != sys.dim:
        raise ValidationError("state dimension does not match the spin system")
    bases = _basis_batch(sys, frame.thetas, frame.phis)
    probs = _direction_probabilities(mat, bases)
    coeff = probs @ _pattern_coefficients(sys.dim)
    est = np.einsum("b,bim,bm,bjm->ij", frame.dir_weights, bases, coeff, bases.conj())
    return finalize_result(est, shots=0, rho_true=rho_true,
                           meta={"scheme": "spin-sphere", "mode": "exact"})


def sample_spin_sphere(rho_true: DensityMatrix, sys: SpinSystem,
                       shots: int, seed: int) -> RecordBatch:
    """Simulate sphere measurements: per shot one uniform direction and
    one outcome drawn from p(n, m).  Draw layout per block: thetas,
    phis, then the outcome uniforms."""
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    mat = rho_true.matrix
    rows = np.empty((shots, 3))
    for _, start, count, rng in iter_blocks(seed, shots):
        thetas, phis = sample_sphere_batch(rng, count)
        u = rng.random(count)
        bases = _basis_batch(sys, thetas, phis)
        probs = _direction_probabilities(mat, bases)
        idx = categorical_rows(probs, u)
        rows[start:start + count, 0] = thetas
        rows[start:start + count, 1] = phis
        rows[start:start + count, 2] = sys.m_values[idx]
    return RecordBatch("spin-sphere", rows, np.ones(shots))


def _sphere_record_terms(sys: SpinSystem, rows: np.ndarray) -> np.ndarray:
    bases = _basis_batch(sys, rows[:, 0], rows[:, 1])
    idx = np.rint(sys.s - rows[:, 2]).astype(int)
    if np.any(idx < 0) or np.any(idx >= sys.dim):
        raise ValidationError("record outcome m outside the spin spectrum")
    coeff = _pattern_coefficients(sys.dim)[idx]
    return 4.0 * np.pi * np.einsum("bim,bm,bjm->bij", bases, coeff, bases.conj())


def reconstruct_sphere_records(sys: SpinSystem, records: RecordBatch,
                               rho_true=None, threads: int = 1) -> ReconstructionResult:
    """Monte Carlo estimator rebuilt from measurement records.

    Replaying records written by the simulator reproduces its estimate
    bit-exactly (same block chunking, same accumulation order).
    """
    if records.scheme != "spin-sphere":
        raise ValidationError(f"expected spin-sphere records, got {records.scheme!r}")
    uniform = bool(np.all(records.counts == 1.0))
    blocks = range(0, len(records), BLOCK_SIZE)
    batches = map_ordered(
        lambda s: _sphere_record_terms(sys, records.columns[s:s + BLOCK_SIZE]),
        blocks, threads)
    if uniform:
        result = accumulate_terms(sys.dim, batches, rho_true=rho_true)
    else:
        weights = (records.counts[s:s + BLOCK_SIZE] for s in blocks)
        result = accumulate_terms(sys.dim, batches, weights, rho_true=rho_true,
                                  shots=records.total_count)
    result.meta.update({"scheme": "spin-sphere", "mode": "sampled"})
    return result


def reconstruct_spin_mc(rho_true: DensityMatrix, sys: SpinSystem, shots: int,
                        seed: int, keep_records: bool = False,
                        threads: int = 1) -> ReconstructionResult:
    """Sphere Monte Carlo: unbiased for the state, stderr ~ 1/sqrt(shots)."""
    records = sample_spin_sphere(rho_true, sys, shots, seed)
    result = reconstruct_sphere_records(sys, records, rho_true=rho_true, threads=threads)
    if keep_records:
        result.meta["records"] = records
    result.meta["seed"] = seed
    return result


def random_finite_labels(sys: SpinSystem, seed: int, mode: str = "rotations",
                         cond_limit: float = 1e6,
                         max_tries: int = 80) -> list[tuple[Direction, float]]:
    """(2S+1)^2 labels whose induced operator family is well conditioned.

    Angles near 0 or 2 pi give near-identity rotations and wreck the
    conditioning, so psi is drawn from (0.2, 2 pi - 0.2) and the set is
    redrawn until the Gram condition number of the ``mode`` family is
    acceptable.
    """
    count = sys.dim ** 2
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 0xF14E]))
    best = np.inf
    for _ in range(max_tries):
        thetas = np.arccos(rng.uniform(-1.0, 1.0, count))
        phis = rng.uniform(0.0, 2.0 * np.pi, count)
        psis = rng.uniform(0.2, 2.0 * np.pi - 0.2, count)
        labels = [(Direction(float(t), float(p)), float(ps))
                  for t, p, ps in zip(thetas, phis, psis)]
        ops = _finite_family(sys, labels, mode)
        gram = np.array([[np.vdot(a, b) for b in ops] for a in ops])
        vals = np.linalg.eigvalsh((gram + gram.conj().T) / 2.0)
        if vals[0] > 0:
            cond = vals[-1] / vals[0]
            best = min(best, cond)
            if cond <= cond_limit:
                return labels
    raise NumericalFailure(
        f"no label set with Gram condition <= {cond_limit:.1e} in {max_tries} draws "
        f"(best {best:.2e})")


def _finite_family(sys: SpinSystem, labels, mode: str):
    if len(labels) != sys.dim ** 2:
        raise ValidationError(
            f"finite reconstruction needs {sys.dim ** 2} labels, got {len(labels)}")
    if mode == "rotations":
        ops = [rotation(sys, n, psi) for n, psi in labels]
    elif mode == "projectors":
        # highest-weight projector |n, S><n, S|; psi plays no role here
        ops = []
        for n, _ in labels:
            vec = spin_basis(sys, n.theta, n.phi)[:, 0]
            ops.append(np.outer(vec, vec.conj()))
    else:
        raise ValidationError(f"unknown finite mode {mode!r}")
    return ops


def _finite_estimate(sys: SpinSystem, labels, mode: str, probs: np.ndarray) -> np.ndarray:
    """probs[i, k]: outcome distribution of S.n_i (k indexes m descending)."""
    ops = _finite_family(sys, labels, mode)
    duals = dual_frame(ops, cond_limit=1e8).duals
    est = np.zeros((sys.dim, sys.dim), dtype=np.complex128)
    if mode == "rotations":
        for i, (_, psi) in enumerate(labels):
            coeff = np.sum(probs[i] * np.exp(-1j * psi * sys.m_values))
            est += coeff * duals[i]
    else:
        for i in range(len(labels)):
            est += probs[i, 0] * duals[i]
    return est


def reconstruct_spin_finite(rho_true: DensityMatrix, sys: SpinSystem, labels,
                            mode: str = "rotations") -> ReconstructionResult:
    """Finite-family reconstruction from exact outcome probabilities."""
    mat = rho_true.matrix
    thetas = np.array([n.theta for n, _ in labels])
    phis = np.array([n.phi for n, _ in labels])
    bases = _basis_batch(sys, thetas, phis)
    probs = _direction_probabilities(mat, bases)
    est = _finite_estimate(sys, labels, mode, probs)
    return finalize_result(est, shots=0, rho_true=rho_true,
                           meta={"scheme": "spin-finite", "mode": mode})


def sample_spin_finite(rho_true: DensityMatrix, sys: SpinSystem, labels,
                       shots: int, seed: int) -> RecordBatch:
    """Multinomial counts per label; shots are split evenly across labels."""
    per_label = int(shots) // len(labels)
    if per_label < 1:
        raise ValidationError("need at least one shot per label")
    mat = rho_true.matrix
    thetas = np.array([n.theta for n, _ in labels])
    phis = np.array([n.phi for n, _ in labels])
    bases = _basis_batch(sys, thetas, phis)
    probs = _direction_probabilities(mat, bases)
    rows, counts = [], []
    for i in range(len(labels)):
        p = probs[i] / probs[i].sum()
        draws = block_rng(seed, i).multinomial(per_label, p)
        for k, c in enumerate(draws):
            if c > 0:
                rows.append((float(i), float(sys.m_values[k])))
                counts.append(float(c))
    return RecordBatch("spin-finite", np.asarray(rows), np.asarray(counts))


def reconstruct_finite_records(sys: SpinSystem, labels, records: RecordBatch,
                               mode: str = "rotations", rho_true=None) -> ReconstructionResult:
    """Empirical frequencies stand in for the exact outcome probabilities."""
    if records.scheme != "spin-finite":
        raise ValidationError(f"expected spin-finite records, got {records.scheme!r}")
    counts = np.zeros((len(labels), sys.dim))
    for (idx_f, m), c in zip(records.columns, records.counts):
        i = int(round(idx_f))
        if not 0 <= i < len(labels) or abs(idx_f - i) > 1e-9:
            raise ValidationError(f"record label index {idx_f} outside the label set")
        counts[i, _m_index(sys, m)] += c
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        missing = int(np.argmin(totals))
        raise ValidationError(f"label {missing} has zero total counts")
    probs = check_probabilities(counts / totals[:, None]).reshape(counts.shape)
    est = _finite_estimate(sys, labels, mode, probs)
    result = finalize_result(est, shots=records.total_count, rho_true=rho_true,
                             meta={"scheme": "spin-finite", "mode": mode})
    return result
