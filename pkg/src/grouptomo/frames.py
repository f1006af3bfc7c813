"""Tomographic operator frames and their defining identities.

A frame is a weighted family {T(g)} of operators on one Hilbert space.
The weights realize the group sum (finite families) or an invariant
measure quadrature (continuous families), so that for a genuine
tomographic frame

    k = sum_g w_g |<phi|T(g)|psi>|^2          (pair independent)
    Tr[A] I = (1/k) sum_g w_g T(g) A T(g)^dag
    A       = (1/k) sum_g w_g Tr[A T(g)] T(g)^dag

hold to the frame's declared accuracy.  The residual functions below
measure how far a family is from satisfying them.  Covariance of the
family under a reference representation D,

    D(g) T(h) ~ phase * T(h')       with h' = covariance(g, h),

is checked with phase-optimal alignment: ray phases are unobservable,
so we never model them explicitly.

Finite operator families additionally support Gram-Schmidt
orthonormalization and dual-basis construction: the duals R_i of a
linearly independent family {F_i} satisfy Tr[R_i F_j] = delta_ij, so
any operator in the span decomposes as A = sum_i Tr[F_i A] R_i.

Frames with many elements generate operators on demand through a
factory, to keep memory flat; sums use compensated (Kahan)
accumulation so they stay reordering-stable at the 1e-12 level.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import matrix_from_json_dict, matrix_to_json_dict
from .linalg import hs_inner, hs_norm
from .validation import (
    NumericalFailure,
    ValidationError,
    as_operator,
    check_unit_vector,
)

__all__ = [
    "FrameElement",
    "OperatorFrame",
    "KahanAccumulator",
    "estimate_k_tilde",
    "k_tilde_invariance",
    "covariance_residual",
    "trace_identity_residual",
    "closure_residual",
    "gram_schmidt",
    "DualFrame",
    "dual_frame",
    "pauli_frame",
    "frame_to_json_dict",
    "frame_from_json_dict",
    "write_frame_json",
    "read_frame_json",
]


@dataclass(frozen=True)
class FrameElement:
    """One frame member: its parameter label, quadrature weight, operator."""

    label: tuple
    weight: float
    operator: np.ndarray


class KahanAccumulator:
    """Compensated elementwise summation for scalars or arrays."""

    def __init__(self, shape=()):
        self._sum = np.zeros(shape, dtype=np.complex128)
        self._comp = np.zeros(shape, dtype=np.complex128)

    def add(self, term) -> None:
        y = np.asarray(term, dtype=np.complex128) - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t

    @property
    def value(self) -> np.ndarray:
        return self._sum


class OperatorFrame:
    """Weighted operator family with optional representation and covariance maps.

    Parameters
    ----------
    dim : Hilbert-space dimension shared by every element.
    labels : list of parameter tuples, one per element.
    weights : nonnegative quadrature weights, one per element.
    operator_fn : label -> (dim, dim) operator for the family T.
    rep_fn : label -> operator for the reference representation D
        (defaults to ``operator_fn``: the self-covariant case).
    covariance_fn : (g_label, h_label) -> h'_label for the covariance
        relation, or None when no relation is declared.
    apply_fn : optional fast path computing T(label) @ vec without
        materializing the operator.
    identity_label : label at which both T and D are the identity.
    discretization_tol : the accuracy the frame's quadrature claims for
        the closure and trace identities (exact families: ~1e-12).
    """

    def __init__(self, dim, labels, weights, operator_fn, *, rep_fn=None,
                 covariance_fn=None, apply_fn=None, amplitude_fn=None,
                 identity_label=None, discretization_tol=1e-12, name="frame"):
        self.dim = int(dim)
        self.labels = [tuple(l) if isinstance(l, (tuple, list, np.ndarray)) else (l,)
                       for l in labels]
        self.weights = np.asarray(weights, dtype=np.float64).ravel()
        if len(self.labels) != self.weights.shape[0]:
            raise ValidationError("labels and weights disagree in length")
        if len(self.labels) == 0:
            raise ValidationError("frame has no elements")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValidationError("frame weights must be finite and nonnegative")
        self._operator_fn = operator_fn
        self._rep_fn = rep_fn if rep_fn is not None else operator_fn
        self._covariance_fn = covariance_fn
        self._apply_fn = apply_fn
        self._amplitude_fn = amplitude_fn
        self.identity_label = identity_label
        self.discretization_tol = float(discretization_tol)
        self.name = name
        self._k_tilde = None
        self._k_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.labels)

    def operator(self, label) -> np.ndarray:
        return self._operator_fn(label)

    def rep(self, label) -> np.ndarray:
        return self._rep_fn(label)

    def apply(self, label, vec) -> np.ndarray:
        if self._apply_fn is not None:
            return self._apply_fn(label, vec)
        return self.operator(label) @ vec

    def covariance(self, g_label, h_label):
        if self._covariance_fn is None:
            raise ValidationError(f"frame {self.name!r} declares no covariance map")
        return self._covariance_fn(g_label, h_label)

    def elements(self):
        for label, weight in zip(self.labels, self.weights):
            yield FrameElement(label, float(weight), self.operator(label))

    @property
    def k_tilde(self) -> float:
        if self._k_tilde is None:
            # deterministic default pair: the first basis vector twice
            e0 = np.zeros(self.dim, dtype=np.complex128)
            e0[0] = 1.0
            estimate_k_tilde(self, e0, e0)
        return self._k_tilde

    def _cache_k_tilde(self, value: float) -> None:
        # write-once: the first computed estimate sticks
        with self._k_lock:
            if self._k_tilde is None:
                if value <= 0:
                    raise NumericalFailure(f"frame {self.name!r} produced k={value}")
                self._k_tilde = float(value)


def estimate_k_tilde(frame: OperatorFrame, phi, psi) -> float:
    """Weighted sum of |<phi|T(g)|psi>|^2 over the frame.

    For a tomographic frame the value is independent of the normalized
    vector pair; the first call caches it on the frame.
    """
    phi = check_unit_vector(phi, name="phi")
    psi = check_unit_vector(psi, name="psi")
    if phi.shape[0] != frame.dim or psi.shape[0] != frame.dim:
        raise ValidationError("vector length does not match frame dimension")
    acc = KahanAccumulator()
    if frame._amplitude_fn is not None:
        # batched fast path: one chunk of <phi|T(g)|psi> at a time
        for start in range(0, len(frame), 2048):
            labels = frame.labels[start:start + 2048]
            amps = frame._amplitude_fn(labels, phi, psi)
            w = frame.weights[start:start + 2048]
            acc.add(np.sum(w * (amps.real ** 2 + amps.imag ** 2)))
    else:
        phic = phi.conj()
        for label, weight in zip(frame.labels, frame.weights):
            amp = phic @ frame.apply(label, psi)
            acc.add(weight * (amp.real ** 2 + amp.imag ** 2))
    value = float(acc.value.real)
    frame._cache_k_tilde(value)
    return value


def k_tilde_invariance(frame: OperatorFrame, trials: int, seed: int) -> float:
    """Relative spread (max-min)/mean of k estimates over random vector pairs.

    Near zero for a tomographic frame; large spread flags a family that
    does not resolve the state space.
    """
    if trials < 2:
        raise ValidationError("invariance check needs at least 2 trials")
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 0x7213]))
    estimates = []
    for _ in range(trials):
        phi = rng.standard_normal(frame.dim) + 1j * rng.standard_normal(frame.dim)
        psi = rng.standard_normal(frame.dim) + 1j * rng.standard_normal(frame.dim)
        phi /= np.linalg.norm(phi)
        psi /= np.linalg.norm(psi)
        estimates.append(estimate_k_tilde(frame, phi, psi))
    estimates = np.asarray(estimates)
    return float((estimates.max() - estimates.min()) / estimates.mean())


def covariance_residual(frame: OperatorFrame, g_label, h_label,
                        block: int | None = None) -> float:
    """Phase-aligned distance between D(g) T(h) and T(covariance(g, h)).

    ``block`` restricts the comparison to the leading principal block of
    that size (oscillator frames quarantine truncation artifacts there).
    """
    h_prime = frame.covariance(g_label, h_label)
    m1 = frame.rep(g_label) @ frame.operator(h_label)
    m2 = frame.operator(h_prime)
    if block is not None:
        m1 = m1[:block, :block]
        m2 = m2[:block, :block]
    overlap = complex(np.vdot(m2, m1))
    if abs(overlap) > 0:
        phase = overlap / abs(overlap)
    else:
        phase = 1.0
    return float(np.linalg.norm(m1 - phase * m2))


def trace_identity_residual(frame: OperatorFrame, a) -> float:
    """Distance of (1/k) sum_g w_g T(g) A T(g)^dag from Tr[A] I, over dim."""
    am = as_operator(a, "A")
    if am.shape[0] != frame.dim:
        raise ValidationError("operator dimension does not match frame")
    k = frame.k_tilde
    acc = KahanAccumulator((frame.dim, frame.dim))
    for el in frame.elements():
        acc.add(el.weight * (el.operator @ am @ el.operator.conj().T))
    lhs = acc.value / k
    target = np.trace(am) * np.eye(frame.dim)
    return float(np.linalg.norm(lhs - target)) / frame.dim


def closure_residual(frame: OperatorFrame, a) -> float:
    """Relative distance of (1/k) sum_g w_g Tr[A T(g)] T(g)^dag from A."""
    am = as_operator(a, "A")
    if am.shape[0] != frame.dim:
        raise ValidationError("operator dimension does not match frame")
    norm_a = hs_norm(am)
    if norm_a == 0:
        raise ValidationError("closure residual is undefined for the zero operator")
    k = frame.k_tilde
    acc = KahanAccumulator((frame.dim, frame.dim))
    for el in frame.elements():
        coeff = np.einsum("ij,ji->", am, el.operator)
        acc.add((el.weight * coeff) * el.operator.conj().T)
    return float(np.linalg.norm(acc.value / k - am)) / norm_a


def _gram_matrix(ops) -> np.ndarray:
    n = len(ops)
    g = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(i, n):
            g[i, j] = hs_inner(ops[i], ops[j])
            g[j, i] = np.conj(g[i, j])
    return g


def _check_conditioning(gram: np.ndarray, cond_limit: float) -> float:
    vals = np.linalg.eigvalsh((gram + gram.conj().T) / 2.0)
    lo, hi = float(vals[0]), float(vals[-1])
    cond = np.inf if lo <= 0 else hi / lo
    if cond > cond_limit:
        raise NumericalFailure(
            f"operator family too ill-conditioned: Gram condition number {cond:.3e} "
            f"exceeds {cond_limit:.1e}")
    return cond


def _gram_schmidt_with_coeffs(ops, cond_limit=1e8):
    mats = [as_operator(op, f"ops[{i}]") for i, op in enumerate(ops)]
    dim = mats[0].shape[0]
    for i, m in enumerate(mats):
        if m.shape[0] != dim:
            raise ValidationError(f"ops[{i}] dimension differs from ops[0]")
    _check_conditioning(_gram_matrix(mats), cond_limit)
    n = len(mats)
    basis = []
    coeffs = np.zeros((n, n), dtype=np.complex128)  # B_i = sum_j coeffs[i,j] ops[j]
    for i, m in enumerate(mats):
        v = m.astype(np.complex128, copy=True)
        c = np.zeros(n, dtype=np.complex128)
        c[i] = 1.0
        for _ in range(2):  # one reorthogonalization pass for stability
            for j, b in enumerate(basis):
                proj = hs_inner(b, v)
                v = v - proj * b
                c = c - proj * coeffs[j]
        norm = hs_norm(v)
        if norm < 1e-9 * hs_norm(m):
            raise NumericalFailure(
                f"Gram-Schmidt collapse: ops[{i}] is dependent on its predecessors")
        basis.append(v / norm)
        coeffs[i] = c / norm
    return basis, coeffs


def gram_schmidt(ops, cond_limit: float = 1e8) -> list[np.ndarray]:
    """Orthonormalize operators under the Hilbert-Schmidt inner product.

    Triangular: the k-th output lies in the span of the first k inputs.
    Dependent or ill-conditioned families raise, naming the offending
    index where one is identifiable.
    """
    basis, _ = _gram_schmidt_with_coeffs(ops, cond_limit)
    return basis


@dataclass
class DualFrame:
    """Orthonormal basis spanning a family, plus its index-aligned duals."""

    basis: list
    duals: list


def dual_frame(ops, method: str = "gram", cond_limit: float = 1e8) -> DualFrame:
    """Duals R_i of a linearly independent family: Tr[R_i ops_j] = delta_ij.

    ``method='gram'`` inverts the Gram matrix; ``method='gram-schmidt'``
    reassembles the duals from the orthonormalized basis.  The dual
    basis is unique, so both routes agree to roundoff.
    """
    basis, coeffs = _gram_schmidt_with_coeffs(ops, cond_limit)
    mats = [as_operator(op) for op in ops]
    adjoints = np.array([m.conj().T for m in mats])
    if method == "gram":
        gram = _gram_matrix(mats)
        inv = np.linalg.solve(gram, np.eye(len(mats), dtype=np.complex128))
        duals = [np.tensordot(inv[i], adjoints, axes=(0, 0)) for i in range(len(mats))]
    elif method == "gram-schmidt":
        mix = coeffs.conj().T @ coeffs  # duals_j = sum_k mix[k, j] ops_k^dag
        duals = [np.tensordot(mix[:, j], adjoints, axes=(0, 0)) for j in range(len(mats))]
    else:
        raise ValidationError(f"unknown dual_frame method {method!r}")
    return DualFrame(basis=basis, duals=duals)


_PAULI = {
    0: np.eye(2, dtype=np.complex128),
    1: np.array([[0, 1], [1, 0]], dtype=np.complex128),
    2: np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    3: np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def pauli_frame() -> OperatorFrame:
    """The qubit frame {I, X, Y, Z} with unit weights (k = 2).

    Products compose by index XOR up to a phase, which the covariance
    check absorbs.
    """
    return OperatorFrame(
        dim=2,
        labels=[(i,) for i in range(4)],
        weights=np.ones(4),
        operator_fn=lambda label: _PAULI[label[0]],
        covariance_fn=lambda g, h: (g[0] ^ h[0],),
        identity_label=(0,),
        discretization_tol=1e-12,
        name="pauli",
    )


def frame_to_json_dict(frame: OperatorFrame) -> dict:
    """Materialize a frame for export; maps stay in code, not in the file."""
    return {
        "dim": frame.dim,
        "name": frame.name,
        "discretization_tol": frame.discretization_tol,
        "elements": [
            {
                "label": [float(x) for x in el.label],
                "weight": el.weight,
                "operator": matrix_to_json_dict(el.operator),
            }
            for el in frame.elements()
        ],
    }


def frame_from_json_dict(doc: dict) -> OperatorFrame:
    try:
        dim = int(doc["dim"])
        elements = doc["elements"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed frame document: {exc}") from exc
    labels, weights, table = [], [], {}
    for item in elements:
        label = tuple(float(x) for x in item["label"])
        labels.append(label)
        weights.append(float(item["weight"]))
        table[label] = matrix_from_json_dict(item["operator"])
    return OperatorFrame(
        dim=dim,
        labels=labels,
        weights=np.asarray(weights),
        operator_fn=lambda label: table[tuple(label)],
        covariance_fn=None,
        discretization_tol=float(doc.get("discretization_tol", 1e-12)),
        name=str(doc.get("name", "imported")),
    )


def write_frame_json(path, frame: OperatorFrame) -> None:
    Path(path).write_text(json.dumps(frame_to_json_dict(frame)) + "\n")


def read_frame_json(path) -> OperatorFrame:
    return frame_from_json_dict(json.loads(Path(path).read_text()))
