import numpy as np
import pytest

from grouptomo.frames import (
    OperatorFrame,
    closure_residual,
    covariance_residual,
    dual_frame,
    estimate_k_tilde,
    frame_from_json_dict,
    frame_to_json_dict,
    gram_schmidt,
    k_tilde_invariance,
    pauli_frame,
    trace_identity_residual,
)
from grouptomo.linalg import hs_inner, random_hermitian
from grouptomo.oscillator import displacement_frame, fock_space
from grouptomo.spin import rotation_frame, sphere_frame, spin_operators
from grouptomo.validation import NumericalFailure, ValidationError

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = [I2, SX, SY, SZ]
E0 = np.array([1, 0], dtype=complex)


class TestKTilde:
    def test_pauli_value(self):
        # order of the family divided by the dimension: 4/2
        assert estimate_k_tilde(pauli_frame(), E0, E0) == pytest.approx(2.0, abs=1e-12)

    def test_pauli_invariance_oracle(self):
        # direct-sum oracle: sum_i |<phi|sigma_i|psi>|^2 = 2 for any unit pair
        rng = np.random.default_rng(0)
        frame = pauli_frame()
        for _ in range(10):
            phi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            phi /= np.linalg.norm(phi)
            psi /= np.linalg.norm(psi)
            direct = sum(abs(phi.conj() @ p @ psi) ** 2 for p in PAULIS)
            assert direct == pytest.approx(2.0, abs=1e-12)
            assert estimate_k_tilde(frame, phi, psi) == pytest.approx(direct, abs=1e-12)
        assert k_tilde_invariance(frame, 10, 0) <= 1e-12

    def test_spin_haar_value(self):
        # Haar-integral oracle: k = 1/(2S+1) under the normalized measure
        system = spin_operators(2)
        frame = rotation_frame(system, sphere_frame(2))
        e0 = np.zeros(3, dtype=complex)
        e0[0] = 1.0
        assert estimate_k_tilde(frame, e0, e0) == pytest.approx(1 / 3, abs=1e-4)
        assert k_tilde_invariance(frame, 6, 1) <= 1e-4

    def test_displacement_frame_value(self):
        # gaussian overlap integral: int d^2a e^{-|a|^2} = pi
        frame = displacement_frame(fock_space(40), 4.0, 80)
        e0 = np.zeros(41, dtype=complex)
        e0[0] = 1.0
        assert estimate_k_tilde(frame, e0, e0) == pytest.approx(np.pi, abs=1e-3)

    def test_single_identity_element_spread(self):
        frame = OperatorFrame(2, [(0,)], [1.0], lambda label: I2)
        assert k_tilde_invariance(frame, 12, 3) > 0.1

    def test_reorder_invariance(self):
        rng = np.random.default_rng(1)
        labels = list(range(200))
        weights = rng.uniform(0.1, 1.0, 200)
        ops = [random_hermitian(2, rng) for _ in labels]
        phi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        phi /= np.linalg.norm(phi)
        frame = OperatorFrame(2, [(i,) for i in labels], weights, lambda l: ops[l[0]])
        base = estimate_k_tilde(frame, phi, phi)
        order = rng.permutation(200)
        shuffled = OperatorFrame(2, [(int(i),) for i in order], weights[order],
                                 lambda l: ops[l[0]])
        assert estimate_k_tilde(shuffled, phi, phi) == pytest.approx(base, abs=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValidationError):
            estimate_k_tilde(pauli_frame(), 2 * E0, E0)


class TestCovariance:
    def test_pauli_phase_absorbed(self):
        frame = pauli_frame()
        for g in range(4):
            for h in range(4):
                assert covariance_residual(frame, (g,), (h,)) <= 1e-12

    def test_identity_label_all_builtins(self):
        frames_list = [
            pauli_frame(),
            rotation_frame(spin_operators(1), sphere_frame(1)),
            displacement_frame(fock_space(20), 3.0, 30),
        ]
        h_labels = [(2,), (0.7, 1.1, 2.3), (0.4, -0.3)]
        for frame, h in zip(frames_list, h_labels):
            assert covariance_residual(frame, frame.identity_label, h) <= 1e-12

    def test_undeclared_covariance(self):
        frame = OperatorFrame(2, [(0,)], [1.0], lambda label: I2)
        with pytest.raises(ValidationError):
            covariance_residual(frame, (0,), (0,))


class TestTraceIdentity:
    def test_pauli_traceless(self):
        a = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, trace 0
        assert trace_identity_residual(pauli_frame(), a) <= 1e-12

    def test_pauli_random_matches_direct_sum(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        # direct 4-term oracle
        direct = sum(p @ a @ p.conj().T for p in PAULIS) / 2.0
        assert np.linalg.norm(direct - np.trace(a) * I2) <= 1e-12
        assert trace_identity_residual(pauli_frame(), a) <= 1e-12

    def test_spin_haar(self):
        system = spin_operators(2)
        frame = rotation_frame(system, sphere_frame(2))
        a = random_hermitian(3, np.random.default_rng(3))
        assert trace_identity_residual(frame, a) <= 1e-4


class TestClosure:
    def test_pauli_sigma_z(self):
        # 4-term oracle: sum_i Tr[sz sigma_i] sigma_i / 2 = sz
        direct = sum(np.trace(SZ @ p) * p.conj().T for p in PAULIS) / 2.0
        assert np.linalg.norm(direct - SZ) <= 1e-12
        assert closure_residual(pauli_frame(), SZ) <= 1e-12

    def test_missing_element_detected(self):
        broken = OperatorFrame(2, [(i,) for i in range(3)], np.ones(3),
                               lambda l: PAULIS[l[0]])
        broken._cache_k_tilde(2.0)
        assert closure_residual(broken, SZ) > 0.3

    def test_builtin_frames_reconstruct_random_operators(self):
        rng = np.random.default_rng(4)
        frame = pauli_frame()
        for _ in range(20):
            assert closure_residual(frame, random_hermitian(2, rng)) <= 1e-10
        system = spin_operators(1)
        sframe = rotation_frame(system, sphere_frame(1))
        for _ in range(20):
            assert closure_residual(sframe, random_hermitian(2, rng)) <= sframe.discretization_tol

    def test_displacement_frame_vacuum_projector(self):
        space = fock_space(20)
        frame = displacement_frame(space, 6.0, 120)
        a = np.zeros((21, 21), dtype=complex)
        a[0, 0] = 1.0
        assert closure_residual(frame, a) <= 1e-2

    def test_zero_operator_rejected(self):
        with pytest.raises(ValidationError):
            closure_residual(pauli_frame(), np.zeros((2, 2)))


class TestGramSchmidt:
    def test_single(self):
        basis = gram_schmidt([3.0 * SX])
        assert np.allclose(basis[0], SX / np.sqrt(2))

    def test_two_step_hand_oracle(self):
        basis = gram_schmidt([I2, I2 + 0.1 * SX])
        # second vector must be the sigma_x direction, normalized
        overlap = abs(hs_inner(basis[1], SX / np.sqrt(2)))
        assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_input(self):
        basis = gram_schmidt(PAULIS)
        for op, b in zip(PAULIS, basis):
            assert np.allclose(b, op / np.sqrt(2))
        for i in range(4):
            for j in range(4):
                assert abs(hs_inner(basis[i], basis[j]) - (i == j)) <= 1e-10

    def test_dependent_input_reports_index(self):
        with pytest.raises(NumericalFailure):
            gram_schmidt([I2, SX, I2 + SX])


class TestDualFrame:
    def test_self_dual_orthonormal(self):
        ops = [p / np.sqrt(2) for p in PAULIS]
        duals = dual_frame(ops).duals
        for op, dual in zip(ops, duals):
            assert np.allclose(dual, op.conj().T, atol=1e-12)

    def test_random_frame_delta_property(self):
        rng = np.random.default_rng(5)
        ops = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
               for _ in range(4)]
        duals = dual_frame(ops).duals
        for i in range(4):
            for j in range(4):
                # the pairing the duals are defined by: Tr[R_i F_j] = delta_ij
                val = np.trace(duals[i] @ ops[j])
                assert abs(val - (i == j)) <= 1e-10

    def test_decomposition_of_random_operator(self):
        rng = np.random.default_rng(6)
        ops = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
               for _ in range(9)]
        duals = dual_frame(ops).duals
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        recon = sum(np.trace(ops[i] @ a) * duals[i] for i in range(9))
        assert np.linalg.norm(recon - a) <= 1e-8 * np.linalg.norm(a)

    def test_routes_agree(self):
        # the dual basis is unique: Gram inversion == Gram-Schmidt resummation
        rng = np.random.default_rng(7)
        ops = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
               for _ in range(4)]
        via_gram = dual_frame(ops, method="gram").duals
        via_gs = dual_frame(ops, method="gram-schmidt").duals
        for a, b in zip(via_gram, via_gs):
            assert np.linalg.norm(a - b) <= 1e-8


class TestFrameJson:
    def test_round_trip(self):
        frame = pauli_frame()
        doc = frame_to_json_dict(frame)
        back = frame_from_json_dict(doc)
        assert back.dim == 2 and len(back) == 4
        for label in back.labels:
            assert np.array_equal(back.operator(label), frame.operator(label))
        e0 = np.array([1, 0], dtype=complex)
        assert estimate_k_tilde(back, e0, e0) == pytest.approx(2.0, abs=1e-12)


class TestAdjointFamily:
    """The adjoint relation is checked by running the covariance test on
    the adjoint family, which for the built-ins is the same family at a
    mapped label."""

    def test_pauli_self_adjoint(self):
        frame = pauli_frame()
        for i in range(4):
            op = frame.operator((i,))
            assert np.allclose(op.conj().T, op)

    def test_spin_adjoint_label(self):
        # R(n, psi)^dag = R(-n, psi) exactly: flip the direction
        from grouptomo.spin import Direction, rotation
        system = spin_operators(3)
        theta, phi, psi = 0.8, 2.5, 1.9
        r = rotation(system, Direction(theta, phi), psi)
        flipped = rotation(system, Direction(np.pi - theta, (phi + np.pi) % (2 * np.pi)), psi)
        assert np.linalg.norm(r.conj().T - flipped) <= 1e-12

    def test_displacement_adjoint_label(self):
        space = fock_space(30)
        frame = displacement_frame(space, 3.0, 30)
        op = frame.operator((0.6, -0.4))
        adj = frame.operator((-0.6, 0.4))
        assert np.linalg.norm(op.conj().T - adj) <= 1e-10


class TestKTildeCache:
    def test_write_once(self):
        frame = pauli_frame()
        e0 = np.array([1, 0], dtype=complex)
        estimate_k_tilde(frame, e0, e0)
        assert frame.k_tilde == pytest.approx(2.0, abs=1e-12)
        # later estimates do not overwrite the cache
        e1 = np.array([0, 1], dtype=complex)
        estimate_k_tilde(frame, e1, e1)
        assert frame.k_tilde == pytest.approx(2.0, abs=1e-12)

    def test_lazy_default_pair(self):
        frame = pauli_frame()
        assert frame.k_tilde == pytest.approx(2.0, abs=1e-12)
