import numpy as np
import pytest

from grouptomo.sampling import (
    BLOCK_SIZE,
    MatrixAccumulator,
    block_rng,
    bootstrap_fidelity_stderr,
    iter_blocks,
    sample_categorical,
    sample_inverse_cdf,
    sample_sphere,
    sample_sphere_batch,
)
from grouptomo.linalg import DensityMatrix
from grouptomo.validation import ValidationError


class TestSphereSampling:
    def test_moments(self):
        rng = block_rng(0, 0)
        thetas, phis = sample_sphere_batch(rng, 100_000)
        nz = np.cos(thetas)
        nx = np.cos(phis) * np.sin(thetas)
        # CLT bounds at 1e5 draws
        assert abs(nz.mean()) <= 0.01
        assert abs(nx.mean()) <= 0.01
        assert abs((nz ** 2).mean() - 1 / 3) <= 0.01

    def test_determinism(self):
        a = [sample_sphere(block_rng(42, 0)) for _ in range(10)]
        b = [sample_sphere(block_rng(42, 0)) for _ in range(10)]
        assert a[0] == b[0]
        first = sample_sphere_batch(block_rng(42, 0), 10)
        second = sample_sphere_batch(block_rng(42, 0), 10)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])


class TestCategorical:
    def test_certain(self):
        rng = block_rng(1, 0)
        assert all(sample_categorical([1.0, 0.0, 0.0], rng) == 0 for _ in range(20))

    def test_fair_frequencies(self):
        rng = block_rng(2, 0)
        draws = sample_categorical([1.0, 1.0], rng, size=100_000)
        assert abs(draws.mean() - 0.5) <= 0.01

    def test_clamps_tolerated_negativity(self):
        rng = block_rng(3, 0)
        sample_categorical([0.5, -1e-12, 0.5], rng)  # no error

    def test_rejects_zero_mass(self):
        with pytest.raises(ValidationError):
            sample_categorical([0.0, 0.0], block_rng(4, 0))

    def test_rejects_true_negative(self):
        with pytest.raises(ValidationError):
            sample_categorical([0.5, -0.1], block_rng(5, 0))


class TestInverseCdf:
    def test_delta_bin(self):
        xs = np.linspace(-1, 1, 11)
        pdf = np.zeros(11)
        pdf[7] = 3.0
        for _ in range(10):
            assert sample_inverse_cdf(pdf, xs, block_rng(6, 0)) == xs[7]

    def test_vacuum_quadrature_variance(self):
        # gaussian oracle: var of sqrt(2/pi) e^{-2x^2} is 1/4
        xs = np.linspace(-5, 5, 801)
        pdf = np.sqrt(2 / np.pi) * np.exp(-2 * xs ** 2)
        draws = sample_inverse_cdf(pdf, xs, block_rng(7, 0), size=100_000)
        assert abs(np.var(draws) - 0.25) <= 0.01

    def test_uniform_mean(self):
        xs = np.linspace(-1, 1, 401)
        draws = sample_inverse_cdf(np.ones(401), xs, block_rng(8, 0), size=100_000)
        assert abs(draws.mean()) <= 0.02

    def test_rejects_no_mass(self):
        with pytest.raises(ValidationError):
            sample_inverse_cdf(np.zeros(5), np.arange(5.0), block_rng(9, 0))


class TestAccumulator:
    def test_constant_stream(self):
        m = np.array([[1.0, 2.0], [2.0, 5.0]], dtype=complex)
        acc = MatrixAccumulator(2)
        acc.add_batch(np.repeat(m[None, :, :], 50, axis=0))
        assert np.allclose(acc.mean, m)
        assert np.allclose(acc.stderr, 0.0, atol=1e-12)

    def test_alternating_scaling(self):
        # variance-formula oracle: stderr of +-M is |M| / sqrt(shots)
        m = np.array([[1.0]], dtype=complex)
        for shots in (256, 1024):
            acc = MatrixAccumulator(1)
            terms = np.array([m[0] if i % 2 == 0 else -m[0] for i in range(shots)])
            acc.add_batch(terms[:, None, :] if terms.ndim == 2 else terms.reshape(shots, 1, 1))
            assert abs(acc.mean[0, 0]) <= 1e-12
            want = 1.0 / np.sqrt(shots)
            assert acc.stderr[0, 0] == pytest.approx(want, rel=1e-2)

    def test_block_sharding_identical(self):
        # one stream vs the same terms split in two shards, merged in order
        rng = np.random.default_rng(10)
        terms = rng.standard_normal((3000, 2, 2)) + 1j * rng.standard_normal((3000, 2, 2))
        single = MatrixAccumulator(2)
        single.add_batch(terms)
        sharded = MatrixAccumulator(2)
        sharded.add_batch(terms[:1500])
        sharded.add_batch(terms[1500:])
        assert np.max(np.abs(single.mean - sharded.mean)) <= 1e-12

    def test_checkpoints_powers_of_two(self):
        acc = MatrixAccumulator(1)
        acc.add_batch(np.ones((1000, 1, 1), dtype=complex))
        counts = [c for c, _ in acc.checkpoints]
        assert counts == [1, 2, 4, 8, 16, 32, 64, 128, 256, 512]

    def test_dimension_drift_rejected(self):
        acc = MatrixAccumulator(2)
        with pytest.raises(ValidationError):
            acc.add_batch(np.ones((4, 3, 3), dtype=complex))


class TestBlockStream:
    def test_blocks_cover_exactly(self):
        spans = [(start, count) for _, start, count, _ in iter_blocks(0, 10_000)]
        assert spans[0] == (0, BLOCK_SIZE)
        assert sum(c for _, c in spans) == 10_000

    def test_block_rngs_depend_on_seed_and_index(self):
        a = block_rng(1, 0).random(4)
        b = block_rng(1, 0).random(4)
        c = block_rng(1, 1).random(4)
        d = block_rng(2, 0).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)


class TestBootstrap:
    def test_fidelity_stderr_scale(self):
        rng = np.random.default_rng(11)
        truth = DensityMatrix(np.diag([0.7, 0.3]).astype(complex))
        acc = MatrixAccumulator(2)
        noise = rng.standard_normal((20_000, 2, 2)) * 0.5
        terms = truth.matrix[None, :, :] + (noise + noise.transpose(0, 2, 1)) / 2
        for start in range(0, 20_000, 4096):
            acc.add_batch(terms[start:start + 4096])
        from grouptomo.sampling import finalize_result
        result = finalize_result(acc, shots=20_000)
        se = bootstrap_fidelity_stderr(result, truth, resamples=100, seed=0)
        assert 0.0 < se < 0.05
