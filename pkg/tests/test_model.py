import math

import numpy as np
import pytest

from hgmnet.errors import (
    ConstantColumnError,
    DimensionMismatchError,
    NonFiniteError,
    NotPositiveDefiniteError,
    SingularSystemError,
)
from hgmnet.model import (
    LOG_2PI,
    PHI_FLOOR,
    DataMatrix,
    GroupAssignment,
    NoiseVariances,
    PrecisionMatrix,
    group_means,
    latent_gradient,
    neg_log_likelihood,
    standardize,
    update_latent,
    update_noise_variances,
)

from _oracles import (
    latent_minimizer_numeric,
    latent_objective,
    nll_reference,
    noise_minimizer_numeric,
    noise_objective,
)


def _random_instance(rng, n, p, k):
    x = DataMatrix(rng.normal(size=(n, p)))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=p - k)])
    g = GroupAssignment(np.sort(labels).astype(np.int64), k)
    q = rng.normal(size=(k, k))
    omega = q @ q.T / k + np.eye(k)
    phi = rng.uniform(0.5, 2.0, size=k)
    z = rng.normal(size=(n, k))
    return x, g, z, omega, phi


class TestDataMatrix:
    def test_rejects_1d(self):
        with pytest.raises(DimensionMismatchError):
            DataMatrix(np.arange(4.0))

    def test_rejects_single_row(self):
        with pytest.raises(DimensionMismatchError):
            DataMatrix(np.ones((1, 3)))

    def test_rejects_nan_with_location(self):
        v = np.ones((3, 3))
        v[1, 2] = np.nan
        with pytest.raises(NonFiniteError, match="row 1, column 2"):
            DataMatrix(v)

    def test_from_array_casts(self):
        x = DataMatrix.from_array([[1, 2], [3, 4]])
        assert x.values.dtype == np.float64
        assert (x.n, x.p) == (2, 2)


class TestGroupAssignment:
    def test_rejects_empty_group(self):
        with pytest.raises(DimensionMismatchError):
            GroupAssignment(np.array([0, 0, 2]), 3)

    def test_rejects_out_of_range(self):
        with pytest.raises(DimensionMismatchError):
            GroupAssignment(np.array([0, 3]), 2)
        with pytest.raises(DimensionMismatchError):
            GroupAssignment(np.array([0, -1]), 2)

    def test_sizes_and_equality(self):
        g = GroupAssignment.from_labels([0, 1, 1, 0, 2])
        assert g.k == 3
        assert list(g.sizes) == [2, 2, 1]
        assert g == GroupAssignment(np.array([0, 1, 1, 0, 2]), 3)
        assert g != GroupAssignment(np.array([0, 1, 1, 0, 1]), 2)


class TestPrecisionMatrix:
    def test_rejects_asymmetric(self):
        v = np.array([[1.0, 0.1], [0.2, 1.0]])
        with pytest.raises(DimensionMismatchError):
            PrecisionMatrix(v, v != 0)

    def test_rejects_indefinite(self):
        v = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NotPositiveDefiniteError):
            PrecisionMatrix.from_dense(v)

    def test_support_mismatch(self):
        v = np.eye(2)
        with pytest.raises(DimensionMismatchError):
            PrecisionMatrix(v, np.ones((2, 2), dtype=bool))

    def test_offdiag_count(self):
        v = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 1.0]])
        assert PrecisionMatrix.from_dense(v).n_offdiag_nonzero == 2


class TestStandardize:
    def test_symmetric_column(self):
        x = standardize(DataMatrix(np.array([[1.0], [2.0], [3.0]])))
        assert np.allclose(x.values[:, 0], [-1.0, 0.0, 1.0])
        assert x.standardized

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        x = standardize(DataMatrix(rng.normal(size=(20, 5))))
        again = standardize(x)
        assert np.max(np.abs(again.values - x.values)) < 1e-12

    def test_moments(self):
        rng = np.random.default_rng(1)
        x = standardize(DataMatrix(rng.normal(2.0, 3.0, size=(30, 4))))
        assert np.max(np.abs(x.values.mean(axis=0))) < 1e-10
        assert np.max(np.abs(x.values.std(axis=0, ddof=1) - 1)) < 1e-8

    def test_constant_column(self):
        v = np.ones((3, 2))
        v[:, 0] = [1.0, 2.0, 3.0]
        with pytest.raises(ConstantColumnError) as exc:
            standardize(DataMatrix(v))
        assert exc.value.column == 1


class TestGroupMeans:
    def test_singleton_group(self):
        x = DataMatrix(np.array([[1.0, 5.0], [2.0, 6.0]]))
        g = GroupAssignment(np.array([0, 1]), 2)
        zb = group_means(x, g)
        assert np.array_equal(zb, x.values)

    def test_opposite_columns_cancel(self):
        c = np.array([1.0, -2.0, 3.0])
        x = DataMatrix(np.column_stack([c, -c]))
        g = GroupAssignment(np.array([0, 0]), 1)
        assert np.allclose(group_means(x, g)[:, 0], 0.0)

    def test_hand_example(self):
        x = DataMatrix(np.array([[1.0, 3.0, 2.0], [0.0, 0.0, 6.0]]))
        g = GroupAssignment(np.array([0, 0, 0]), 1)
        assert np.allclose(group_means(x, g)[:, 0], [2.0, 2.0])

    def test_row_permutation_commutes(self):
        rng = np.random.default_rng(2)
        x, g, _, _, _ = _random_instance(rng, 8, 6, 3)
        perm = rng.permutation(8)
        direct = group_means(DataMatrix(x.values[perm]), g)
        assert np.array_equal(direct, group_means(x, g)[perm])

    def test_label_length_mismatch(self):
        x = DataMatrix(np.ones((3, 2)))
        with pytest.raises(DimensionMismatchError):
            group_means(x, GroupAssignment(np.array([0, 0, 0]), 1))


class TestNegLogLikelihood:
    def test_collapsed_terms(self):
        # single group, single column, zero residual, phi 1, omega [1]
        rng = np.random.default_rng(3)
        z = rng.normal(size=(10, 1))
        x = DataMatrix(z.copy())
        g = GroupAssignment(np.array([0]), 1)
        nll, pen = neg_log_likelihood(x, z, g, np.eye(1), np.ones(1), 0.5)
        expect = float(z[:, 0] @ z[:, 0]) / 10 + LOG_2PI
        assert abs(nll - expect) < 1e-12
        assert abs(pen - (expect + 0.5)) < 1e-12

    def test_penalty_linear_in_lam(self):
        rng = np.random.default_rng(4)
        x, g, z, omega, phi = _random_instance(rng, 6, 5, 2)
        n1, p1 = neg_log_likelihood(x, z, g, omega, phi, 0.3)
        n2, p2 = neg_log_likelihood(x, z, g, omega, phi, 0.6)
        assert n1 == n2
        assert abs((p2 - n2) - 2 * (p1 - n1)) < 1e-12

    def test_matches_reference(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x, g, z, omega, phi = _random_instance(rng, 5, 4, 2)
            got = neg_log_likelihood(x, z, g, omega, phi, 0.2)
            want = nll_reference(x.values, z, g.labels, omega, phi, 0.2)
            assert abs(got[0] - want[0]) < 1e-10 * max(1, abs(want[0]))
            assert abs(got[1] - want[1]) < 1e-10 * max(1, abs(want[1]))

    def test_decomposition_exact(self):
        rng = np.random.default_rng(6)
        x, g, z, omega, phi = _random_instance(rng, 7, 6, 3)
        nll, pen = neg_log_likelihood(x, z, g, omega, phi, 0.7)
        assert abs((pen - nll) - 0.7 * np.abs(omega).sum()) < 1e-10

    def test_indefinite_omega_rejected(self):
        rng = np.random.default_rng(7)
        x, g, z, _, phi = _random_instance(rng, 5, 4, 2)
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NotPositiveDefiniteError):
            neg_log_likelihood(x, z, g, bad, phi, 0.1)


class TestUpdateLatent:
    def test_zero_phi_returns_means(self):
        rng = np.random.default_rng(8)
        x, g, _, omega, _ = _random_instance(rng, 6, 8, 3)
        zb = group_means(x, g)
        out = update_latent(zb, g, omega, np.zeros(3))
        assert np.allclose(out, zb, atol=1e-12)

    def test_scalar_shrinkage(self):
        # one group of 4 columns, omega [1], phi [1]: factor 4/5
        rng = np.random.default_rng(9)
        x = DataMatrix(rng.normal(size=(5, 4)))
        g = GroupAssignment(np.zeros(4, dtype=np.int64), 1)
        zb = group_means(x, g)
        out = update_latent(zb, g, np.eye(1), np.ones(1))
        assert np.allclose(out, 0.8 * zb, atol=1e-12)

    def test_matches_numeric_minimizer(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            x, g, _, omega, phi = _random_instance(rng, 6, 7, 2)
            zb = group_means(x, g)
            got = update_latent(zb, g, omega, phi)
            want = latent_minimizer_numeric(x.values, g.labels, omega, phi, 2)
            assert np.max(np.abs(got - want)) < 1e-6

    def test_strictly_better_than_probes(self):
        rng = np.random.default_rng(11)
        x, g, _, omega, phi = _random_instance(rng, 6, 9, 3)
        zb = group_means(x, g)
        zs = update_latent(zb, g, omega, phi)
        best = latent_objective(x.values, zs, g.labels, omega, phi)
        assert best <= latent_objective(x.values, zb, g.labels, omega, phi) + 1e-10
        for _ in range(10):
            probe = zs + rng.normal(scale=0.1, size=zs.shape)
            assert best <= latent_objective(x.values, probe, g.labels, omega, phi) + 1e-10

    def test_singular_system(self):
        zb = np.ones((3, 2))
        g = GroupAssignment(np.array([0, 1]), 2)
        # D + Omega*Phi = 0 when omega = -I with unit sizes and phis
        with pytest.raises(SingularSystemError):
            update_latent(zb, g, -np.eye(2), np.ones(2))


class TestUpdateNoise:
    def test_zero_residual_floors(self):
        rng = np.random.default_rng(12)
        z = rng.normal(size=(4, 2))
        x = DataMatrix(z[:, [0, 0, 1]])
        g = GroupAssignment(np.array([0, 0, 1]), 2)
        out = update_noise_variances(x, z, g)
        assert np.all(out.phi == PHI_FLOOR)
        assert out.any_floored
        assert list(out.floored) == [True, True]

    def test_hand_example(self):
        z = np.zeros((2, 1))
        x = DataMatrix(np.array([[1.0, 1.0], [1.0, -1.0]]))
        g = GroupAssignment(np.array([0, 0]), 1)
        out = update_noise_variances(x, z, g)
        assert abs(out.phi[0] - 1.0) < 1e-15
        assert not out.any_floored

    def test_residual_scaling(self):
        rng = np.random.default_rng(13)
        x, g, z, _, _ = _random_instance(rng, 6, 5, 2)
        base = update_noise_variances(x, z, g).phi
        resid = x.values - z[:, g.labels]
        scaled = DataMatrix(z[:, g.labels] + 3.0 * resid)
        assert np.allclose(update_noise_variances(scaled, z, g).phi, 9.0 * base)

    def test_matches_numeric_minimizer(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            x, g, z, _, _ = _random_instance(rng, 5, 6, 2)
            got = update_noise_variances(x, z, g).phi
            want = noise_minimizer_numeric(x.values, z, g.labels, 2)
            assert np.max(np.abs(got - want)) < 1e-6

    def test_beats_probe_set(self):
        rng = np.random.default_rng(15)
        x, g, z, _, _ = _random_instance(rng, 6, 7, 3)
        star = update_noise_variances(x, z, g).phi
        best = noise_objective(x.values, z, g.labels, star)
        for _ in range(20):
            probe = rng.uniform(0.05, 5.0, size=3)
            assert best <= noise_objective(x.values, z, g.labels, probe) + 1e-10


class TestLatentGradient:
    def test_zero_at_minimizer(self):
        rng = np.random.default_rng(16)
        x, g, _, omega, phi = _random_instance(rng, 6, 8, 3)
        zs = update_latent(group_means(x, g), g, omega, phi)
        assert np.max(np.abs(latent_gradient(x, zs, g, omega, phi))) < 1e-8

    def test_finite_differences(self):
        rng = np.random.default_rng(17)
        h = 1e-5
        for _ in range(5):
            x, g, z, omega, phi = _random_instance(rng, 5, 6, 2)
            grad = latent_gradient(x, z, g, omega, phi)
            for idx in [(0, 0), (2, 1), (4, 0)]:
                zp = z.copy(); zp[idx] += h
                zm = z.copy(); zm[idx] -= h
                fd = (latent_objective(x.values, zp, g.labels, omega, phi)
                      - latent_objective(x.values, zm, g.labels, omega, phi)) / (2 * h)
                assert abs(grad[idx] - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_no_coupling_at_means(self):
        rng = np.random.default_rng(18)
        x, g, _, _, phi = _random_instance(rng, 5, 6, 2)
        zb = group_means(x, g)
        grad = latent_gradient(x, zb, g, np.zeros((2, 2)), phi)
        assert np.max(np.abs(grad)) < 1e-12


class TestConditionalConvexity:
    def test_midpoint_in_z(self):
        rng = np.random.default_rng(19)
        x, g, _, omega, phi = _random_instance(rng, 5, 6, 2)
        for _ in range(10):
            z1 = rng.normal(size=(5, 2))
            z2 = rng.normal(size=(5, 2))
            mid = latent_objective(x.values, (z1 + z2) / 2, g.labels, omega, phi)
            avg = (latent_objective(x.values, z1, g.labels, omega, phi)
                   + latent_objective(x.values, z2, g.labels, omega, phi)) / 2
            assert mid <= avg + 1e-10

    def test_midpoint_in_inverse_phi(self):
        rng = np.random.default_rng(20)
        x, g, z, _, _ = _random_instance(rng, 5, 6, 2)

        def f(inv_phi):
            return noise_objective(x.values, z, g.labels, 1.0 / inv_phi)

        for _ in range(10):
            a = rng.uniform(0.2, 5.0, size=2)
            b = rng.uniform(0.2, 5.0, size=2)
            assert f((a + b) / 2) <= (f(a) + f(b)) / 2 + 1e-10

    def test_midpoint_in_omega(self):
        rng = np.random.default_rng(21)
        x, g, z, _, phi = _random_instance(rng, 5, 6, 2)

        def f(om):
            return neg_log_likelihood(x, z, g, om, phi, 0.0)[0]

        for _ in range(10):
            q1 = rng.normal(size=(2, 2))
            q2 = rng.normal(size=(2, 2))
            o1 = q1 @ q1.T + np.eye(2)
            o2 = q2 @ q2.T + np.eye(2)
            assert f((o1 + o2) / 2) <= (f(o1) + f(o2)) / 2 + 1e-10


class TestNoiseVariancesType:
    def test_rejects_nonpositive(self):
        with pytest.raises(DimensionMismatchError):
            NoiseVariances(np.array([1.0, 0.0]))

    def test_default_flags(self):
        nv = NoiseVariances(np.array([1.0, 2.0]))
        assert not nv.any_floored
