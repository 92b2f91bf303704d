import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fdlab.errors import (
    AlreadyContained,
    DimensionMismatch,
    DimOrderViolation,
    FullAmbient,
    NotOrthonormal,
    RankDeficient,
    ShapeMismatch,
)
from fdlab.subspace import (
    Subspace,
    extractor_distance,
    orthogonal_complement,
    orthonormalize,
    principal_angle_cos,
    principal_cosines,
    procrustes_rotation,
    project,
    random_rotation,
    refine_rotation,
    sample_uniform_subspace,
    span_with_vector,
    variational_angle_estimate,
)


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def span(*vecs):
    return orthonormalize(np.column_stack(vecs))


def random_extractor(d, k, rng):
    return orthonormalize(rng.standard_normal((d, k))).basis.T.copy()


seeds = st.integers(min_value=0, max_value=2**32 - 1)


class TestSubspaceType:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(NotOrthonormal):
            Subspace(np.array([[1.0], [1.0]]))

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeMismatch):
            Subspace(np.eye(3)[:, :0])

    def test_basis_is_read_only(self):
        s = Subspace(np.eye(3)[:, :2])
        with pytest.raises(ValueError):
            s.basis[0, 0] = 2.0

    def test_dims(self):
        s = Subspace(np.eye(5)[:, :2])
        assert (s.ambient_dim, s.dim) == (5, 2)


class TestOrthonormalize:
    def test_unit_vector_unchanged(self):
        npt.assert_array_equal(orthonormalize(e(0, 3)[:, None]).basis, e(0, 3)[:, None])

    def test_scaling_removed(self):
        npt.assert_allclose(orthonormalize(2 * e(0, 3)).basis[:, 0], e(0, 3), atol=1e-15)

    def test_spans_plane(self):
        s = orthonormalize(np.array([[1.0, 1.0], [1.0, -1.0]]))
        npt.assert_allclose(s.basis.T @ s.basis, np.eye(2), atol=1e-12)
        for i in range(2):
            npt.assert_allclose(project(s, e(i, 2)), e(i, 2), atol=1e-12)

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((6, 3))
        q = orthonormalize(m).basis
        r = q.T @ m
        assert np.all(np.diag(r) >= 0)
        npt.assert_allclose(np.tril(r, -1), 0.0, atol=1e-12)

    def test_rank_deficient(self):
        m = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
        with pytest.raises(RankDeficient):
            orthonormalize(m)

    def test_more_columns_than_rows(self):
        with pytest.raises(RankDeficient):
            orthonormalize(np.ones((2, 3)))


class TestPrincipalAngle:
    def test_identical_lines(self):
        assert principal_angle_cos(span(e(0, 3)), span(e(0, 3))) == pytest.approx(1.0)

    def test_orthogonal_lines(self):
        assert principal_angle_cos(span(e(0, 3)), span(e(1, 3))) == pytest.approx(0.0, abs=1e-15)

    def test_45_degrees(self):
        a = span((e(0, 3) + e(1, 3)) / np.sqrt(2))
        b = span(e(0, 3), e(2, 3))
        assert principal_angle_cos(a, b) == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            principal_angle_cos(span(e(0, 3)), span(e(0, 4)))

    def test_containment_gives_one(self):
        rng = np.random.default_rng(0)
        big = sample_uniform_subspace(10, 4, rng)
        small = orthonormalize(big.basis @ rng.standard_normal((4, 2)))
        assert principal_angle_cos(small, big) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, d=st.integers(3, 12), data=st.data())
    def test_range_symmetry_and_basis_invariance(self, seed, d, data):
        p = data.draw(st.integers(1, d))
        q = data.draw(st.integers(1, d))
        rng = np.random.default_rng(seed)
        a = sample_uniform_subspace(d, p, rng)
        b = sample_uniform_subspace(d, q, rng)
        c = principal_angle_cos(a, b)
        assert 0.0 <= c <= 1.0
        assert c == pytest.approx(principal_angle_cos(b, a), abs=1e-12)
        a_rot = Subspace(a.basis @ random_rotation(p, rng))
        assert c == pytest.approx(principal_angle_cos(a_rot, b), abs=1e-12)

    def test_cosines_sorted(self):
        rng = np.random.default_rng(1)
        cs = principal_cosines(sample_uniform_subspace(9, 3, rng), sample_uniform_subspace(9, 4, rng))
        assert np.all(np.diff(cs) <= 0)


class TestVariational:
    def test_same_line(self):
        assert variational_angle_estimate(span(e(0, 3)), span(e(0, 3))) == pytest.approx(1.0)

    def test_orthogonal(self):
        a, b = span(e(0, 3)), span(e(1, 3), e(2, 3))
        assert variational_angle_estimate(a, b) == pytest.approx(0.0, abs=1e-15)

    def test_order_violation(self):
        with pytest.raises(DimOrderViolation):
            variational_angle_estimate(span(e(0, 3), e(1, 3)), span(e(0, 3)))

    def test_agrees_with_svd_on_random_pairs(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            a = sample_uniform_subspace(20, 3, rng)
            b = sample_uniform_subspace(20, 8, rng)
            est = variational_angle_estimate(a, b, rng=rng)
            exact = principal_angle_cos(a, b)
            assert est >= exact - 1e-12
            worst = max(worst, abs(est - exact))
        assert worst <= 1e-6


class TestExtractorDistance:
    def test_self_distance(self):
        b = random_extractor(7, 3, np.random.default_rng(0))
        dist, u = extractor_distance(b, b)
        assert dist == pytest.approx(0.0, abs=1e-14)
        npt.assert_allclose(u, np.eye(3), atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds, k=st.integers(1, 4))
    def test_rotation_invariance(self, seed, k):
        rng = np.random.default_rng(seed)
        b = random_extractor(k + 5, k, rng)
        u = random_rotation(k, rng)
        assert extractor_distance(b, u @ b)[0] <= 1e-13

    def test_k1_orthogonal_rows(self):
        dist, u = extractor_distance(e(0, 2)[None, :], e(1, 2)[None, :])
        assert dist == pytest.approx(np.sqrt(2), abs=1e-15)
        assert abs(u[0, 0]) == 1.0

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds, k=st.integers(1, 4))
    def test_symmetric_nonnegative(self, seed, k):
        rng = np.random.default_rng(seed)
        b, b2 = random_extractor(k + 4, k, rng), random_extractor(k + 4, k, rng)
        d1, d2 = extractor_distance(b, b2)[0], extractor_distance(b2, b)[0]
        assert d1 >= 0
        assert d1 == pytest.approx(d2, abs=1e-12)

    def test_returned_rotation_is_orthogonal(self):
        rng = np.random.default_rng(5)
        b, b2 = random_extractor(8, 3, rng), random_extractor(8, 3, rng)
        _, u = extractor_distance(b, b2)
        npt.assert_allclose(u.T @ u, np.eye(3), atol=1e-10)
        assert abs(abs(np.linalg.det(u)) - 1.0) <= 1e-8

    def test_procrustes_is_frobenius_optimal(self):
        rng = np.random.default_rng(6)
        b, b2 = random_extractor(8, 3, rng), random_extractor(8, 3, rng)
        best = np.linalg.norm(b - procrustes_rotation(b, b2) @ b2)
        for _ in range(200):
            u = random_rotation(3, rng)
            assert np.linalg.norm(b - u @ b2) >= best - 1e-12

    def test_refinement_never_worse(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            b, b2 = random_extractor(9, 3, rng), random_extractor(9, 3, rng)
            plain = extractor_distance(b, b2)[0]
            refined, u = extractor_distance(b, b2, refine=True, rng=rng)
            assert refined <= plain
            assert np.linalg.norm(b - u @ b2, 2) == pytest.approx(refined, abs=1e-12)
            npt.assert_allclose(u.T @ u, np.eye(3), atol=1e-10)

    def test_refine_rotation_k1_returns_start(self):
        b, b2 = e(0, 3)[None, :], e(1, 3)[None, :]
        dist, u = refine_rotation(b, b2, np.eye(1))
        assert dist == pytest.approx(np.sqrt(2))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            extractor_distance(np.eye(4)[:2], np.eye(4)[:3])

    def test_not_orthonormal(self):
        with pytest.raises(NotOrthonormal):
            extractor_distance(2 * np.eye(4)[:2], np.eye(4)[:2])


class TestProject:
    def test_member_fixed(self):
        s = span(e(0, 3), e(1, 3))
        npt.assert_allclose(project(s, [1.0, 2.0, 0.0]), [1.0, 2.0, 0.0])

    def test_orthogonal_to_zero(self):
        npt.assert_allclose(project(span(e(0, 3)), e(2, 3)), 0.0)

    def test_coordinate_projection(self):
        s = span(e(0, 3), e(1, 3))
        npt.assert_allclose(project(s, [1.0, 2.0, 3.0]), [1.0, 2.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            project(span(e(0, 3)), np.ones(4))

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, d=st.integers(2, 10), data=st.data())
    def test_idempotent_self_adjoint_contractive(self, seed, d, data):
        r = data.draw(st.integers(1, d))
        rng = np.random.default_rng(seed)
        s = sample_uniform_subspace(d, r, rng)
        p = s.projector()
        npt.assert_allclose(p @ p, p, atol=1e-12)
        npt.assert_allclose(p, p.T, atol=1e-12)
        x = rng.standard_normal(d)
        assert np.linalg.norm(project(s, x)) <= np.linalg.norm(x) + 1e-12


class TestComplement:
    def test_line_in_plane(self):
        c = orthogonal_complement(span(e(0, 2)))
        assert c.dim == 1
        assert abs(c.basis[0, 0]) < 1e-15 and abs(abs(c.basis[1, 0]) - 1.0) < 1e-15

    def test_plane_in_r4(self):
        s = span(e(0, 4), e(1, 4))
        c = orthogonal_complement(s)
        assert c.dim == 2
        npt.assert_allclose(s.basis.T @ c.basis, 0.0, atol=1e-15)

    def test_random_completes_basis(self):
        s = sample_uniform_subspace(20, 7, np.random.default_rng(2))
        c = orthogonal_complement(s)
        assert c.dim == 13
        q = np.hstack([s.basis, c.basis])
        npt.assert_allclose(q.T @ q, np.eye(20), atol=1e-10)
        assert np.max(np.abs(s.basis.T @ c.basis)) <= 1e-10

    def test_full_space(self):
        with pytest.raises(FullAmbient):
            orthogonal_complement(Subspace(np.eye(3)))


class TestUniformSampling:
    def test_full_dimension(self):
        rng = np.random.default_rng(0)
        s = sample_uniform_subspace(6, 6, rng)
        assert principal_angle_cos(sample_uniform_subspace(6, 2, rng), s) == pytest.approx(1.0)

    def test_orthonormal(self):
        s = sample_uniform_subspace(30, 9, np.random.default_rng(0))
        assert np.max(np.abs(s.basis.T @ s.basis - np.eye(9))) <= 1e-10

    def test_bad_dimension(self):
        with pytest.raises(DimensionMismatch):
            sample_uniform_subspace(3, 4, np.random.default_rng(0))

    def test_rotation_invariance_ks(self):
        rng = np.random.default_rng(2024)
        d, k, m, n = 12, 2, 4, 2000
        r = sample_uniform_subspace(d, k, rng)
        r_rot = Subspace(random_rotation(d, rng) @ r.basis)
        a = [principal_angle_cos(r, sample_uniform_subspace(d, m, rng)) for _ in range(n)]
        b = [principal_angle_cos(r_rot, sample_uniform_subspace(d, m, rng)) for _ in range(n)]
        ks = stats.ks_2samp(a, b).statistic
        critical = 1.628 * np.sqrt(2.0 / n)  # 1% two-sample level
        assert ks < critical


class TestSpanWithVector:
    def test_adds_orthogonal_vector(self):
        s = span_with_vector(span(e(0, 3)), e(1, 3))
        assert s.dim == 2
        npt.assert_allclose(s.projector(), np.diag([1.0, 1.0, 0.0]), atol=1e-15)

    def test_gram_schmidt_residual(self):
        s = span_with_vector(span(e(0, 3)), e(0, 3) + e(1, 3))
        npt.assert_allclose(s.projector(), np.diag([1.0, 1.0, 0.0]), atol=1e-15)

    def test_contained(self):
        with pytest.raises(AlreadyContained):
            span_with_vector(span(e(0, 3), e(1, 3)), [3.0, -1.0, 0.0])

    @settings(max_examples=25, deadline=None)
    @given(seed=seeds)
    def test_contains_both(self, seed):
        rng = np.random.default_rng(seed)
        s = sample_uniform_subspace(8, 3, rng)
        w = rng.standard_normal(8)
        aug = span_with_vector(s, w)
        assert aug.dim == 4
        npt.assert_allclose(project(aug, w), w, atol=1e-10)
        assert principal_angle_cos(s, aug) == pytest.approx(1.0, abs=1e-12)


class TestRandomRotation:
    @settings(max_examples=25, deadline=None)
    @given(seed=seeds, k=st.integers(1, 6), proper=st.booleans())
    def test_orthogonal(self, seed, k, proper):
        u = random_rotation(k, np.random.default_rng(seed), proper=proper)
        npt.assert_allclose(u.T @ u, np.eye(k), atol=1e-10)
        det = np.linalg.det(u)
        assert abs(abs(det) - 1.0) <= 1e-8
        if proper:
            assert det > 0
