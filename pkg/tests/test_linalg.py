import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invbandit.linalg import (NotSpdError, SpdMatrix, derive_seed, gaussian,
                              make_rng, quad_form, spd_solve)


class TestSpdSolve:
    def test_scalar(self):
        assert spd_solve([[5.0]], [2.0]) == pytest.approx([0.4])

    def test_identity(self):
        assert spd_solve(np.eye(2), [3.0, -1.0]) == pytest.approx([3.0, -1.0])

    def test_diagonal_oracle(self):
        out = spd_solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 2.0])
        assert out == pytest.approx([1.0, 0.5])

    def test_residual_bound(self):
        rng = make_rng(3)
        a = rng.standard_normal((6, 6))
        m = a @ a.T + 6 * np.eye(6)
        v = rng.standard_normal(6)
        x = spd_solve(m, v)
        assert np.abs(m @ x - v).max() <= 1e-9 * (1 + np.abs(v).max())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 8))
    def test_roundtrip_property(self, seed, d):
        rng = make_rng(seed, "roundtrip")
        a = rng.standard_normal((d, d))
        m = a @ a.T + d * np.eye(d)
        v = rng.standard_normal(d)
        out = spd_solve(m, m @ v)
        assert np.abs(out - v).max() <= 1e-8 * (1 + np.abs(v).max())

    def test_not_spd_names_pivot(self):
        with pytest.raises(NotSpdError) as exc:
            spd_solve([[1.0, 0.0], [0.0, -1.0]], [1.0, 1.0])
        assert exc.value.pivot == 2

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            SpdMatrix([[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_nonsquare_and_length_mismatch(self):
        with pytest.raises(ValueError, match="square"):
            SpdMatrix(np.ones((2, 3)))
        with pytest.raises(ValueError, match="dimension"):
            SpdMatrix(np.eye(2)).solve([1.0, 2.0, 3.0])

    def test_factor_cached(self):
        m = SpdMatrix(np.eye(3) * 2)
        assert m.cho is m.cho


class TestQuadForm:
    def test_zero_vector(self):
        assert quad_form(np.eye(1) * 7, [0.0]) == 0.0

    def test_scalar_oracle(self):
        assert quad_form([[5.0]], [3.0]) == pytest.approx(1.8)

    def test_identity_oracle(self):
        assert quad_form(np.eye(2), [3.0, 4.0]) == pytest.approx(25.0)

    def test_nonnegative_and_clamped(self):
        rng = make_rng(11)
        for _ in range(20):
            a = rng.standard_normal((3, 3))
            m = a @ a.T + 1e-8 * np.eye(3)
            assert quad_form(m, rng.standard_normal(3)) >= 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            quad_form(np.eye(2), [1.0])


class TestGaussian:
    def test_zero_std_exact(self):
        assert gaussian(make_rng(0), 0.5, 0.0) == 0.5

    def test_negative_std(self):
        with pytest.raises(ValueError, match="nonnegative"):
            gaussian(make_rng(0), 0.0, -1.0)

    def test_law_of_large_numbers(self):
        rng = make_rng(123, "lln")
        draws = np.array([gaussian(rng, 0.0, 1.0) for _ in range(10**5)])
        assert abs(draws.mean()) < 0.01
        assert abs(draws.std() - 1.0) < 0.01

    def test_determinism(self):
        a = [gaussian(make_rng(9), 1.0, 2.0) for _ in range(1)]
        b = [gaussian(make_rng(9), 1.0, 2.0) for _ in range(1)]
        assert a == b


class TestRngStreams:
    def test_same_key_same_stream(self):
        assert np.array_equal(make_rng(5, "x").standard_normal(4),
                              make_rng(5, "x").standard_normal(4))

    def test_distinct_keys_distinct_streams(self):
        assert not np.array_equal(make_rng(5, "x").standard_normal(4),
                                  make_rng(5, "y").standard_normal(4))

    def test_distinct_seeds_distinct_streams(self):
        assert not np.array_equal(make_rng(5, "x").standard_normal(4),
                                  make_rng(6, "x").standard_normal(4))

    def test_multi_part_keys(self):
        assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
        assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)

    def test_no_keys_passthrough(self):
        assert derive_seed(42) == 42
