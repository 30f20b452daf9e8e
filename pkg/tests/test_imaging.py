import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gapcast.errors import DomainError
from gapcast.imaging import (encode, export_triple, gadf, gasf, read_matrix_text, rec_plot,
                             to_gray)
from gapcast.series import WindowBlock


def gasf_oracle(x):
    w = len(x)
    psi = [math.acos(v) for v in x]
    return np.array([[math.cos(psi[i] + psi[j]) for j in range(w)] for i in range(w)])


def gadf_oracle(x):
    w = len(x)
    psi = [math.acos(v) for v in x]
    return np.array([[math.sin(psi[i] - psi[j]) for j in range(w)] for i in range(w)])


def rec_oracle(b, eps):
    w = len(b)
    return np.array([[0.0 if abs(b[i] - b[j]) < eps else 1.0 for j in range(w)] for i in range(w)])


unit_vectors = arrays(np.float64, st.integers(2, 16), elements=st.floats(0, 1))


class TestGasf:
    def test_all_ones(self):
        np.testing.assert_array_equal(gasf(np.ones(5)), np.ones((5, 5)))

    def test_three_point_entry(self):
        g = gasf([0, 0.5, 1])
        assert g[0, 1] == pytest.approx(-math.sqrt(3) / 2, abs=1e-12)
        np.testing.assert_allclose(g, gasf_oracle([0, 0.5, 1]), atol=1e-12)

    def test_diagonal_half(self):
        assert gasf([0.5, 0.2])[0, 0] == pytest.approx(-0.5, abs=1e-15)
        assert math.cos(2 * math.acos(0.5)) == pytest.approx(-0.5, abs=1e-15)

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            gasf([0.2, -0.5])

    @given(unit_vectors)
    def test_matches_trig_oracle(self, x):
        np.testing.assert_allclose(gasf(x), gasf_oracle(x), atol=1e-9, rtol=0)

    @given(unit_vectors)
    def test_reverse_symmetry(self, x):
        np.testing.assert_allclose(gasf(x[::-1]), gasf(x)[::-1, ::-1], atol=1e-15)

    @given(unit_vectors)
    def test_pythagorean_identity(self, x):
        psi = np.arccos(x)
        s = np.sin(psi[:, None] + psi[None, :])
        np.testing.assert_allclose(gasf(x) ** 2 + s ** 2, 1.0, atol=1e-9)


class TestGadf:
    def test_zero_diagonal(self):
        np.testing.assert_array_equal(np.diag(gadf([0.1, 0.7, 0.3])), 0)

    def test_extremes(self):
        d = gadf([0, 1])
        assert d[0, 1] == 1 and d[1, 0] == -1

    def test_three_point_entry(self):
        assert gadf([0, 0.5, 1])[1, 2] == pytest.approx(math.sqrt(3) / 2, abs=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            gadf([0.2, 1.5])

    @given(unit_vectors)
    def test_matches_trig_oracle(self, x):
        np.testing.assert_allclose(gadf(x), gadf_oracle(x), atol=1e-9, rtol=0)


class TestRec:
    def test_large_epsilon_gives_zeros(self):
        np.testing.assert_array_equal(rec_plot([0.1, 0.4, 0.2], 1.0), np.zeros((3, 3)))

    def test_extremes(self):
        np.testing.assert_array_equal(rec_plot([0, 1], 0.5), [[0, 1], [1, 0]])

    def test_three_points(self):
        expected = [[0, 0, 1], [0, 0, 1], [1, 1, 0]]
        np.testing.assert_array_equal(rec_plot([0, 0.3, 0.9], 0.5), expected)
        np.testing.assert_array_equal(rec_oracle([0, 0.3, 0.9], 0.5), expected)

    def test_boundary_counts_as_one(self):
        np.testing.assert_array_equal(rec_plot([0.0, 0.5], 0.5), [[0, 1], [1, 0]])

    @pytest.mark.parametrize("eps", [0.0, -0.1])
    def test_rejects_nonpositive_epsilon(self, eps):
        with pytest.raises(DomainError):
            rec_plot([0, 1], eps)

    @given(arrays(np.float64, st.integers(2, 16), elements=st.floats(-50, 50)),
           st.floats(0.01, 5), st.floats(-100, 100))
    def test_oracle_and_shift_invariance(self, b, eps, c):
        r = rec_plot(b, eps)
        np.testing.assert_array_equal(r, rec_oracle(b, eps))
        # shifting by c can move a distance across eps only through rounding
        shifted = rec_plot(b + c, eps)
        dist = np.abs(b[:, None] - b[None, :])
        stable = np.abs(dist - eps) > 1e-9
        np.testing.assert_array_equal(shifted[stable], r[stable])


class TestEncode:
    def test_constant_block(self):
        block = WindowBlock.from_raw(np.full(6, 3.0))
        t = encode(block)
        np.testing.assert_allclose(t.gasf, -0.5, atol=1e-15)
        np.testing.assert_allclose(t.gadf, 0, atol=1e-15)
        np.testing.assert_array_equal(t.rec, 0)

    def test_random_block_matches_oracles(self):
        rng = np.random.default_rng(7)
        block = WindowBlock.from_raw(rng.normal(size=12) * 5)
        t = encode(block)
        assert t.w == 12 and all(m.shape == (12, 12) for m in t)
        np.testing.assert_allclose(t.gasf, gasf_oracle(block.scaled), atol=1e-9)
        np.testing.assert_allclose(t.gadf, gadf_oracle(block.scaled), atol=1e-9)
        np.testing.assert_array_equal(t.rec, rec_oracle(block.scaled, 0.5))

    def test_raw_rec_mode(self):
        block = WindowBlock.from_raw([0.0, 0.3, 10.0])
        np.testing.assert_array_equal(encode(block, 0.5, rec_on_raw=True).rec,
                                      rec_oracle([0.0, 0.3, 10.0], 0.5))


class TestExport:
    def test_text_round_trip_and_names(self, tmp_path):
        block = WindowBlock.from_raw(np.random.default_rng(1).normal(size=8))
        t = encode(block)
        paths = export_triple(t, tmp_path, "r03", 40, ("txt", "pgm"))
        names = sorted(p.name for p in paths)
        assert names == sorted(f"r03_40_{k}.{e}" for k in ("gasf", "gadf", "rec") for e in ("txt", "pgm"))
        for kind, m in t.as_dict().items():
            np.testing.assert_array_equal(read_matrix_text(tmp_path / f"r03_40_{kind}.txt"), m)

    def test_pgm_layout(self, tmp_path):
        m = np.array([[-1.0, 1.0], [0.0, 1.0]])
        export_triple(encode(WindowBlock.from_raw([0, 1])), tmp_path, "r", 0, ("pgm",))
        data = (tmp_path / "r_0_gadf.pgm").read_bytes()
        assert data.startswith(b"P5\n2 2\n255\n") and len(data) == len(b"P5\n2 2\n255\n") + 4
        np.testing.assert_array_equal(to_gray(m, "gasf"), [[0, 255], [128, 255]])
