import numpy as np
import pytest
from hypothesis import given, strategies as st

from dwipc import (
    ComplexVolume3,
    DimsMismatchError,
    DwiSeries,
    GradientTable,
    InvalidDataError,
    Mask,
    PhaseField,
    Quadrant,
    Volume3,
    opposite_diagonal,
    quadrant_of,
    wrap_angle,
)
from conftest import make_table

Q1, Q2, Q3, Q4 = Quadrant.Q1, Quadrant.Q2, Quadrant.Q3, Quadrant.Q4


class TestWrapAngle:
    def test_three_pi_wraps_to_pi(self):
        assert wrap_angle(3 * np.pi) == pytest.approx(np.pi, abs=1e-12)

    def test_negative_three_half_pi(self):
        assert wrap_angle(-1.5 * np.pi) == pytest.approx(0.5 * np.pi, abs=1e-12)

    def test_already_canonical_passes_through_exactly(self):
        assert wrap_angle(0.1) == 0.1

    def test_pi_maps_to_pi_and_minus_pi_to_pi(self):
        assert wrap_angle(np.pi) == np.pi
        assert wrap_angle(-np.pi) == np.pi

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            wrap_angle(np.nan)
        with pytest.raises(ValueError):
            wrap_angle(np.inf)

    def test_array_input(self):
        out = wrap_angle(np.array([3 * np.pi, 0.1, -np.pi]))
        assert out == pytest.approx([np.pi, 0.1, np.pi], abs=1e-12)

    @given(st.floats(min_value=-60.0, max_value=60.0, allow_nan=False))
    def test_idempotent_exactly(self, theta):
        once = wrap_angle(theta)
        assert wrap_angle(once) == once

    @given(st.floats(min_value=-60.0, max_value=60.0, allow_nan=False))
    def test_congruent_mod_two_pi(self, theta):
        out = wrap_angle(theta)
        assert -np.pi < out <= np.pi
        k = round((theta - out) / (2 * np.pi))
        assert abs(theta - out - 2 * np.pi * k) < 1e-12


class TestQuadrant:
    def test_sign_examples(self):
        assert quadrant_of(1, 1) is Q1
        assert quadrant_of(-1, 0.5) is Q2
        assert quadrant_of(0, 0) is Q1  # zero counts as nonnegative

    def test_axes_are_deterministic(self):
        assert quadrant_of(1, 0) is Q1
        assert quadrant_of(0, 1) is Q1
        assert quadrant_of(-1, 0) is Q2
        assert quadrant_of(0, -1) is Q4

    def test_unit_circle_representatives(self):
        expected = {np.pi / 4: Q1, 3 * np.pi / 4: Q2, -3 * np.pi / 4: Q3, -np.pi / 4: Q4}
        for theta, quadrant in expected.items():
            assert quadrant_of(np.cos(theta), np.sin(theta)) is quadrant

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            quadrant_of(np.nan, 0.0)


class TestOppositeDiagonal:
    def test_examples(self):
        assert opposite_diagonal(Q1, Q3)
        assert not opposite_diagonal(Q1, Q1)
        assert not opposite_diagonal(Q2, Q3)

    def test_symmetric_and_irreflexive(self):
        quadrants = list(Quadrant)
        for a in quadrants:
            assert not opposite_diagonal(a, a)
            for b in quadrants:
                assert opposite_diagonal(a, b) == opposite_diagonal(b, a)

    def test_only_two_diagonal_pairs(self):
        pairs = {
            frozenset((a, b))
            for a in Quadrant
            for b in Quadrant
            if opposite_diagonal(a, b)
        }
        assert pairs == {frozenset((Q1, Q3)), frozenset((Q2, Q4))}


class TestContainers:
    def test_volume_rejects_nan(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(InvalidDataError):
            Volume3(data)

    def test_volume_rejects_wrong_rank(self):
        with pytest.raises(InvalidDataError):
            Volume3(np.zeros((2, 2)))

    def test_volume_is_immutable(self):
        vol = Volume3(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            vol.data[0, 0, 0] = 1.0

    def test_volume_copies_input(self):
        src = np.zeros((2, 2, 2))
        vol = Volume3(src)
        src[0, 0, 0] = 5.0
        assert vol.data[0, 0, 0] == 0.0

    def test_complex_volume_requires_matching_dims(self):
        with pytest.raises(DimsMismatchError):
            ComplexVolume3(Volume3(np.zeros((2, 2, 2))), Volume3(np.zeros((2, 2, 3))))

    def test_phase_field_range(self):
        with pytest.raises(InvalidDataError):
            PhaseField(Volume3(np.full((1, 1, 1), -np.pi)))
        PhaseField(Volume3(np.full((1, 1, 1), np.pi)))  # upper bound included

    def test_gradient_table_invariants(self):
        with pytest.raises(InvalidDataError):
            GradientTable(np.array([-1.0]), np.array([[1.0, 0, 0]]))
        with pytest.raises(InvalidDataError):
            GradientTable(np.array([1000.0]), np.array([[2.0, 0, 0]]))
        table = GradientTable(np.array([0.0, 1000.0]), np.array([[0, 0, 0], [0, 1.0, 0]]))
        assert table.n_b0 == 1
        assert table.entries[1] == (1000.0, (0.0, 1.0, 0.0))

    def test_series_count_must_match_table(self):
        vols = (Volume3(np.zeros((2, 2, 2))),)
        with pytest.raises(DimsMismatchError):
            DwiSeries(vols, make_table(2))

    def test_series_rejects_mixed_kinds(self):
        mag = Volume3(np.zeros((2, 2, 2)))
        cplx = ComplexVolume3(mag, mag)
        with pytest.raises(InvalidDataError):
            DwiSeries((mag, cplx), make_table(2))

    def test_series_volumes_share_dims(self):
        with pytest.raises(DimsMismatchError):
            DwiSeries(
                (Volume3(np.zeros((2, 2, 2))), Volume3(np.zeros((2, 2, 3)))),
                make_table(2),
            )

    def test_mask_count(self):
        mask = Mask(np.array([[[True, False], [True, True]]]))
        assert mask.count() == 3
