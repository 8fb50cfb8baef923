"""Tests for empirical-Bayes and density schemas."""

import numpy as np
import pytest

from goalplace.schemas.density import DensityGrid
from goalplace.schemas.ebayes import PriorEnsemble, ShrinkageMode, ShrinkageResult


def result(**overrides):
    values = dict(
        names=["a", "b"], mode=ShrinkageMode.js, estimates=[0.4, 0.6], raw_estimates=[0.4, 0.6],
        shrink_factor=0.5, sigma0=0.1, S=0.2, N=2,
    )
    values.update(overrides)
    return ShrinkageResult(**values)


class TestShrinkageResult:
    """Test cases for ShrinkageResult."""

    def test_to_targets_carries_the_mode(self):
        targets = result().to_targets()

        assert targets.provenance == "js"
        assert targets.names == ["a", "b"]
        np.testing.assert_allclose(targets.values, [0.4, 0.6])

    def test_scalar_sidecar(self):
        sidecar = result(clamped_count=1).sidecar()

        assert sidecar == {"mode": "js", "sigma0": 0.1, "S": 0.2, "N": 2, "clamped_count": 1, "B_hat": 0.5}

    def test_per_cell_sidecar_summarises(self):
        sidecar = result(
            mode=ShrinkageMode.js_hetero, shrink_factor=np.array([0.2, 0.6]), fixed_point=np.array([0.01, 0.03]),
        ).sidecar()

        assert sidecar["B_hat"] == pytest.approx({"mean": 0.4, "min": 0.2, "max": 0.6})
        assert sidecar["A_hat"] == pytest.approx({"mean": 0.02, "min": 0.01, "max": 0.03})

    def test_negative_residual_sum_is_rejected(self):
        with pytest.raises(ValueError):
            result(S=-1.0)


class TestPriorEnsemble:
    def test_k_is_the_run_count(self):
        prior = PriorEnsemble(names=["a", "b"], samples=np.ones((2, 5)), mean=[1.0, 1.0], std=[0.0, 0.0])

        assert prior.k == 5


class TestDensityGrid:
    """Test cases for DensityGrid."""

    @pytest.fixture
    def grid(self):
        return DensityGrid(
            origin_x=0.0, origin_y=0.0, width=5.0, height=4.0, bin_w=2.0, bin_h=2.0, nx=3, ny=2,
            occupied=np.array([[2.0, 1.0, 0.5], [0.0, 4.0, 1.0]]),
            bin_area=np.array([[4.0, 4.0, 2.0], [4.0, 4.0, 2.0]]),
            fixed=np.zeros((2, 3)),
        )

    def test_rho(self, grid):
        np.testing.assert_allclose(grid.rho, [[0.5, 0.25, 0.25], [0.0, 1.0, 0.5]])

    def test_edges_stop_at_the_floorplan(self, grid):
        np.testing.assert_allclose(grid.x_edges, [0.0, 2.0, 4.0, 5.0])
        np.testing.assert_allclose(grid.y_edges, [0.0, 2.0, 4.0])

    def test_bin_of_clips_to_the_grid(self, grid):
        bins = grid.bin_of(np.array([0.5, 4.5, 5.0, -1.0]), np.array([0.5, 3.9, 4.0, 0.0]))

        np.testing.assert_array_equal(bins, [0, 5, 5, 0])
