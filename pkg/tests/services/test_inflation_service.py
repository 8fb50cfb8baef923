import logging

import numpy as np
import pytest

from goalplace.core.exceptions import InputError
from goalplace.schemas.clustering import Clustering
from goalplace.schemas.density import CellDensityVector
from goalplace.schemas.inflation import InflationSource, InflationVector
from goalplace.schemas.netlist import CellKind, TargetVector
from goalplace.services import density_service, inflation_service
from goalplace.services.synthetic_service import random_design


class TestFactorsFromTargets:
    """Test target-driven inflation factors"""

    def test_reciprocal_with_floor_and_cap(self, three_cells):
        targets = TargetVector(names=three_cells.names, values=[0.5, 1.2, 0.01])

        infl = inflation_service.factors_from_targets(targets, three_cells, r_max=8)

        np.testing.assert_allclose(infl.factors, [2.0, 1.0, 8.0])
        assert infl.capped == 1
        assert infl.source == InflationSource.target

    def test_cap_is_logged(self, three_cells, caplog):
        targets = TargetVector(names=three_cells.names, values=[0.01, 0.5, 0.5])

        with caplog.at_level(logging.WARNING):
            inflation_service.factors_from_targets(targets, three_cells, r_max=4)

        assert "r_max=4" in caplog.text

    def test_macros_and_fixed_cells_are_not_inflated(self, netlist_factory):
        netlist = netlist_factory([("a", 1.0, 1.0), ("m", 2.0, 2.0, CellKind.macro), ("f", 1.0, 1.0, CellKind.std_cell, False)])
        targets = TargetVector(names=netlist.names, values=[0.5, 0.1, 0.1])

        infl = inflation_service.factors_from_targets(targets, netlist)

        np.testing.assert_allclose(infl.factors, [2.0, 1.0, 1.0])

    def test_non_positive_target_names_the_cell(self, three_cells):
        targets = TargetVector(names=three_cells.names, values=[0.5, 0.0, 0.5])

        with pytest.raises(InputError, match="cell b"):
            inflation_service.factors_from_targets(targets, three_cells)

    def test_default_cap_from_settings(self, three_cells):
        targets = TargetVector(names=three_cells.names, values=[1e-6, 0.5, 0.5])

        infl = inflation_service.factors_from_targets(targets, three_cells)

        assert infl.factors[0] == 8.0


class TestApplyInflation:
    def test_widths_and_pins_scale(self, netlist_factory):
        netlist = netlist_factory([("a", 1.0, 1.0, CellKind.std_cell, True, [(0.25, 0.5), (0.75, 0.5)])])
        infl = InflationVector(names=netlist.names, factors=[2.0])

        inflated = inflation_service.apply_inflation(netlist, infl)

        cell = inflated.cell("a")
        assert cell.width == 2.0
        assert cell.height == 1.0
        assert cell.pin_offsets == [(0.5, 0.5), (1.5, 0.5)]
        assert cell.is_inflated
        assert inflated.nominal_widths[0] == 1.0

    def test_reinflation_starts_from_nominal(self, three_cells):
        twice = inflation_service.apply_inflation(
            inflation_service.apply_inflation(three_cells, InflationVector(names=three_cells.names, factors=[2, 2, 2])),
            InflationVector(names=three_cells.names, factors=[3, 1, 1]),
        )

        np.testing.assert_allclose(twice.widths, [3.0, 1.0, 1.0])

    def test_no_inflation_restores_nominal(self, three_cells):
        inflated = inflation_service.apply_inflation(
            three_cells, InflationVector(names=three_cells.names, factors=[2, 4, 1])
        )
        identity = inflation_service.no_inflation(inflated)

        restored = inflation_service.apply_inflation(inflated, identity)

        assert identity.source == InflationSource.none
        assert restored.cells == three_cells.cells

    def test_round_trip_on_random_cells(self):
        netlist = random_design(n_cells=1000, seed=4).netlist
        factors = np.random.default_rng(0).uniform(1.0, 5.0, netlist.size)

        restored = inflation_service.deflate(
            inflation_service.apply_inflation(netlist, InflationVector(names=netlist.names, factors=factors))
        )

        assert restored.cells == netlist.cells

    def test_factor_below_one(self, three_cells):
        with pytest.raises(InputError, match=">= 1"):
            inflation_service.apply_inflation(three_cells, InflationVector(names=three_cells.names, factors=[1, 0.5, 1]))

    def test_mismatched_cells(self, three_cells):
        with pytest.raises(InputError, match="different cells"):
            inflation_service.apply_inflation(three_cells, InflationVector(names=["a", "b"], factors=[1, 1]))


class TestPinInflation:
    def test_sites_per_pin(self, netlist_factory):
        pins = [(0.1, 0.5), (0.2, 0.5), (0.3, 0.5), (0.4, 0.5)]
        netlist = netlist_factory([("a", 0.6, 1.0, CellKind.std_cell, True, pins)])

        infl = inflation_service.pin_inflation(netlist, alpha=1.0)

        # four pins need four sites, the cell has three
        assert infl.factors[0] == pytest.approx(0.8 / 0.6)
        assert infl.source == InflationSource.pin_uniform

    def test_zero_alpha_is_identity(self, three_cells):
        np.testing.assert_array_equal(inflation_service.pin_inflation(three_cells, 0.0).factors, 1.0)

    def test_negative_alpha(self, three_cells):
        with pytest.raises(InputError):
            inflation_service.pin_inflation(three_cells, -1.0)


class TestRangeError:
    """Test per-bin target range"""

    @pytest.fixture
    def layout(self, three_cells, placement_factory):
        placement = placement_factory({"a": (0.0, 0.0), "b": (1.0, 0.0), "c": (8.0, 8.0)})
        grid = density_service.build_grid(three_cells, placement, bin_scale=2)
        targets = TargetVector(names=three_cells.names, values=[0.2, 0.8, 0.9])
        return targets, grid, three_cells, placement

    def test_constructed_bins(self, layout):
        report = inflation_service.range_error(*layout)

        assert report.per_bin_range[0, 0] == pytest.approx(0.6)
        assert report.effective_density[0, 0] == pytest.approx(0.5)
        assert report.average_target[0, 0] == pytest.approx(0.5)
        # the lone cell's bin is not violating: average 0.9 above effective 0.25
        assert report.total_error == pytest.approx(0.6)
        assert report.violating_bins == 1
        assert np.isnan(report.average_target[2, 2])
        assert sum(report.histogram) == 1

    def test_csv(self, layout, tmp_path):
        report = inflation_service.range_error(*layout)
        path = tmp_path / "range.csv"

        inflation_service.write_range_csv(report, path)

        lines = path.read_text().splitlines()
        assert lines[0] == "ix,iy,range,average_target,effective_density,violating"
        assert len(lines) == 26
        assert lines[1].startswith("0,0,0.6") and lines[1].endswith(",1")

    def test_summary(self, layout):
        summary = inflation_service.range_error(*layout).summary()

        assert summary["violating_bins"] == 1
        assert len(summary["histogram_of_ranges"]["edges"]) == 21

    def test_met_averages_leave_no_error(self, three_cells, placement_factory):
        placement = placement_factory({"a": (0.0, 0.0), "b": (1.0, 0.0), "c": (8.0, 8.0)})
        grid = density_service.build_grid(three_cells, placement, bin_scale=2)
        # bin (0, 0) holds half its area, so an average target above 0.5 is met
        targets = TargetVector(names=three_cells.names, values=[0.55, 0.95, 0.9])

        report = inflation_service.range_error(targets, grid, three_cells, placement)

        assert report.per_bin_range[0, 0] == pytest.approx(0.4)
        assert report.total_error == 0.0
        assert report.violating_bins == 0

    def test_error_bounded_by_the_bin_ranges(self):
        design = random_design(n_cells=400, seed=6)
        netlist, placement = design.netlist, design.placement
        grid = density_service.build_grid(netlist, placement, bin_scale=3)
        rng = np.random.default_rng(6)
        targets = TargetVector(names=netlist.names, values=rng.uniform(0.05, 1.0, netlist.size))

        report = inflation_service.range_error(targets, grid, netlist, placement)

        ranges = report.per_bin_range
        assert np.all((ranges >= 0.0) & (ranges <= 0.95))
        assert 0.0 <= report.total_error <= ranges.sum() + 1e-12
        assert report.violating_bins <= int(np.count_nonzero(~np.isnan(report.average_target)))

    def test_tightening_toward_bin_means_never_widens(self):
        design = random_design(n_cells=400, seed=8)
        netlist, placement = design.netlist, design.placement
        grid = density_service.build_grid(netlist, placement, bin_scale=3)
        values = np.random.default_rng(8).uniform(0.05, 1.0, netlist.size)
        loose = inflation_service.range_error(
            TargetVector(names=netlist.names, values=values), grid, netlist, placement,
        )
        x0, y0 = placement.align(netlist.names)
        b = grid.bin_of(x0 + netlist.widths / 2, y0 + netlist.heights / 2)
        mean = loose.average_target.ravel()[b]

        tight = inflation_service.range_error(
            TargetVector(names=netlist.names, values=mean + 0.5 * (values - mean)), grid, netlist, placement,
        )

        assert np.all(tight.per_bin_range <= loose.per_bin_range + 1e-12)
        np.testing.assert_allclose(tight.per_bin_range, 0.5 * loose.per_bin_range, atol=1e-12)


class TestTargetCorrelation:
    def test_cell_level(self):
        targets = TargetVector(names=["a", "b", "c"], values=[0.2, 0.5, 0.8])
        achieved = CellDensityVector(names=["c", "b", "a"], values=[0.9, 0.6, 0.3])

        report = inflation_service.target_correlation(targets, achieved)

        assert report.cell_pearson == pytest.approx(1.0)
        assert report.cell_spearman == pytest.approx(1.0)
        assert report.undefined == []

    def test_constant_achieved_density_is_undefined(self):
        targets = TargetVector(names=["a", "b"], values=[0.2, 0.5])
        achieved = CellDensityVector(names=["a", "b"], values=[0.5, 0.5])

        report = inflation_service.target_correlation(targets, achieved)

        assert report.cell_pearson is None
        assert report.undefined == ["cell"]

    def test_cluster_level(self):
        targets = TargetVector(names=list("abcd"), values=[0.2, 0.3, 0.7, 0.8])
        achieved = CellDensityVector(names=list("abcd"), values=[0.3, 0.2, 0.8, 0.7])
        clusters = Clustering(assignment=[0, 0, 1, 1], n_clusters=2)

        report = inflation_service.target_correlation(targets, achieved, clusters)

        # two clusters always correlate perfectly
        assert report.cluster_pearson == pytest.approx(1.0)
        assert report.cell_pearson < 1.0

    def test_linear_relation_with_noise(self):
        rng = np.random.default_rng(0)
        t = rng.uniform(0.2, 0.9, 5000)
        noise = 0.1
        names = [f"c{i}" for i in range(t.size)]
        achieved = CellDensityVector(names=names, values=t + rng.normal(0.0, noise, t.size))

        report = inflation_service.target_correlation(TargetVector(names=names, values=t), achieved)

        expected = np.sqrt(t.var() / (t.var() + noise**2))
        assert report.cell_pearson == pytest.approx(expected, abs=0.02)
