import numpy as np
import pytest

from goalplace.core.exceptions import InputError, MatchError, ParseError
from goalplace.schemas.netlist import CellKind, Netlist, NetlistFormat, TargetVector
from goalplace.services import inflation_service, netlist_service, synthetic_service

HEADER = {"floorplan": [0, 0, 10, 10], "site_w": 0.2, "row_h": 1.0}


def reordered(netlist: Netlist, order) -> Netlist:
    """Same cells in another order, without nets."""
    cells = [netlist.cells[i].model_copy(update={"id": k}) for k, i in enumerate(order)]
    return Netlist(
        cells=cells, floorplan=netlist.floorplan, site_width=netlist.site_width, row_height=netlist.row_height,
    )


class TestParseJsonl:
    """Test JSON-lines netlist parsing"""

    def test_parse_cells_and_nets(self, write_jsonl):
        path = write_jsonl("net.jsonl", [
            HEADER,
            {"cell": "a", "w": 1.0, "h": 1.0, "pins": [[0.5, 0.5]]},
            {"cell": "m", "w": 3.0, "h": 3.0, "kind": "macro", "pins": [[0, 0], [3, 3]]},
            {"net": "n0", "pins": [["a", 0], ["m", 1]]},
        ])

        netlist = netlist_service.parse_netlist(path)

        assert netlist.names == ["a", "m"]
        assert netlist.cell("m").kind == CellKind.macro
        assert netlist.cell("m").movable is False
        assert netlist.cell("a").movable is True
        assert netlist.nets[0].pins == [(0, 0), (1, 1)]
        assert netlist.floorplan.area == 100.0

    def test_zero_sized_cell_takes_one_site(self, write_jsonl):
        path = write_jsonl("net.jsonl", [HEADER, {"cell": "z", "w": 0, "h": 0}])

        cell = netlist_service.parse_netlist(path).cell("z")

        assert cell.zero_sized
        assert (cell.width, cell.height) == (0.2, 1.0)

    def test_dangling_pin(self, write_jsonl):
        path = write_jsonl("net.jsonl", [
            HEADER,
            {"cell": "a", "w": 1.0, "h": 1.0, "pins": [[0.5, 0.5]]},
            {"net": "n0", "pins": [["a", 0], ["ghost", 0]]},
        ])

        with pytest.raises(ParseError, match="dangling pin") as exc_info:
            netlist_service.parse_netlist(path)

        assert exc_info.value.line == 3

    def test_pin_index_out_of_range(self, write_jsonl):
        path = write_jsonl("net.jsonl", [
            HEADER,
            {"cell": "a", "w": 1.0, "h": 1.0, "pins": [[0.5, 0.5]]},
            {"net": "n0", "pins": [["a", 3]]},
        ])

        with pytest.raises(ParseError, match="no pin 3"):
            netlist_service.parse_netlist(path)

    def test_duplicate_cell(self, write_jsonl):
        path = write_jsonl("net.jsonl", [
            HEADER, {"cell": "a", "w": 1, "h": 1}, {"cell": "a", "w": 1, "h": 1},
        ])

        with pytest.raises(ParseError, match="duplicate cell name a"):
            netlist_service.parse_netlist(path)

    def test_missing_header(self, write_jsonl):
        path = write_jsonl("net.jsonl", [{"cell": "a", "w": 1, "h": 1}])

        with pytest.raises(ParseError, match="missing floorplan header"):
            netlist_service.parse_netlist(path)

    def test_non_positive_floorplan(self, write_jsonl):
        path = write_jsonl("net.jsonl", [{"floorplan": [0, 0, 0, 10], "site_w": 0.2, "row_h": 1.0}])

        with pytest.raises(ParseError, match="positive"):
            netlist_service.parse_netlist(path)

    def test_parse_errors_are_input_errors(self, write_jsonl):
        path = write_jsonl("net.jsonl", [{"bogus": 1}])

        with pytest.raises(InputError):
            netlist_service.parse_netlist(path)


class TestParseBookshelfLike:
    def test_parse(self, tmp_path):
        path = tmp_path / "design.txt"
        path.write_text(
            "# bookshelf-flavoured\n"
            "Floorplan : 0 0 20 20\n"
            "Site : 0.2 1.0\n"
            "NumNodes : 3\n"
            "a 1 1\n"
            "b 2 1\n"
            "m 4 4 terminal macro\n"
            "NumNets : 1\n"
            "NetDegree : 3 n0\n"
            "a I : 0 0\n"
            "b O : 0.5 0\n"
            "m I : -2 -2\n"
        )

        netlist = netlist_service.parse_netlist(path, NetlistFormat.bookshelf_like)

        assert netlist.names == ["a", "b", "m"]
        assert netlist.cell("m").kind == CellKind.macro
        assert not netlist.cell("m").movable
        # centre-relative offsets become origin-relative
        assert netlist.cell("b").pin_offsets == [(1.5, 0.5)]
        assert netlist.cell("m").pin_offsets == [(0.0, 0.0)]
        assert netlist.nets[0].cardinality == 3

    def test_degree_mismatch(self, tmp_path):
        path = tmp_path / "design.txt"
        path.write_text(
            "Floorplan : 0 0 20 20\nSite : 0.2 1.0\nNumNodes : 1\na 1 1\n"
            "NumNets : 1\nNetDegree : 2 n0\na I : 0 0\n"
        )

        with pytest.raises(ParseError, match="declares 2 pins"):
            netlist_service.parse_netlist(path, NetlistFormat.bookshelf_like)


class TestSerializeNetlist:
    def test_round_trip(self, tmp_path, three_cells):
        path = tmp_path / "out.jsonl"

        netlist_service.serialize_netlist(three_cells, path)
        again = netlist_service.parse_netlist(path)

        assert again.names == three_cells.names
        assert [n.pins for n in again.nets] == [n.pins for n in three_cells.nets]
        np.testing.assert_allclose(again.widths, three_cells.widths)

    def test_round_trip_keeps_inflated_state(self, tmp_path, three_cells):
        # Arrange
        factors = inflation_service.factors_from_targets(
            TargetVector(names=three_cells.names, values=[0.5, 1.0, 0.25]), three_cells,
        )
        inflated = inflation_service.apply_inflation(three_cells, factors)
        path = tmp_path / "inflated.jsonl"

        # Act
        netlist_service.serialize_netlist(inflated, path)
        again = netlist_service.parse_netlist(path)

        # Assert
        np.testing.assert_allclose(again.widths, inflated.widths)
        np.testing.assert_allclose(again.nominal_widths, three_cells.widths)
        restored = inflation_service.deflate(again)
        assert [c.pin_offsets for c in restored.cells] == [c.pin_offsets for c in three_cells.cells]

    def test_round_trip_of_a_thousand_cells(self, tmp_path):
        design = synthetic_service.random_design(n_cells=1000, seed=7)
        path = tmp_path / "big.jsonl"

        netlist_service.serialize_netlist(design.netlist, path)
        again = netlist_service.parse_netlist(path)

        assert again.size == 1000
        assert again.names == design.netlist.names
        assert again.floorplan == design.netlist.floorplan
        assert [c.kind for c in again.cells] == [c.kind for c in design.netlist.cells]
        assert [n.pins for n in again.nets] == [n.pins for n in design.netlist.nets]
        np.testing.assert_allclose(again.widths, design.netlist.widths)
        np.testing.assert_allclose(again.heights, design.netlist.heights)


class TestPlacementFiles:
    def test_round_trip(self, tmp_path, placement_factory):
        placement = placement_factory({"a": (1.0, 2.0), "b": (3.5, 0.0)})
        path = tmp_path / "p.jsonl"

        netlist_service.write_placement(placement, path)
        again = netlist_service.read_placement(path)

        assert again.names == ["a", "b"]
        np.testing.assert_array_equal(again.x, [1.0, 3.5])
        assert again.frame_id == "p"

    def test_duplicate_cell(self, write_jsonl):
        path = write_jsonl("p.jsonl", [{"cell": "a", "x": 0, "y": 0}, {"cell": "a", "x": 1, "y": 1}])

        with pytest.raises(ParseError, match="duplicate"):
            netlist_service.read_placement(path)

    def test_slacks(self, tmp_path, three_cells):
        path = tmp_path / "slacks.jsonl"
        netlist_service.write_slacks({"a": -0.1, "c": 0.2}, path)

        slacks = netlist_service.read_slacks(path)
        values = netlist_service.slack_array(three_cells, slacks)

        assert values[0] == -0.1
        assert np.isnan(values[1])


class TestTargets:
    def test_load_orders_by_netlist(self, write_jsonl, three_cells):
        path = write_jsonl("t.jsonl", [
            {"cell": "c", "target": 0.3, "provenance": "js"},
            {"cell": "a", "target": 0.1, "provenance": "js"},
            {"cell": "b", "target": 0.2, "provenance": "js"},
        ])

        targets = netlist_service.load_targets(path, three_cells)

        assert targets.names == ["a", "b", "c"]
        np.testing.assert_allclose(targets.values, [0.1, 0.2, 0.3])
        assert targets.provenance == "js"

    def test_missing_cell(self, write_jsonl, three_cells):
        path = write_jsonl("t.jsonl", [{"cell": "a", "target": 0.1}])

        with pytest.raises(InputError, match="no target for 2"):
            netlist_service.load_targets(path, three_cells)

    def test_mixed_provenance(self, write_jsonl):
        path = write_jsonl("t.jsonl", [
            {"cell": "a", "target": 0.1, "provenance": "js"},
            {"cell": "b", "target": 0.1, "provenance": "tool"},
        ])

        with pytest.raises(ParseError, match="mixed provenance"):
            netlist_service.load_targets(path)

    def test_hundred_thousand_entries(self, tmp_path):
        rng = np.random.default_rng(0)
        names = [f"u{i}" for i in range(100_000)]
        values = rng.uniform(0.1, 1.0, len(names))
        path = tmp_path / "big_targets.jsonl"
        netlist_service.serialize_targets(TargetVector(names=names, values=values, provenance="js"), path)

        targets = netlist_service.load_targets(path)

        assert targets.names == names
        np.testing.assert_array_equal(targets.values, values)
        assert targets.provenance == "js"


class TestMatchNetlists:
    """Test post-route matching"""

    def test_buffers_dropped_and_new_cells_zeroed(self, netlist_factory, placement_factory):
        place = netlist_factory([("a", 1.0, 1.0), ("b", 1.0, 1.0), ("gone", 1.0, 1.0)])
        postroute = netlist_factory([
            ("a", 1.0, 1.0), ("b", 1.0, 1.0),
            ("buf0", 0.4, 1.0, CellKind.buffer), ("new", 0.6, 1.0),
        ])
        positions = placement_factory({"a": (0, 0), "b": (2, 0), "buf0": (4, 0), "new": (6, 0)})
        sizes = {"a": (2.0, 1.0), "b": (1.0, 1.0)}

        matched = netlist_service.match_netlists(place, postroute, positions, sizes)

        assert matched.netlist.names == ["a", "b", "new"]
        assert matched.netlist.cell("a").width == 2.0
        new = matched.netlist.cell("new")
        assert new.zero_sized and new.width == place.site_width
        assert matched.report.removed_buffers == 1
        assert matched.report.zeroed == ["new"]
        assert matched.report.place_only == ["gone"]
        np.testing.assert_array_equal(matched.placement.x, [0, 2, 6])

    def test_missing_size(self, netlist_factory, placement_factory):
        place = netlist_factory([("a", 1.0, 1.0)])
        positions = placement_factory({"a": (0, 0)})

        with pytest.raises(MatchError, match="post-synthesis size"):
            netlist_service.match_netlists(place, place, positions, {})

    def test_nothing_matched(self, netlist_factory, placement_factory):
        place = netlist_factory([("a", 1.0, 1.0)])
        postroute = netlist_factory([("z", 1.0, 1.0)])

        with pytest.raises(MatchError, match="no matched cells"):
            netlist_service.match_netlists(place, postroute, placement_factory({"z": (0, 0)}), {})

    def test_cell_order_does_not_matter(self, random_design):
        variant = synthetic_service.postroute_variant(random_design.netlist, random_design.placement, seed=2)
        rng = np.random.default_rng(11)
        place = reordered(random_design.netlist, rng.permutation(random_design.netlist.size))
        postroute = reordered(variant.netlist, rng.permutation(variant.netlist.size))

        straight = netlist_service.match_netlists(
            random_design.netlist, variant.netlist, variant.placement, variant.sizes,
        )
        shuffled = netlist_service.match_netlists(place, postroute, variant.placement, variant.sizes)

        def by_name(geometry):
            x, y = geometry.placement.align(geometry.netlist.names)
            return {
                c.name: (c.width, c.height, c.zero_sized, float(x[c.id]), float(y[c.id]))
                for c in geometry.netlist.cells
            }

        assert by_name(shuffled) == by_name(straight)
        assert shuffled.report == straight.report
