"""End-to-end run of the command line on a generated design."""

import csv
import json

import pytest

from goalplace.cli.main import dispatch


class TestIntegration:
    """Integration tests for the full target-adaptation loop."""

    @pytest.mark.slow
    @pytest.mark.integration
    def test_synth_targets_run(self, tmp_path):
        """Generate a design, measure tool targets and run both batches."""
        design, targets, run = tmp_path / "design", tmp_path / "targets", tmp_path / "run"
        config = tmp_path / "goalplace.yaml"
        config.write_text("shift_limit: 0.0\nbin_scale: 4\n")

        # Step 1: generate
        assert dispatch(["synth", "--kind", "two-region", "--cells", "300", "--seed", "2", "--out", str(design)]) == 0

        # Step 2: tool targets
        common = [
            "--postroute", str(design / "postroute.jsonl"),
            "--postroute-place", str(design / "postroute_placement.jsonl"),
            "--sizes", str(design / "sizes.jsonl"),
        ]
        code = dispatch(["--config", str(config), "targets", "--place", str(design / "netlist.jsonl"),
                         *common, "--out", str(targets)])
        assert code == 0
        with open(targets / "targets.jsonl") as handle:
            assert sum(1 for _ in handle) == 300

        # Step 3: prior runs, shrinkage and final runs
        code = dispatch([
            "--config", str(config), "run", "--place", str(design / "netlist.jsonl"), *common,
            "--slacks", str(design / "slacks.jsonl"), "--out", str(run),
            "--n1", "2", "--n2", "1", "--iterations", "20", "--seed", "4",
        ])
        assert code == 0

        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["command"] == "run"
        assert manifest["parameters"]["config"]["bin_scale"] == 4.0
        with open(run / "comparison.csv") as handle:
            rows = list(csv.DictReader(handle))
        assert [row["mode"] for row in rows] == ["uniform", "tool", "js", "jsd"]
        assert all(float(row["mean_hpwl"]) > 0 for row in rows)
        for mode in ("tool", "js", "jsd"):
            assert (run / "targets" / f"{mode}.jsonl").exists()
        assert json.loads((run / "shrinkage" / "jsd.json").read_text())["mode"] == "jsd"
        assert len(list((run / "placements").glob("*.jsonl"))) >= 4
