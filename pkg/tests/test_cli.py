"""CLI surface: subcommands, config overrides, exit codes."""

import json
from pathlib import Path

import pytest

from restoregraph.cli import main
from restoregraph.labeling import read_label_set, read_ledger
from restoregraph.rating_service import RatingService

CONFIG_TEXT = """
paths.roads = data/roads.txt
paths.rasters = data/rasters/manifest.txt
paths.feature_points = data/feature_points.txt
paths.labels = data/labels.txt
paths.names = data/names.txt
paths.out = out
model.epochs = 60
walk.epochs = 2
walk.walks_per_node = 4
walk.walk_length = 12
analysis.k_max = 6
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(["fixture", "--out", str(root / "data"),
               "--roads", "20", "--seed", "0"])
    assert rc == 0
    (root / "pipeline.cfg").write_text(CONFIG_TEXT)
    return root


def run(workspace, *argv):
    return main([argv[0], "--config", str(workspace / "pipeline.cfg"),
                 *argv[1:]])


class TestStageCommands:
    def test_stages_in_order(self, workspace, capsys):
        for command, artifact in (
            ("build-entity-graphs", "entity_graphs/index.txt"),
            ("embed-streets", "street_vectors.txt"),
            ("build-city-graph", "city_graph/features.bin"),
            ("train", "model.ckpt"),
        ):
            assert run(workspace, command) == 0
            assert (workspace / "out" / artifact).is_file()
        assert "done" in capsys.readouterr().out

    def test_rerun_reports_up_to_date(self, workspace, capsys):
        assert run(workspace, "train") == 0
        assert "up to date" in capsys.readouterr().out

    def test_set_override_changes_stage_identity(self, workspace, capsys):
        assert run(workspace, "train", "--set", "model.epochs=61") == 0
        out = capsys.readouterr().out
        assert "done" in out and "up to date" not in out

    def test_cluster_and_report(self, workspace):
        assert run(workspace, "train", "--force") == 0
        assert run(workspace, "cluster") == 0
        assert run(workspace, "report") == 0
        assert (workspace / "out" / "silhouette.txt").is_file()
        assert (workspace / "out" / "clusters.txt").is_file()
        assert (workspace / "out" / "structure_report.txt").is_file()

    def test_evaluate_prints_metrics(self, workspace, capsys):
        assert run(workspace, "evaluate") == 0
        out = capsys.readouterr().out
        assert "test_accuracy" in out and "confusion" in out

    def test_ablate_prints_five_experiments(self, workspace, capsys):
        assert run(workspace, "ablate") == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 6  # header + all/drop x3/only spatial
        assert lines[0].startswith("experiment")


class TestFixtureCommand:
    def test_generates_dataset(self, tmp_path, capsys):
        rc = main(["fixture", "--out", str(tmp_path / "d"),
                   "--roads", "12", "--seed", "3"])
        assert rc == 0
        assert (tmp_path / "d" / "roads.txt").is_file()
        assert (tmp_path / "d" / "fixture.json").is_file()

    def test_rejects_tiny_fixture(self, tmp_path, capsys):
        rc = main(["fixture", "--out", str(tmp_path / "d"), "--roads", "5"])
        assert rc == 2


class TestLabelCommand:
    def vote_out_a_ledger(self, workspace):
        # drive the service directly (no HTTP) to produce a real ledger
        from restoregraph.labeling import read_image_manifest
        manifest = read_image_manifest(workspace / "data" / "image_manifest.csv")
        ledger = workspace / "votes.ledger"
        service = RatingService(
            manifest, workspace / "data", ledger, seed=0)
        outcomes = ("left", "right", "both", "neither")
        for i in range(240):
            pair = service.issue_pair()
            service.submit_vote(pair["pair_id"], outcomes[i % 4])
        return ledger

    def test_ledger_to_labels(self, workspace):
        ledger = self.vote_out_a_ledger(workspace)
        assert len(read_ledger(ledger)) == 240
        out = workspace / "rated_labels.txt"
        rc = main(["label",
                   "--ledger", str(ledger),
                   "--manifest", str(workspace / "data" / "image_manifest.csv"),
                   "--roads", str(workspace / "data" / "roads.txt"),
                   "--out", str(out)])
        assert rc == 0
        labels = read_label_set(out)
        assert len(labels.classes) > 0
        assert set(labels.classes.values()) <= {"low", "medium", "high"}

    def test_empty_ledger_is_data_error(self, workspace, tmp_path):
        empty = tmp_path / "empty.ledger"
        empty.write_text("")
        rc = main(["label",
                   "--ledger", str(empty),
                   "--manifest", str(workspace / "data" / "image_manifest.csv"),
                   "--roads", str(workspace / "data" / "roads.txt"),
                   "--out", str(tmp_path / "x.txt")])
        assert rc == 2


class TestExitCodes:
    def test_unknown_command_is_usage(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_flag_is_usage(self, workspace, capsys):
        assert run(workspace, "train", "--bogus") == 1

    def test_missing_config_is_data_error(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 2
        assert "data error" in capsys.readouterr().err

    def test_unknown_config_key_is_data_error(self, workspace, capsys):
        assert run(workspace, "train", "--set", "nope.nope=1") == 2

    def test_missing_input_file_is_data_error(self, tmp_path, capsys):
        (tmp_path / "p.cfg").write_text("paths.roads = gone.txt\n")
        assert main(["train", "--config", str(tmp_path / "p.cfg")]) == 2
        assert "paths.roads" in capsys.readouterr().err

    def test_numeric_failures_map_to_three(self):
        from restoregraph.cli import _classify
        from restoregraph.pipeline import StageError
        assert _classify(ZeroDivisionError("boom")) == 3
        assert _classify(StageError("train", FloatingPointError("nan"))) == 3
        assert _classify(StageError("build", ValueError("bad file"))) == 2

    def test_malformed_override_is_data_error(self, workspace):
        assert run(workspace, "train", "--set", "model.epochs") == 2
