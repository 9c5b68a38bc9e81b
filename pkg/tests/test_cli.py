import contextlib
import io
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from experiments import reporting, runner
from experiments.cli import COMMANDS, build_parser, main
from experiments.config_loader import parse_config_text

TINY_CONFIG = """
task=season
source_domains=trail1_summer_morning
target_domains=trail1_winter_morning
seeds=0
samples_per_source=12
target_unlabeled=6
target_val=3
target_test=3
image_size=16
world_length_m=20
triplets_per_world=4
train_iterations=4
adapt_iterations=4
batch_size=4
val_interval=2
log_interval=2
lambda_grid=0,1
fly_episodes=1
fly_max_steps=3
fly_world_length_m=10
"""


class TestCommandLine(unittest.TestCase):
    def test_every_command_parses(self):
        parser = build_parser()
        for command in COMMANDS:
            with self.subTest(command=command):
                args = parser.parse_args([command, "--out", "x", "--seed", "2"])
                self.assertEqual((args.command, args.out, args.seed), (command, "x", 2))
        self.assertTrue(parser.parse_args(["fly", "--oracle"]).oracle)

    @patch("experiments.cli.runner.cmd_fly")
    def test_fly_dispatch_passes_seed_and_flags(self, cmd_fly):
        # When
        with tempfile.TemporaryDirectory() as tmpdir:
            code = main(["fly", "--out", tmpdir, "--seed", "3", "--oracle", "--checkpoint", "a.ftnn"])

        # Then
        self.assertEqual(code, 0)
        cfg, out = cmd_fly.call_args.args
        self.assertEqual(cfg.seeds, [3])
        self.assertEqual(out, tmpdir)
        self.assertEqual(cmd_fly.call_args.kwargs, {"checkpoint": "a.ftnn", "oracle": True})

    def test_invalid_config_exits_with_one(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "bad.cfg")
            with open(path, "w", encoding="utf-8") as f:
                f.write("task=season\nbogus_key=1\n")
            stderr = io.StringIO()
            with contextlib.redirect_stderr(stderr):
                code = main(["gen", "--config", path, "--out", tmpdir])
        self.assertEqual(code, 1)
        self.assertTrue(stderr.getvalue().startswith("error: "))
        self.assertIn("bogus_key", stderr.getvalue())

    def test_missing_baseline_is_reported(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "run.cfg")
            with open(path, "w", encoding="utf-8") as f:
                f.write(TINY_CONFIG)
            stderr = io.StringIO()
            with contextlib.redirect_stderr(stderr):
                code = main(["adapt", "--config", path, "--out", tmpdir])
        self.assertEqual(code, 1)
        self.assertIn("gen", stderr.getvalue())


class TestRunner(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        logging.disable(logging.INFO)
        cls.tmpdir = tempfile.TemporaryDirectory()
        cls.out = Path(cls.tmpdir.name)
        cls.cfg = parse_config_text(TINY_CONFIG)
        runner.cmd_gen(cls.cfg, cls.out)

    @classmethod
    def tearDownClass(cls):
        cls.tmpdir.cleanup()
        logging.disable(logging.NOTSET)

    def test_gen_writes_datasets_and_manifest(self):
        data = self.out / runner.DATA_DIR
        self.assertTrue((data / "trail1_summer_morning.ftds").exists())
        self.assertTrue((data / "trail1_winter_morning.ftds").exists())
        self.assertTrue((data / "manifest.yaml").exists())
        self.assertTrue((self.out / "resolved.cfg").exists())

    def test_task_data_splits(self):
        data = runner.load_task_data(self.cfg, self.out)
        self.assertEqual(len(data.sources), 1)
        self.assertEqual(len(data.sources[0]), 24)
        self.assertEqual(
            (len(data.target_unlabeled), len(data.target_val), len(data.target_test)), (6, 3, 3)
        )

    def test_overlapping_source_and_target_rejected(self):
        cfg = self.cfg.model_copy(update={"target_domains": ["trail1_summer_morning"]})
        with self.assertRaises(ValueError):
            runner.resolve_domains(cfg)

    def test_train_adapt_eval_sweep_and_fly(self):
        # When
        accuracies = runner.cmd_train(self.cfg, self.out)
        metrics = runner.cmd_adapt(self.cfg, self.out)
        evaluated = runner.cmd_eval(self.cfg, self.out)
        sweep = runner.cmd_sweep_lambda(self.cfg, self.out)
        flights = runner.cmd_fly(self.cfg, self.out, oracle=True)

        # Then
        self.assertEqual(list(accuracies), [0])
        self.assertEqual(len(metrics), 1)
        self.assertEqual(metrics[0].baseline_accuracy, accuracies[0])
        self.assertEqual(metrics[0].source_set, "pooled")
        self.assertEqual(metrics[0].target, "trail1_winter_morning")
        for name in ("baseline_seed0.ftnn", "baseline_seed0.cfg", "adapted_seed0_log.csv", "metrics.csv"):
            self.assertTrue((self.out / name).exists(), name)

        self.assertEqual([row["checkpoint"] for row in evaluated], ["baseline_seed0", "adapted_seed0"])
        self.assertEqual(sum(evaluated[0][f"true{t}_pred{p}"] for t in range(3) for p in range(3)), 3)

        self.assertEqual([row["lambda"] for row in sweep], [0.0, 1.0])
        self.assertEqual(sweep[0]["mean_accuracy"], accuracies[0])
        self.assertEqual(len(reporting.read_rows(self.out / "sweep_runs.csv")), 2)

        self.assertEqual([row.label for row in flights], ["baseline_seed0", "adapted_seed0", "oracle"])
        self.assertTrue((self.out / "episodes" / "oracle_ep000.csv").exists())
        summary = reporting.read_rows(self.out / "fly_summary.csv")
        self.assertEqual(list(summary[0]), reporting.FLIGHT_COLUMNS)

        # episode distances of the adapted checkpoint land in metrics.csv
        filled = reporting.read_metrics(self.out / "metrics.csv")
        self.assertEqual(filled[0].mean_distance, flights[1].mean_distance)
        self.assertEqual(filled[0].median_distance, flights[1].median_distance)
        self.assertEqual(filled[0].adapted_accuracy, metrics[0].adapted_accuracy)


class TestRerunIsByteIdentical(unittest.TestCase):
    def test_same_config_same_bytes(self):
        # Given
        logging.disable(logging.INFO)
        self.addCleanup(logging.disable, logging.NOTSET)
        with tempfile.TemporaryDirectory() as tmpdir:
            config = os.path.join(tmpdir, "run.cfg")
            with open(config, "w", encoding="utf-8") as f:
                f.write(TINY_CONFIG)
            runs = [Path(tmpdir) / "first", Path(tmpdir) / "second"]

            # When
            for out in runs:
                for command in ("gen", "train", "adapt"):
                    self.assertEqual(main([command, "--config", config, "--out", str(out)]), 0, command)

            # Then
            files = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file())
            self.assertEqual(files, sorted(p.relative_to(runs[1]) for p in runs[1].rglob("*") if p.is_file()))
            for name in ("metrics.csv", "baseline_seed0.ftnn", "adapted_seed0.ftnn", "adapted_seed0_log.csv"):
                self.assertIn(Path(name), files)
            for name in files:
                with self.subTest(file=str(name)):
                    self.assertEqual((runs[0] / name).read_bytes(), (runs[1] / name).read_bytes())


class TestMultiSourceAndAblation(unittest.TestCase):
    def setUp(self):
        logging.disable(logging.INFO)
        self.addCleanup(logging.disable, logging.NOTSET)
        tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(tmpdir.cleanup)
        self.out = Path(tmpdir.name)

    def test_one_mmd_term_and_head_per_source(self):
        # Given: one source group per season
        cfg = parse_config_text(
            TINY_CONFIG.replace("source_domains=trail1_summer_morning\n", "")
            .replace("task=season", "task=multi_season")
            + "multi_source=true\nper_source_heads=true\n"
        )
        runner.cmd_gen(cfg, self.out)

        # When
        runner.cmd_train(cfg, self.out)
        metrics = runner.cmd_adapt(cfg, self.out)

        # Then
        self.assertEqual(metrics[0].source_set, "spring+summer+autumn")
        log = reporting.read_rows(self.out / "adapted_seed0_log.csv")
        self.assertEqual(
            [c for c in log[0] if c.startswith("mmd_")],
            ["mmd_src0_fc_feat", "mmd_src1_fc_feat", "mmd_src2_fc_feat"],
        )
        self.assertEqual(log[0]["iteration"], "0")
        self.assertEqual(runner.read_checkpoint(self.out / "adapted_seed0.ftnn").num_heads, 3)

    def test_ablation_reports_every_source_subset(self):
        # Given
        cfg = parse_config_text(
            TINY_CONFIG.replace("source_domains=trail1_summer_morning\n", "")
            .replace("target_domains=trail1_winter_morning\n", "")
            .replace("task=season", "task=sim_to_proxy")
        )
        runner.cmd_gen(cfg, self.out)

        # When
        rows = runner.cmd_ablate_sources(cfg, self.out)

        # Then
        self.assertEqual(
            [row["source_set"] for row in rows], ["all", "trail1_without_winter", "all_morning", "trail1_summer"]
        )
        written = reporting.read_rows(self.out / "ablation.csv")
        self.assertEqual(len(written), 4)
        for row in rows:
            self.assertTrue(0.0 <= row["adapted_accuracy"] <= 1.0)

    def test_ablation_needs_subsets(self):
        with self.assertRaises(ValueError):
            runner.cmd_ablate_sources(parse_config_text(TINY_CONFIG), self.out)


if __name__ == "__main__":
    unittest.main()
