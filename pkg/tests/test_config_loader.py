import os
import tempfile
import unittest

from experiments.config_loader import (
    RESOLVED_CONFIG_FILE,
    ConfigError,
    dump_experiment_config,
    get_domain,
    get_domains_by_season,
    get_task,
    load_experiment_config,
    load_tasks_config,
    parse_config_text,
    write_resolved_config,
)
from models.models import Estimator, ExperimentConfig, Season


class TestParseConfigText(unittest.TestCase):
    def test_values_comments_and_lists(self):
        # Given
        text = "# tiny run\ntask = terrain\nseeds=3, 4\nlambda=0.5  # weight\nper_source_heads=true\n\nestimator=biased\n"

        # When
        cfg = parse_config_text(text)

        # Then
        self.assertEqual(cfg.task, "terrain")
        self.assertEqual(cfg.seeds, [3, 4])
        self.assertEqual(cfg.lambda_, 0.5)
        self.assertTrue(cfg.per_source_heads)
        self.assertEqual(cfg.estimator, Estimator.BIASED)
        self.assertEqual(cfg.image_size, 32)

    def test_unknown_key_is_named(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("task=season\nlearning_rat=0.1\n")
        self.assertIn("unknown key 'learning_rat'", str(ctx.exception))

    def test_line_without_equals_sign(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("task=season\nseeds 1\n")
        self.assertIn("line 2", str(ctx.exception))

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text("seeds=1\n\nseeds=2\n")
        self.assertIn("line 3", str(ctx.exception))

    def test_invalid_lambda_grids(self):
        for grid in ("0,1,1", "1,10", "0,-1", ""):
            with self.subTest(grid=grid), self.assertRaises(ConfigError):
                parse_config_text(f"lambda_grid={grid}\n")

    def test_out_of_range_value(self):
        with self.assertRaises(ConfigError):
            parse_config_text("adapt_momentum=1.0\n")

    def test_config_error_is_a_value_error(self):
        self.assertTrue(issubclass(ConfigError, ValueError))


class TestDumpExperimentConfig(unittest.TestCase):
    def test_dump_then_parse_gives_the_same_config(self):
        for cfg in (
            ExperimentConfig(),
            parse_config_text(
                "task=multi_season\nmulti_source=true\nsource_domains=trail1_spring_morning,trail1_summer_morning\n"
                "lambda_grid=0,0.25,3\nadapted_layers=fc_feat,fc_out\nworld_length_m=12.5\n"
            ),
        ):
            with self.subTest(task=cfg.task):
                self.assertEqual(parse_config_text(dump_experiment_config(cfg)), cfg)

    def test_resolved_file_lists_every_key(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_resolved_config(ExperimentConfig(), os.path.join(tmpdir, "run"))
            self.assertEqual(path.name, RESOLVED_CONFIG_FILE)
            text = path.read_text(encoding="utf-8")
            reloaded = load_experiment_config(path)
        self.assertIn("lambda=1.0\n", text)
        self.assertIn("lambda_grid=0.0,0.1,1.0,10.0,100.0\n", text)
        self.assertEqual(reloaded, ExperimentConfig())

    def test_defaults_without_a_file(self):
        self.assertEqual(load_experiment_config(None), ExperimentConfig())

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_experiment_config(os.path.join(tempfile.gettempdir(), "no-such-dir-xyz", "run.cfg"))


class TestTasksConfig(unittest.TestCase):
    def setUp(self):
        self.config = load_tasks_config()

    def test_registry_ids_are_unique(self):
        ids = [entry.spec.domain_id for entry in self.config.domains]
        self.assertEqual(len(ids), 21)
        self.assertEqual(len(set(ids)), len(ids))

    def test_every_task_references_registered_domains(self):
        names = {entry.name for entry in self.config.domains}
        for task in self.config.tasks.values():
            with self.subTest(task=task.name):
                referenced = {n for group in task.sources.values() for n in group} | set(task.target)
                referenced |= {n for subset in task.ablations.values() for n in subset}
                self.assertLessEqual(referenced, names)

    def test_lookups(self):
        self.assertEqual(get_task(self.config, "season").target, ["trail1_winter_morning"])
        self.assertTrue(get_domain(self.config, "proxy_trail1_summer_morning").spec.reality_proxy)
        winter = get_domains_by_season(self.config, "winter")
        self.assertEqual(len(winter), 4)
        self.assertTrue(all(entry.spec.season == Season.WINTER for entry in winter))
        with self.assertRaises(ConfigError):
            get_task(self.config, "nope")
        with self.assertRaises(ConfigError):
            get_domain(self.config, "nope")

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_tasks_config(os.path.join(tempfile.gettempdir(), "no-such-dir-xyz", "tasks.yaml"))

    def test_malformed_registry(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "tasks.yaml")
            with open(path, "w", encoding="utf-8") as f:
                f.write("domains:\n  - name: x\n    spec: {domain_id: 1, season: monsoon, light: dusk, terrain: trail1}\ntasks: {}\n")
            with self.assertRaises(ConfigError):
                load_tasks_config(path)


if __name__ == "__main__":
    unittest.main()
