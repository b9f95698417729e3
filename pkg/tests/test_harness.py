#!/usr/bin/env python3
"""
Tests for traffic data, experiment configs, the replication launcher and
the command line
"""

import sys
import os
import json
import math
import tempfile
import unittest
from dataclasses import replace

import numpy as np

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config.experiment_config import (
    ConfigError, ExperimentConfig, LEAKAGE_ONE_WAY, LEAKAGE_TWO_WAY, ONE_WAY, TWO_WAY_EFFICIENT,
    TWO_WAY_EXACT, config_from_dict, load_experiment_config,
)
from config.scenario_builder import build_scenario
from core.auction import AuctionParams
from core.experiment_launcher import run_experiment, sweep
from core.model import CostFunction, DomainError, Passenger, PopulationSpec, Scenario, truthful_bids
from utils.result_writer import read_csv, read_json
from utils.scenario_io import save_bids, save_scenario
from utils.traffic_data import (
    TrafficDataError, TrafficVolumeTable, load_traffic_csv, synthetic_table, write_synthetic_traffic,
)
import main as cli

HEADER = "county,direction,index,volume\n"


class TempDirTestCase(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = self._tmp.name

    def path(self, *parts) -> str:
        return os.path.join(self.tmp, *parts)

    def write(self, name: str, text: str) -> str:
        with open(self.path(name), 'w') as f:
            f.write(text)
        return self.path(name)


class TestTrafficData(TempDirTestCase):

    def test_duplicates_are_averaged(self):
        path = self.write("v.csv", HEADER + "INY,S,0,100\nINY,S,0,200\nLA,N,0,50\nLA,N,1,70\n")
        table = load_traffic_csv(path)
        self.assertEqual(table.volume("INY", "S", 0), 150.0)
        self.assertEqual(table.labels, ["INY-S", "LA-N"])
        np.testing.assert_array_equal(table.volume_matrix(), [[150.0, 0.0], [50.0, 70.0]])

    def test_empty_file(self):
        self.assertEqual(len(load_traffic_csv(self.write("empty.csv", ""))), 0)
        self.assertEqual(len(load_traffic_csv(self.write("header.csv", HEADER))), 0)

    def test_negative_volume_names_line(self):
        path = self.write("v.csv", HEADER + "INY,S,0,100\nINY,S,1,-5\n")
        with self.assertRaises(TrafficDataError) as ctx:
            load_traffic_csv(path)
        self.assertIn("line 3", str(ctx.exception))

    def test_non_numeric_volume(self):
        path = self.write("v.csv", HEADER + "INY,S,0,abc\n")
        with self.assertRaises(TrafficDataError) as ctx:
            load_traffic_csv(path)
        self.assertIn("line 2", str(ctx.exception))

    def test_missing_column_and_file(self):
        with self.assertRaises(TrafficDataError):
            load_traffic_csv(self.write("v.csv", "county,direction,volume\nINY,S,5\n"))
        with self.assertRaises(TrafficDataError):
            load_traffic_csv(self.path("missing.csv"))

    def test_synthetic_file_loads_back(self):
        path = self.path("synthetic.csv")
        written = write_synthetic_traffic(path, seed=3)
        loaded = load_traffic_csv(path)
        np.testing.assert_array_equal(loaded.volume_matrix(), written.volume_matrix())
        self.assertEqual(loaded.volume_matrix().shape, (5, 24))
        volumes = loaded.volume_matrix()
        self.assertTrue(np.all((volumes >= 200.0) & (volumes <= 3000.0)))


class TestScenarioBuilder(TempDirTestCase):

    def setUp(self):
        super().setUp()
        self.table = load_traffic_csv(self.write("v.csv", HEADER + "INY,S,0,100\nINY,S,1,300\nLA,N,0,50\nLA,N,1,70\n"))
        self.spec = PopulationSpec(n=10, seed=1)

    def test_demand_is_share_of_volume(self):
        sc = build_scenario(self.table, self.spec, fraction=0.1, penalty=2.0)
        np.testing.assert_allclose(sc.demand, 0.1 * self.table.volume_matrix())
        np.testing.assert_array_equal(sc.baseline, self.table.volume_matrix())
        np.testing.assert_array_equal(sc.penalty, [2.0, 2.0])
        self.assertEqual(sc.labels, ("INY-S", "LA-N"))

    def test_zero_fraction(self):
        sc = build_scenario(self.table, self.spec, fraction=0.0)
        self.assertEqual(float(sc.demand.sum()), 0.0)

    def test_invalid_inputs(self):
        with self.assertRaises(DomainError):
            build_scenario(self.table, self.spec, fraction=1.5)
        with self.assertRaises(DomainError):
            build_scenario(self.table, self.spec, horizon=5)
        with self.assertRaises(TrafficDataError):
            build_scenario(TrafficVolumeTable.empty(), self.spec)

    def test_horizon(self):
        self.assertEqual(build_scenario(self.table, self.spec, horizon=1).T, 1)


class TestExperimentConfig(TempDirTestCase):

    def test_defaults(self):
        cfg = config_from_dict({"mechanism": ONE_WAY})
        self.assertEqual(cfg.population.family, "quadratic")
        self.assertEqual(config_from_dict({}).population.family, "linear")
        self.assertFalse(cfg.pricing.dp)

    def test_top_level_pricing_keys(self):
        cfg = config_from_dict({"mechanism": ONE_WAY, "dp": "on", "epsilon": 0.5, "eta": {"c": 0.2}})
        self.assertTrue(cfg.pricing.dp)
        self.assertEqual(cfg.pricing.epsilon, 0.5)
        self.assertEqual(cfg.pricing.eta.c, 0.2)

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            config_from_dict({"mechanism": "three-way"})
        with self.assertRaises(ConfigError):
            config_from_dict({"dp": "maybe"})
        with self.assertRaises(ConfigError):
            config_from_dict({"auction": {"epsilon": 0}})
        with self.assertRaises(ConfigError):
            config_from_dict({"fraction": 2.0})

    def test_replication_seeds(self):
        cfg = config_from_dict({"seeds": [3], "reps": 3})
        self.assertEqual(cfg.replication_seeds, [3, 4, 5])

    def test_sweep_parameters(self):
        cfg = config_from_dict({})
        self.assertEqual(cfg.with_parameter("T", 6.0).horizon, 6)
        self.assertEqual(cfg.with_parameter("epsilon", 2.0).auction.epsilon, 2.0)
        with self.assertRaises(ConfigError):
            cfg.with_parameter("N", 10)
        with self.assertRaises(ConfigError):
            cfg.with_parameter("epsilon", -1.0)

    def test_load_file(self):
        path = self.write("run.json", json.dumps({"mechanism": TWO_WAY_EXACT, "population": {"N": 4}}))
        cfg = load_experiment_config(path)
        self.assertEqual(cfg.mechanism, TWO_WAY_EXACT)
        self.assertEqual(cfg.population.n, 4)
        with self.assertRaises(ConfigError):
            load_experiment_config(self.path("missing.json"))
        with self.assertRaises(ConfigError):
            load_experiment_config(self.write("bad.json", "{not json"))


class TestExperiments(TempDirTestCase):

    def config(self, mechanism=TWO_WAY_EFFICIENT, name="run", **overrides) -> ExperimentConfig:
        data = {
            "mechanism": mechanism,
            "population": {"N": 30, "seed": 2},
            "fraction": 0.001,
            "horizon": 4,
            "hour": 2,
            "out": self.path(name),
        }
        data.update(overrides)
        return config_from_dict(data)

    def test_efficient_run_writes_outputs(self):
        metrics = run_experiment(self.config())
        self.assertFalse(metrics.partial)
        table = read_csv(os.path.join(metrics.out_dir, "table.csv"))
        self.assertEqual(len(table), 5)
        self.assertTrue((table["after"] <= table["before"]).all())
        summary = read_json(os.path.join(metrics.out_dir, "summary.json"))
        self.assertGreaterEqual(summary["mean"]["welfare"], 0.0)
        self.assertGreater(summary["mean"]["privacy_epsilon"], 0.0)
        self.assertTrue(os.path.exists(os.path.join(metrics.out_dir, "rep-0", "outcome.csv")))

    def test_same_seed_same_files(self):
        first = run_experiment(self.config(name="a"))
        second = run_experiment(self.config(name="b"))
        for name in (os.path.join("rep-0", "outcome.csv"), os.path.join("rep-0", "summary.json"), "table.csv"):
            with open(os.path.join(first.out_dir, name), 'rb') as f1, open(os.path.join(second.out_dir, name), 'rb') as f2:
                self.assertEqual(f1.read(), f2.read(), name)

    def test_zero_demand_selects_nobody(self):
        metrics = run_experiment(self.config(fraction=0.0))
        mean = metrics.summary["mean"]
        self.assertEqual(mean["selected"], 0.0)
        self.assertEqual(mean["welfare"], 0.0)
        table = read_csv(os.path.join(metrics.out_dir, "table.csv"))
        self.assertTrue((table["after"] == table["before"]).all())

    def test_replications(self):
        metrics = run_experiment(self.config(reps=2))
        self.assertEqual([r.seed for r in metrics.replications], [0, 1])
        self.assertEqual(len(metrics.summary["replications"]), 2)
        self.assertTrue(os.path.isdir(os.path.join(metrics.out_dir, "rep-1")))

    def test_exact_on_scenario_file(self):
        population = [
            Passenger(i, {0: CostFunction.linear_rate(rate)}, 1.0, (0, 0))
            for i, rate in enumerate((0.2, 0.5, 0.9))
        ]
        sc = Scenario(1, 2, np.ones((1, 2)), np.ones(1), population)
        save_scenario(sc, self.path("scenario.json"))
        cfg = replace(self.config(TWO_WAY_EXACT, horizon=None, hour=0), scenario_path=self.path("scenario.json"))
        mean = run_experiment(cfg).summary["mean"]
        self.assertGreaterEqual(mean["selected"], 2.0)
        self.assertEqual(mean["total_deficit"], 0.0)

    def test_exact_with_bids_file(self):
        population = [
            Passenger(i, {0: CostFunction.linear_rate(rate)}, 1.0, (0,))
            for i, rate in enumerate((0.2, 0.5))
        ]
        sc = Scenario(1, 1, np.ones((1, 1)), np.ones(1), population)
        save_scenario(sc, self.path("scenario.json"))
        save_bids(truthful_bids(sc), self.path("bids.json"))
        cfg = replace(
            self.config(TWO_WAY_EXACT, horizon=None, hour=0),
            scenario_path=self.path("scenario.json"), bids_path=self.path("bids.json"),
        )
        mean = run_experiment(cfg).summary["mean"]
        self.assertGreaterEqual(mean["selected"], 1.0)
        self.assertEqual(mean["total_deficit"], 0.0)

    def test_all_failed_raises(self):
        cfg = replace(self.config(), scenario_path=self.path("missing.json"))
        with self.assertRaises(DomainError):
            run_experiment(cfg)

    def test_one_way_run(self):
        metrics = run_experiment(self.config(ONE_WAY, horizon=3, population={"N": 20, "seed": 2}))
        trajectory = read_csv(os.path.join(metrics.out_dir, "rep-0", "trajectory.csv"))
        self.assertEqual(len(trajectory), 5 * 3)
        self.assertTrue((trajectory["price_published"] >= 0).all())
        self.assertIn("regret", metrics.summary["mean"])

    def test_two_way_leakage(self):
        cfg = replace(self.config(LEAKAGE_TWO_WAY), auction=AuctionParams(0.5))
        metrics = run_experiment(cfg)
        leakage = read_csv(os.path.join(metrics.out_dir, "leakage.csv"))
        self.assertEqual(len(leakage), 1)
        self.assertAlmostEqual(float(leakage["leakage_bits"][0]), 2 * math.log2(1 + math.tanh(0.03125)), places=12)
        check = read_json(os.path.join(metrics.out_dir, "rep-0", "dp_check.json"))
        self.assertLessEqual(check["max_log_ratio"], 0.5 + 1e-9)

    def test_one_way_leakage(self):
        cfg = self.config(LEAKAGE_ONE_WAY, horizon=2, dp="on", epsilon=1.0, leakage_samples=50)
        metrics = run_experiment(cfg)
        leakage = read_csv(os.path.join(metrics.out_dir, "leakage.csv"))
        self.assertEqual(leakage["T"].tolist(), [1, 2])
        self.assertTrue(((leakage["leakage_bits"] >= 0) & (leakage["leakage_bits"] <= 2)).all())
        check = read_json(os.path.join(metrics.out_dir, "rep-0", "dp_check.json"))
        # one release spends (1 - eta_1) epsilon
        self.assertAlmostEqual(check["bound"], 0.5)
        self.assertLessEqual(check["max_log_ratio"], check["bound"] + 1e-9)

    def improvement_at(self, volumes, hour):
        # synthetic volumes are all positive
        rows = volumes[volumes["t"] == hour].sort_values("s")
        return (100.0 * (rows["before"] - rows["after"]) / rows["before"]).to_numpy()

    def test_two_way_volumes_match_table(self):
        metrics = run_experiment(self.config())
        volumes = read_csv(os.path.join(metrics.out_dir, "rep-0", "volumes.csv"))
        self.assertEqual(list(volumes.columns), ["t", "s", "before", "offload", "after", "welfare_or_cost"])
        self.assertEqual(len(volumes), 5 * 4)
        table = read_csv(os.path.join(metrics.out_dir, "table.csv")).sort_values("od")
        np.testing.assert_allclose(self.improvement_at(volumes, 2), table["improvement_pct"], atol=1e-9)
        self.assertAlmostEqual(float(volumes["welfare_or_cost"].sum()), metrics.summary["mean"]["welfare"], places=6)

    def test_one_way_volumes_match_trajectory(self):
        metrics = run_experiment(self.config(ONE_WAY, horizon=3, population={"N": 20, "seed": 2}))
        volumes = read_csv(os.path.join(metrics.out_dir, "rep-0", "volumes.csv"))
        trajectory = read_csv(os.path.join(metrics.out_dir, "rep-0", "trajectory.csv"))
        np.testing.assert_allclose(volumes["welfare_or_cost"], trajectory["cost"])
        np.testing.assert_allclose(volumes["offload"], trajectory["total_offload"])
        table = read_csv(os.path.join(metrics.out_dir, "table.csv")).sort_values("od")
        np.testing.assert_allclose(self.improvement_at(volumes, 2), table["improvement_pct"], atol=1e-9)

    def test_case_study_day(self):
        metrics = run_experiment(self.config(horizon=24, population={"N": 500, "seed": 4}))
        volumes = read_csv(os.path.join(metrics.out_dir, "rep-0", "volumes.csv"))
        self.assertEqual(len(volumes), 5 * 24)
        self.assertTrue((volumes["after"] <= volumes["before"]).all())
        self.assertTrue((volumes["welfare_or_cost"] >= 0).all())

        priced = run_experiment(self.config(ONE_WAY, name="priced", horizon=24, population={"N": 100, "seed": 4}))
        self.assertGreaterEqual(priced.summary["mean"]["min_passenger_utility"], -1e-9)

    def test_sweep(self):
        frame = sweep(self.config(name="sweep"), "epsilon", [0.5, 1.0])
        self.assertEqual(frame["epsilon"].tolist(), [0.5, 1.0])
        self.assertTrue(os.path.exists(self.path("sweep", "sweep.csv")))
        self.assertTrue(os.path.isdir(self.path("sweep", "epsilon=0.5")))
        with self.assertRaises(ConfigError):
            sweep(self.config(name="sweep"), "N", [1])


class TestCommandLine(TempDirTestCase):

    def test_gen_data(self):
        out = self.path("volumes.csv")
        self.assertEqual(cli.main(["--log-level", "ERROR", "gen-data", "--out", out, "--seed", "1"]), 0)
        self.assertEqual(len(load_traffic_csv(out).keys), 5)

    def test_two_way_on_generated_data(self):
        out = self.path("volumes.csv")
        write_synthetic_traffic(out, seed=1)
        code = cli.main(["--log-level", "ERROR", "two-way", "--traffic", out, "--N", "30", "--T", "2",
                         "--hour", "1", "--fraction", "0.001", "--out", self.path("run")])
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(self.path("run", "table.csv")))

    def test_invalid_input_exit_code(self):
        code = cli.main(["--log-level", "ERROR", "two-way", "--traffic", self.path("missing.csv"),
                         "--out", self.path("run")])
        self.assertEqual(code, 2)
        code = cli.main(["--log-level", "ERROR", "one-way", "--epsilon", "-1", "--out", self.path("run")])
        self.assertEqual(code, 2)

    def test_too_large_exit_code(self):
        code = cli.main(["--log-level", "ERROR", "two-way", "--exact", "--N", "200", "--T", "1", "--hour", "0",
                         "--out", self.path("run")])
        self.assertEqual(code, 3)


if __name__ == "__main__":
    unittest.main()
