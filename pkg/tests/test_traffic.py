"""Traffic grid simulator: conservation, delays, determinism, golden master."""

import csv
from pathlib import Path

import numpy as np
import pytest

from cptopt.envs.traffic import (
    ConstantPolicy,
    EW,
    BoltzmannSignPolicy,
    FixedCyclePolicy,
    TrafficConfig,
    TrafficGrid,
    TrafficSim,
    traffic_episode,
)
from cptopt.rng import substream

GOLDEN = Path(__file__).parent / "data" / "traffic_golden.csv"


def uniform_policy(grid):
    return BoltzmannSignPolicy(np.ones(grid.feature_dim), grid)


class TestTopology:
    def test_default_grid_shape(self):
        grid = TrafficGrid(TrafficConfig())
        assert grid.n_junctions == 4
        assert grid.n_lanes == 8
        assert grid.n_paths == 4
        assert grid.feature_dim == 48

    def test_each_lane_belongs_to_one_path(self):
        grid = TrafficGrid(TrafficConfig())
        seen = [lane for hops in grid.path_hops for lane in hops]
        assert sorted(seen) == list(range(grid.n_lanes))

    def test_single_junction_grid(self):
        grid = TrafficGrid(TrafficConfig(rows=1, cols=1))
        assert grid.n_paths == 2
        assert grid.feature_dim == 12

    def test_feature_vector_one_indicator_per_junction(self):
        grid = TrafficGrid(TrafficConfig())
        phi = grid.features([0] * 8, [0] * 8, (0, 1, 0, 1))
        assert phi.sum() == 4.0
        assert set(np.unique(phi)) == {0.0, 1.0}

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrafficConfig(arrival_rates=(0.1, 0.2))
        with pytest.raises(ValueError):
            TrafficConfig(burst_prob=1.5)
        with pytest.raises(ValueError):
            TrafficConfig(service_rate=2, switch_loss=3)

    def test_config_json_round_trip(self):
        config = TrafficConfig(arrival_rates=(0.5, 0.5, 0.2, 0.2), burst_prob=0.01)
        again = TrafficConfig.from_json(config.to_json())
        assert again == config


class TestEpisode:
    def test_zero_arrivals_give_empty_samples(self):
        config = TrafficConfig(arrival_rates=(0.0, 0.0, 0.0, 0.0), burst_prob=0.0)
        grid = TrafficGrid(config)
        episode = traffic_episode(grid, uniform_policy(grid), 50, substream(0))
        assert all(len(s) == 0 for s in episode.samples)
        assert episode.injected == 0

    def test_always_green_unlimited_service_means_zero_delay(self):
        # a 1x1 grid with the EW lane always green and ample service: every
        # EW vehicle is served the step it arrives, so its delay is 0 and its
        # sample equals the path baseline
        config = TrafficConfig(
            rows=1,
            cols=1,
            arrival_rates=(0.3, 0.0),
            burst_prob=0.0,
            service_rate=999,
            switch_loss=0,
        )
        grid = TrafficGrid(config)
        episode = traffic_episode(grid, ConstantPolicy(EW), 100, substream(5))
        assert episode.injected > 0
        baseline = grid.baseline_delays[0]
        assert all(s == baseline for s in episode.samples[0])

    def test_conservation_at_every_step(self):
        grid = TrafficGrid(TrafficConfig())
        sim = TrafficSim(grid, substream(3))
        policy = uniform_policy(grid)
        for t in range(300):
            sim.step(t, policy)
            assert sim.injected == sim.departed + sim.queued

    def test_episode_counters_consistent(self):
        grid = TrafficGrid(TrafficConfig())
        episode = traffic_episode(grid, uniform_policy(grid), 400, substream(1))
        assert episode.injected == episode.departed + episode.queued
        n_samples = sum(len(s) for s in episode.samples)
        assert n_samples == episode.injected  # stragglers included

    def test_determinism(self):
        grid = TrafficGrid(TrafficConfig())
        a = traffic_episode(grid, uniform_policy(grid), 250, substream(8, 1))
        b = traffic_episode(grid, uniform_policy(grid), 250, substream(8, 1))
        assert a == b

    def test_switch_loss_reduces_first_green_service(self):
        config = TrafficConfig(
            rows=1, cols=1, arrival_rates=(0.0, 0.0), burst_prob=0.0,
            service_rate=2, switch_loss=1,
        )
        grid = TrafficGrid(config)
        sim = TrafficSim(grid, substream(0))
        sim.queues[0].extend([0, 0, 0, 0])
        sim.injected = 4
        sim.step(0, ConstantPolicy(EW))
        assert sim.departed == 2  # first step: no previous phase, full service
        sim.step(1, ConstantPolicy(1))  # switch to NS (empty)
        sim.step(2, ConstantPolicy(EW))  # switched back: one lost slot
        assert sim.departed == 3

    def test_fixed_cycle_alternates(self):
        policy = FixedCyclePolicy(cycle=2)
        configs = [policy.choose_configs(t, [0] * 8, [0] * 8, None) for t in range(6)]
        assert configs[0] == configs[1] == (0, 0, 0, 0)
        assert configs[2] == configs[3] == (1, 1, 1, 1)
        assert configs[4] == (0, 0, 0, 0)

    def test_boltzmann_policy_rejects_bad_theta(self):
        grid = TrafficGrid(TrafficConfig())
        with pytest.raises(ValueError):
            BoltzmannSignPolicy(np.ones(3), grid)
        with pytest.raises(ValueError):
            BoltzmannSignPolicy(np.full(grid.feature_dim, np.nan), grid)

    def test_saturated_scores_pin_the_choice(self):
        grid = TrafficGrid(TrafficConfig())
        theta = np.zeros(grid.feature_dim)
        for j in range(grid.n_junctions):
            for qb in range(3):
                for tb in range(2):
                    theta[grid.feature_index(j, EW, qb, tb)] = 60.0
        policy = BoltzmannSignPolicy(theta, grid)
        rng = substream(2)
        for t in range(50):
            assert policy.choose_configs(t, [1] * 8, [0] * 8, rng) == (0, 0, 0, 0)


class TestGoldenMaster:
    def test_default_grid_uniform_policy_regression(self):
        """Frozen reference output of the default configuration.

        Regenerate tests/data/traffic_golden.csv with
        ``python tests/data/make_traffic_golden.py`` after an intentional
        behavior change.
        """
        grid = TrafficGrid(TrafficConfig())
        episode = traffic_episode(grid, uniform_policy(grid), 120, substream(2024))
        expected: dict[int, list[float]] = {}
        with open(GOLDEN, newline="") as fh:
            for row in csv.DictReader(fh):
                expected.setdefault(int(row["path"]), []).append(float(row["sample"]))
        assert len(episode.samples) == len(expected)
        for path, samples in expected.items():
            assert list(episode.samples[path]) == pytest.approx(samples, abs=0.0)
