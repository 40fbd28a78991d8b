"""Experiment runner comparing training objectives on the distorted-value axis.

Three variants share one traffic environment and differ only in the
preference model their training objective uses:

* ``avg`` -- identity utilities and weights (plain sample means),
* ``eut`` -- curved loss-averse utilities, undistorted probabilities,
* ``cpt`` -- the same utilities plus inverted-s probability weighting.

Each variant trains a signal policy with the first-order perturbation
optimizer against its own objective, then the frozen policies are evaluated
on shared test episodes and *all* of them are scored with the full
distorted-value model, so the variants are compared on one axis.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .estimator import EstimatorConfig, estimate_cpt
from .envs.traffic import BoltzmannSignPolicy, TrafficConfig, TrafficGrid, traffic_episode
from .models import CptModel
from .rng import RootSeed, stream_id, subseed, substream
from .spsa import BoxConstraint, RunTrace, SpsaSchedules, ascend

__all__ = [
    "VARIANTS",
    "ExperimentConfig",
    "ExperimentResult",
    "TrafficObjective",
    "composite_cpt",
    "path_cpt_scores",
    "run_experiment",
]

VARIANTS = ("avg", "eut", "cpt")

# substream roles under the master seed
_TRAIN, _TEST = 0, 1


def path_cpt_scores(
    path_samples: Sequence[Sequence[float]],
    model: CptModel,
    cfg: EstimatorConfig = EstimatorConfig(),
) -> list[float]:
    """Per-path estimates; paths with fewer than two samples score 0 (flagged)."""
    scores = []
    for i, samples in enumerate(path_samples):
        if len(samples) < 2:
            warnings.warn(
                f"path {i} has {len(samples)} sample(s); it contributes 0",
                RuntimeWarning,
                stacklevel=2,
            )
            scores.append(0.0)
        else:
            scores.append(estimate_cpt(samples, model, cfg).value)
    return scores


def composite_cpt(
    path_samples: Sequence[Sequence[float]],
    mu: Sequence[float],
    model: CptModel,
    cfg: EstimatorConfig = EstimatorConfig(),
) -> float:
    """Traffic-wide objective: user-proportion-weighted sum of per-path values."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or len(path_samples) != mu.size:
        raise ValueError(
            f"got {len(path_samples)} sample lists for {mu.size} path weights"
        )
    if abs(mu.sum() - 1.0) > 1e-9 or np.any(mu < 0.0):
        raise ValueError("path weights must be nonnegative and sum to 1")
    return float(np.dot(mu, path_cpt_scores(path_samples, model, cfg)))


class TrafficObjective:
    """Value-estimate callback for the optimizers.

    The optimizer's per-trajectory sample budget ``m`` is read as simulation
    steps: the evaluator runs ``ceil(m / horizon)`` fixed-horizon episodes and
    pools their per-path delay samples, so a growing batch schedule tightens
    the value estimates as training progresses.
    """

    def __init__(
        self,
        grid: TrafficGrid,
        mu: Sequence[float],
        model: CptModel,
        cfg: EstimatorConfig,
        horizon: int,
    ):
        self.grid = grid
        self.mu = tuple(mu)
        self.model = model
        self.cfg = cfg
        self.horizon = horizon

    def __call__(self, theta: np.ndarray, m: int, rng: np.random.Generator) -> float:
        policy = BoltzmannSignPolicy(theta, self.grid)
        episodes = max(1, -(-int(m) // self.horizon))
        pooled: list[list[float]] = [[] for _ in range(self.grid.n_paths)]
        for _ in range(episodes):
            episode = traffic_episode(self.grid, policy, self.horizon, rng)
            for path, samples in enumerate(episode.samples):
                pooled[path].extend(samples)
        return composite_cpt(pooled, self.mu, self.model, self.cfg)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; one master seed derives every substream."""

    traffic: TrafficConfig = TrafficConfig()
    master_seed: int = 0
    train_iters: int = 200
    test_reps: int = 100
    train_horizon: int = 500
    test_horizon: int = 1000
    sigma: float = 0.88
    loss_aversion: float = 2.25
    eta_gain: float = 0.61
    eta_loss: float = 0.69
    box_lo: float = 0.1
    box_hi: float = 10.0
    theta_init: float = 1.0
    schedules: SpsaSchedules = field(
        default_factory=lambda: SpsaSchedules(alpha=0.61, m0=15.0)
    )
    include_top: bool = False
    mu: Optional[tuple[float, ...]] = None
    max_workers: int = 4

    def __post_init__(self) -> None:
        if self.train_iters < 0 or self.test_reps < 1:
            raise ValueError("train_iters must be >= 0 and test_reps >= 1")
        if self.train_horizon < 1 or self.test_horizon < 1:
            raise ValueError("horizons must be >= 1")
        if not self.box_lo < self.theta_init < self.box_hi:
            raise ValueError("theta_init must lie strictly inside the box")
        if self.mu is not None:
            mu = tuple(float(v) for v in self.mu)
            n_paths = self.traffic.rows + self.traffic.cols
            if len(mu) != n_paths:
                raise ValueError(f"mu must have {n_paths} entries")
            object.__setattr__(self, "mu", mu)

    def path_weights(self) -> tuple[float, ...]:
        if self.mu is not None:
            return self.mu
        n = self.traffic.rows + self.traffic.cols
        return (1.0 / n,) * n

    def variant_models(self) -> dict[str, CptModel]:
        return {
            "avg": CptModel.identity(),
            "eut": CptModel.expected_utility(self.sigma, self.loss_aversion),
            "cpt": CptModel.tversky_kahneman(
                self.sigma, self.loss_aversion, self.eta_gain, self.eta_loss
            ),
        }

    def to_dict(self) -> dict:
        return {
            "traffic": self.traffic.to_dict(),
            "master_seed": self.master_seed,
            "train_iters": self.train_iters,
            "test_reps": self.test_reps,
            "train_horizon": self.train_horizon,
            "test_horizon": self.test_horizon,
            "sigma": self.sigma,
            "lambda": self.loss_aversion,
            "eta_gain": self.eta_gain,
            "eta_loss": self.eta_loss,
            "box_lo": self.box_lo,
            "box_hi": self.box_hi,
            "theta_init": self.theta_init,
            "schedules": {
                "a0": self.schedules.a0,
                "a_offset": self.schedules.a_offset,
                "delta0": self.schedules.delta0,
                "delta_exp": self.schedules.delta_exp,
                "m0": self.schedules.m0,
                "nu": self.schedules.nu,
                "alpha": self.schedules.alpha,
            },
            "include_top": self.include_top,
            "mu": list(self.mu) if self.mu is not None else None,
            "max_workers": self.max_workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        kwargs = dict(data)
        if "traffic" in kwargs:
            kwargs["traffic"] = TrafficConfig.from_dict(kwargs["traffic"])
        if "schedules" in kwargs:
            kwargs["schedules"] = SpsaSchedules(**kwargs["schedules"])
        if "lambda" in kwargs:
            kwargs["loss_aversion"] = kwargs.pop("lambda")
        if kwargs.get("mu") is not None:
            kwargs["mu"] = tuple(kwargs["mu"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class ExperimentResult:
    summary: dict
    out_dir: Optional[Path]
    traces: dict[str, RunTrace]
    scores: dict[str, np.ndarray]


def _test_scores(
    config: ExperimentConfig,
    grid: TrafficGrid,
    theta: np.ndarray,
    score_model: CptModel,
    master: RootSeed,
) -> tuple[np.ndarray, np.ndarray]:
    """CPT-axis scores of a frozen policy over shared test substreams."""
    mu = config.path_weights()
    cfg = EstimatorConfig(include_top_order_stat=config.include_top)
    policy = BoltzmannSignPolicy(theta, grid)

    def one(rep: int) -> list[float]:
        episode = traffic_episode(
            grid, policy, config.test_horizon, substream(master, _TEST, rep)
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return path_cpt_scores(episode.samples, score_model, cfg)

    with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
        per_path = np.asarray(list(pool.map(one, range(config.test_reps))))
    totals = per_path @ np.asarray(mu)
    return totals, per_path


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[Path] = None
) -> ExperimentResult:
    """Train each variant, score all of them on the distorted-value axis.

    When ``out_dir`` is given, writes ``summary.json``,
    ``scores_<variant>.csv`` (columns: replication, cpt_score, path scores)
    and ``trace_<variant>.csv``.  Outputs are a pure function of the config,
    so reruns are byte-identical.
    """
    master = config.master_seed
    grid = TrafficGrid(config.traffic)
    mu = config.path_weights()
    est_cfg = EstimatorConfig(include_top_order_stat=config.include_top)
    models = config.variant_models()
    score_model = models["cpt"]
    box = BoxConstraint.cube(config.box_lo, config.box_hi, grid.feature_dim)
    theta0 = np.full(grid.feature_dim, config.theta_init)

    traces: dict[str, RunTrace] = {}
    scores: dict[str, np.ndarray] = {}
    summary: dict = {
        "master_seed": master,
        "config": config.to_dict(),
        "variants": {},
    }
    for name in VARIANTS:
        objective = TrafficObjective(grid, mu, models[name], est_cfg, config.train_horizon)
        # one training stream for all variants: common random numbers make the
        # comparison a paired one, exactly as with the shared test streams
        train_seed = subseed(master, _TRAIN)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            trace = ascend(
                objective, config.schedules, box, theta0, config.train_iters, train_seed
            )
        totals, per_path = _test_scores(config, grid, trace.final_theta, score_model, master)
        traces[name] = trace
        scores[name] = totals
        summary["variants"][name] = {
            "objective": name,
            "train_stream": stream_id(master, _TRAIN),
            "final_theta": [float(v) for v in trace.final_theta],
            "mean_cpt_score": float(np.mean(totals)),
            "median_cpt_score": float(np.median(totals)),
        }
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / f"scores_{name}.csv", "w", newline="") as fh:
                header = ["replication", "cpt_score"]
                header += [f"path_{i}" for i in range(len(mu))]
                fh.write(",".join(header) + "\n")
                for rep in range(config.test_reps):
                    row = [str(rep), repr(float(totals[rep]))]
                    row += [repr(float(v)) for v in per_path[rep]]
                    fh.write(",".join(row) + "\n")
            traces[name].write_csv(str(out_dir / f"trace_{name}.csv"))

    if out_dir is not None:
        with open(Path(out_dir) / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")

    return ExperimentResult(
        summary=summary,
        out_dir=Path(out_dir) if out_dir is not None else None,
        traces=traces,
        scores=scores,
    )
