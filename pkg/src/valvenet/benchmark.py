"""Desk-scale strategy comparison: all four ROI strategies, several
seeds, identical budgets, plus the hierarchical pipeline and the
context-ambiguity probe.

Run numbering is strategy-major over the declared strategy order, then
seed order: with strategies (none, valve, blackout, concat) and seeds
(0, 1, 2), run 1 is none/seed0, run 4 is valve/seed0, run 5 valve/seed1,
and so on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import IouReport, emit_comparison_table, evaluate
from .model import STRATEGIES, Model, ModelSpec
from .scenes import LabeledSample, ambiguity_config, generate_scene, standard_families
from .training import TrainConfig, train
from .valve import valve_forward

# disjoint seed bases for the four scene pools
_TRAIN_SEED0 = 1000
_SAME_SEED0 = 5000
_DIFF_SEED0 = 6000
_AMBI_SEED0 = 7000


@dataclass
class BenchmarkConfig:
    train_scenes: int = 200
    test_scenes: int = 50
    ambiguity_scenes: int = 50
    size: int = 64
    seeds: tuple = (0, 1, 2)
    steps: int = 1000
    batch: int = 8
    lr: float = 1e-3
    vessel_steps: int = 700


@dataclass
class StrategyRun:
    run_index: int
    strategy: str
    seed: int
    model: Model
    report_same: IouReport
    report_different: IouReport
    report_ambiguity: IouReport


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    runs: list = field(default_factory=list)
    vessel_nets: dict = field(default_factory=dict)  # seed -> level-1 Model
    vessel_reports: dict = field(default_factory=dict)  # seed -> IouReport (testSame)
    hier_reports: dict = field(default_factory=dict)  # seed -> IouReport via predicted ROI
    elapsed_seconds: float = 0.0

    def run(self, strategy: str, seed: int) -> StrategyRun:
        for r in self.runs:
            if r.strategy == strategy and r.seed == seed:
                return r
        raise KeyError(f"no run for strategy {strategy!r} seed {seed}")

    def run_by_index(self, index: int) -> StrategyRun:
        for r in self.runs:
            if r.run_index == index:
                return r
        raise KeyError(f"no run numbered {index}")

    def report(self, strategy: str, seed: int, regime: str) -> IouReport:
        r = self.run(strategy, seed)
        return {
            "same": r.report_same,
            "different": r.report_different,
            "ambiguity": r.report_ambiguity,
        }[regime]

    def fill_mean(self, strategy: str, seed: int, regime: str) -> float:
        return self.report(strategy, seed, regime).mean(2)

    def summary_text(self) -> str:
        lines = ["Desk-scale strategy benchmark", "=" * 64]
        lines.append(
            f"{self.config.train_scenes} train / {self.config.test_scenes} testSame / "
            f"{self.config.test_scenes} testDifferent scenes, "
            f"{self.config.steps} steps, batch {self.config.batch}, "
            f"seeds {list(self.config.seeds)}; wall time {self.elapsed_seconds:.0f}s"
        )
        for seed in self.config.seeds:
            lines.append(f"\n-- seed {seed}: testSame --")
            reports = {s: self.report(s, seed, "same") for s in STRATEGIES}
            lines.append(emit_comparison_table(reports))
            lines.append(f"-- seed {seed}: testDifferent --")
            reports = {s: self.report(s, seed, "different") for s in STRATEGIES}
            lines.append(emit_comparison_table(reports))

        lines.append("Vessel IOU, valve with ground-truth ROI, testSame (per seed):")
        for seed in self.config.seeds:
            v = self.report("valve", seed, "same").iou(1, 1)
            lines.append(f"  seed {seed}: {v:.4f}")
        lines.append("Fill-level mean IOU, valve vs none, testSame (per seed):")
        for seed in self.config.seeds:
            lines.append(
                f"  seed {seed}: valve {self.fill_mean('valve', seed, 'same'):.4f}  "
                f"none {self.fill_mean('none', seed, 'same'):.4f}"
            )
        lines.append("Fill-level mean IOU on the ambiguity set, valve vs blackout (per seed):")
        for seed in self.config.seeds:
            lines.append(
                f"  seed {seed}: valve {self.fill_mean('valve', seed, 'ambiguity'):.4f}  "
                f"blackout {self.fill_mean('blackout', seed, 'ambiguity'):.4f}"
            )
        lines.append("Hierarchical (predicted ROI) vs ground-truth ROI, valve, testSame:")
        for seed in self.config.seeds:
            gt = self.report("valve", seed, "same")
            hier = self.hier_reports[seed]
            per_level = "  ".join(
                f"L{level}: {hier.mean(level):.3f}/{gt.mean(level):.3f}"
                for level in sorted(gt.levels)
            )
            lines.append(f"  seed {seed}: {per_level}   (hier/gt mean IOU)")
        return "\n".join(lines) + "\n"


def make_benchmark_data(config: BenchmarkConfig):
    """The four scene pools: train, testSame (train families), testDifferent
    (held-out families), and the all-striped ambiguity set."""
    train_fams, heldout_fams = standard_families(config.size)
    train = [
        generate_scene(_TRAIN_SEED0 + i, train_fams[i % len(train_fams)])
        for i in range(config.train_scenes)
    ]
    test_same = [
        generate_scene(_SAME_SEED0 + i, train_fams[i % len(train_fams)])
        for i in range(config.test_scenes)
    ]
    test_different = [
        generate_scene(_DIFF_SEED0 + i, heldout_fams[i % len(heldout_fams)])
        for i in range(config.test_scenes)
    ]
    ambi = ambiguity_config(config.size)
    ambiguity = [generate_scene(_AMBI_SEED0 + i, ambi) for i in range(config.ambiguity_scenes)]
    return train, test_same, test_different, ambiguity


def train_strategy(strategy: str, seed: int, train_set: list, config: BenchmarkConfig) -> Model:
    model = Model(ModelSpec(strategy=strategy), seed=seed)
    tc = TrainConfig(steps=config.steps, batch=config.batch, seed=seed, lr=config.lr)
    train(model, train_set, tc)
    return model


def train_vessel_net(seed: int, train_set: list, config: BenchmarkConfig) -> Model:
    """The level-1-only, no-ROI net that feeds the hierarchical pipeline."""
    model = Model(ModelSpec(strategy="none", head_mode="single", head_level=1), seed=seed)
    tc = TrainConfig(steps=config.vessel_steps, batch=config.batch, seed=seed, lr=config.lr)
    train(model, train_set, tc)
    return model


def run_benchmark(config: BenchmarkConfig | None = None, log=None) -> BenchmarkResult:
    """Train and evaluate every (strategy, seed) pair plus the per-seed
    vessel nets and hierarchical evaluations."""
    config = config or BenchmarkConfig()
    say = log or (lambda msg: None)
    t0 = time.monotonic()
    train_set, test_same, test_different, ambiguity = make_benchmark_data(config)
    say(f"data ready: {len(train_set)} train, {len(test_same)}+{len(test_different)} test")

    result = BenchmarkResult(config=config)
    index = 0
    for strategy in STRATEGIES:
        roi_source = "none" if strategy == "none" else "gt"
        for seed in config.seeds:
            index += 1
            model = train_strategy(strategy, seed, train_set, config)
            run = StrategyRun(
                run_index=index,
                strategy=strategy,
                seed=seed,
                model=model,
                report_same=evaluate(model, test_same, roi_source=roi_source),
                report_different=evaluate(model, test_different, roi_source=roi_source),
                report_ambiguity=evaluate(model, ambiguity, roi_source=roi_source),
            )
            result.runs.append(run)
            say(
                f"run {index:2d} {strategy:>8s} seed {seed}: "
                f"fill mean same {run.report_same.mean(2):.3f} "
                f"diff {run.report_different.mean(2):.3f} "
                f"({time.monotonic() - t0:.0f}s)"
            )

    for seed in config.seeds:
        vessel = train_vessel_net(seed, train_set, config)
        result.vessel_nets[seed] = vessel
        result.vessel_reports[seed] = evaluate(vessel, test_same, roi_source="none")
        valve_model = result.run("valve", seed).model
        result.hier_reports[seed] = evaluate(valve_model, test_same, roi_source=vessel)
        say(
            f"vessel net seed {seed}: level-1 vessel IOU "
            f"{result.vessel_reports[seed].iou(1, 1):.3f} "
            f"({time.monotonic() - t0:.0f}s)"
        )

    result.elapsed_seconds = time.monotonic() - t0
    return result


def relevance_region_stats(model: Model, samples: list) -> np.ndarray:
    """Per-filter mean |relevance| inside vs outside the ROI, aggregated
    over samples; returns [k, 2] with columns (inside, outside).

    A trained valve layer is expected to show both regimes: some filters
    concentrating relevance mass inside the vessel region and at least
    one doing the reverse (background-directed context filters)."""
    if model.spec.strategy != "valve":
        raise ValueError(f"relevance stats need a valve model, got {model.spec.strategy!r}")
    k = model.spec.first_layer_filters
    sums = np.zeros((k, 2))
    counts = np.zeros(2)
    for sample in samples:
        acts = valve_forward(
            sample.image.astype(model.dtype), sample.roi.astype(model.dtype),
            model._valve_params(),
        )
        rel = np.abs(acts.relevance_map[0])  # [k, h, w]
        inside = sample.labels.level1 == 1
        sums[:, 0] += rel[:, inside].sum(axis=1)
        sums[:, 1] += rel[:, ~inside].sum(axis=1)
        counts[0] += inside.sum()
        counts[1] += (~inside).sum()
    return sums / np.maximum(counts, 1)[None, :]
