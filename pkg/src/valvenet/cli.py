"""Command-line front end.

Subcommands: gen-data, train, eval, compare, hier, dump-maps.  Every
artifact-writing command drops its resolved configuration beside its
outputs; all are deterministic under a fixed config and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data_io import load_dataset, make_splits, save_dataset
from .errors import ValveNetError
from .metrics import emit_comparison_table, evaluate
from .model import STRATEGIES, Model, ModelSpec
from .scenes import generate_scene, standard_families
from .training import TrainConfig, train
from .viz import panels_for_sample

_GEN_SEED_STRIDE = 100_000  # keeps train/test scene seed ranges disjoint


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "strategy", None):
        overrides["strategy"] = args.strategy
    if getattr(args, "level", None):
        if args.level == "multi":
            overrides["head_mode"] = "multi"
            overrides["head_level"] = None
        else:
            overrides["head_mode"] = "single"
            overrides["head_level"] = int(args.level)
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = (args.seed,)
    if getattr(args, "out", None):
        overrides["out"] = args.out
    return cfg.with_overrides(**overrides)


def _synth_pools(cfg: RunConfig, seed: int):
    """Synthesize (train, test_same, test_different) per the config."""
    train_fams, heldout_fams = standard_families(cfg.scene_size)
    n_train = int(round(cfg.scenes * cfg.train_frac))
    n_test = max(1, cfg.scenes - n_train)
    base = seed * _GEN_SEED_STRIDE
    train_pool = [
        generate_scene(base + i, train_fams[i % len(train_fams)]) for i in range(n_train)
    ]
    same = [
        generate_scene(base + _GEN_SEED_STRIDE // 2 + i, train_fams[i % len(train_fams)])
        for i in range(n_test)
    ]
    diff = [
        generate_scene(base + _GEN_SEED_STRIDE // 4 + i, heldout_fams[i % len(heldout_fams)])
        for i in range(n_test)
    ]
    return train_pool, same, diff


def _heldout_names(samples) -> set:
    _, heldout_fams = standard_families()
    names = {f.family for f in heldout_fams}
    present = {s.family for s in samples}
    matched = names & present
    if not matched and len(present) > 1:
        matched = {sorted(present)[-1]}
    return matched


def _run_data(cfg: RunConfig, seed: int):
    if cfg.dataset:
        samples = load_dataset(cfg.dataset)
        if not samples:
            raise ValveNetError(f"dataset at {cfg.dataset} contains no samples")
        heldout = _heldout_names(samples)
        if heldout:
            return make_splits(samples, cfg.train_frac, seed, heldout)
        n_train = int(round(cfg.train_frac * len(samples)))
        return samples[:n_train], samples[n_train:], []
    return _synth_pools(cfg, seed)


def _train_one(cfg: RunConfig, seed: int, train_pool) -> tuple:
    spec = ModelSpec(
        strategy=cfg.strategy,
        head_mode=cfg.head_mode,
        head_level=cfg.head_level,
        first_layer_filters=cfg.first_layer_filters,
        encoder_widths=cfg.encoder_widths,
    )
    model = Model(spec, seed=seed)
    tc = TrainConfig(steps=cfg.steps, batch=cfg.batch, seed=seed, lr=cfg.lr)
    return train(model, train_pool, tc)


def _report_csv(report, strategy: str) -> str:
    return emit_comparison_table({strategy: report}, fmt="csv")


# -- subcommands --------------------------------------------------------


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    train_fams, heldout_fams = standard_families(cfg.scene_size)
    configs = train_fams * 2 + heldout_fams  # 1/3 of scenes from held-out families
    samples = [
        generate_scene(seed * _GEN_SEED_STRIDE + i, configs[i % len(configs)])
        for i in range(cfg.scenes)
    ]
    out = Path(cfg.out)
    save_dataset(samples, out)
    cfg.write_resolved(out)
    print(f"wrote {len(samples)} scenes to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    train_pool, _, _ = _run_data(cfg, seed)
    model, log = _train_one(cfg, seed, train_pool)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    save_checkpoint(model, ckpt)
    log.to_csv(out / "loss.csv")
    cfg.write_resolved(out)
    final = log.total_by_step()[-1][1] if log.rows else float("nan")
    print(f"trained {cfg.strategy} for {cfg.steps} steps (final loss {final:.4f}); wrote {ckpt}")
    return 0


def _roi_source_for(args, model: Model):
    roi = getattr(args, "roi", None) or ("gt" if model.spec.needs_roi else "none")
    if roi == "pred":
        if not getattr(args, "vessel_ckpt", None):
            raise ValveNetError("--roi pred requires --vessel-ckpt")
        return load_checkpoint(args.vessel_ckpt)
    return roi


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    model = load_checkpoint(args.ckpt)
    _, test_same, test_different = _run_data(cfg, seed)
    pool = test_different if args.regime == "different" else test_same
    if not pool:
        raise ValveNetError(f"no {args.regime!r} samples available to evaluate")
    report = evaluate(model, pool, roi_source=_roi_source_for(args, model))
    table = emit_comparison_table({model.spec.strategy: report})
    print(table, end="")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(_report_csv(report, model.spec.strategy), encoding="utf-8")
    (out / "report.txt").write_text(table, encoding="utf-8")
    cfg.write_resolved(out)
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    train_pool, test_same, _ = _run_data(cfg, seed)
    if not test_same:
        raise ValveNetError("no test samples available for comparison")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for strategy in STRATEGIES:
        run_cfg = cfg.with_overrides(strategy=strategy)
        model, _ = _train_one(run_cfg, seed, train_pool)
        save_checkpoint(model, out / f"model_{strategy}.ckpt")
        roi_source = "none" if strategy == "none" else "gt"
        reports[strategy] = evaluate(model, test_same, roi_source=roi_source)
    table = emit_comparison_table(reports)
    print(table, end="")
    (out / "compare.txt").write_text(table, encoding="utf-8")
    (out / "compare.csv").write_text(emit_comparison_table(reports, fmt="csv"), encoding="utf-8")
    cfg.write_resolved(out)
    return 0


def _cmd_hier(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    vessel = load_checkpoint(args.vessel_ckpt)
    content = load_checkpoint(args.ckpt)
    _, test_same, test_different = _run_data(cfg, seed)
    pool = test_different if args.regime == "different" else test_same
    if not pool:
        raise ValveNetError(f"no {args.regime!r} samples available to evaluate")
    hier = evaluate(content, pool, roi_source=vessel)
    gt = evaluate(content, pool, roi_source="gt" if content.spec.needs_roi else "none")
    table = emit_comparison_table({"predicted-roi": hier, "gt-roi": gt})
    print(table, end="")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hier.txt").write_text(table, encoding="utf-8")
    (out / "hier.csv").write_text(
        emit_comparison_table({"predicted-roi": hier, "gt-roi": gt}, fmt="csv"),
        encoding="utf-8",
    )
    cfg.write_resolved(out)
    return 0


def _cmd_dump_maps(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seeds[0]
    model = load_checkpoint(args.ckpt)
    _, test_same, _ = _run_data(cfg, seed)
    if not 0 <= args.index < len(test_same):
        raise ValveNetError(f"sample index {args.index} out of range 0..{len(test_same) - 1}")
    out = Path(cfg.out)
    written = panels_for_sample(model, test_same[args.index], out)
    cfg.write_resolved(out)
    print(f"wrote {len(written)} rasters to {out}")
    return 0


# -- parser -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, roi: bool = False) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="seed (overrides the config's seed list)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--level", choices=("1", "2", "3", "4", "multi"),
                   help="head selection: one annotation level or 'multi'")
    if roi:
        p.add_argument("--roi", choices=("gt", "pred", "none"),
                       help="ROI source at evaluation time")
        p.add_argument("--vessel-ckpt", help="vessel-net checkpoint for --roi pred")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="valvenet",
        description="ROI-gated segmentation nets: data synthesis, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize scenes and export the dataset layout")
    _add_common(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one model from a config")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test pool")
    _add_common(p, roi=True)
    p.add_argument("--ckpt", required=True, help="model checkpoint path")
    p.add_argument("--regime", choices=("same", "different"), default="same")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="train and evaluate all four strategies")
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("hier", help="evaluate the two-net hierarchical pipeline")
    _add_common(p)
    p.add_argument("--ckpt", required=True, help="content-net checkpoint")
    p.add_argument("--vessel-ckpt", required=True, help="vessel-net checkpoint")
    p.add_argument("--regime", choices=("same", "different"), default="same")
    p.set_defaults(func=_cmd_hier)

    p = sub.add_parser("dump-maps", help="write signed-map and overlay rasters for one sample")
    _add_common(p)
    p.add_argument("--ckpt", required=True, help="model checkpoint path")
    p.add_argument("--index", type=int, default=0, help="sample index in the test pool")
    p.set_defaults(func=_cmd_dump_maps)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ValveNetError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
