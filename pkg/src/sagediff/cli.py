"""Command-line driver: make-data, train, sample, eval, plot.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure. The SAGE_SEED
environment variable overrides the configured master seed. Every artifact is
stamped with the producing config hash; eval refuses mixed lineages and
sample refuses a foreign checkpoint unless --force is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import sampling as sampling_mod
from .config import (ExperimentConfig, STREAM_PROMPTS, STREAM_RECORDS, STREAM_SAMPLE,
                     STREAM_TRAIN, STREAM_WORLD, config_hash, load_config)
from .grouping import greedy_partition
from .model import load_checkpoint, save_checkpoint
from .numerics import DivergenceError, Rng
from .schedule import build_grid
from .svg import line_chart, scatter_chart
from .training import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def _load(args) -> ExperimentConfig:
    return load_config(args.config, args.set, os.environ.get("SAGE_SEED"))


def _paths(cfg: ExperimentConfig) -> dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "out": out,
        "world": out / "world.json",
        "records": out / "records.jsonl",
        "groups": out / "groups.txt",
        "checkpoint": out / "checkpoint.json",
        "loss": out / "loss.csv",
        "samples": out / "samples.jsonl",
        "cost": out / "cost.csv",
        "traces": out / "traces.jsonl",
        "report": out / "report.csv",
        "plots": out / "plots",
    }


def cmd_make_data(args) -> int:
    cfg = _load(args)
    paths = _paths(cfg)
    paths["out"].mkdir(parents=True, exist_ok=True)
    stamp = config_hash(cfg)
    world = data_mod.make_world(
        Rng(cfg.seed, STREAM_WORLD), n_meta=cfg.n_meta,
        children_per_meta=cfg.children_per_meta, embed_dim=cfg.embed_dim,
        data_dim=cfg.data_dim, tau_min=cfg.tau_min, tau_max=cfg.tau_max,
        spread=cfg.spread, meta_scale=cfg.meta_scale, coupling=cfg.coupling)
    world.provenance["config_hash"] = stamp
    records = data_mod.sample_records(Rng(cfg.seed, STREAM_RECORDS), world,
                                      cfg.records_per_concept)
    dataset = data_mod.build_grouped_dataset(
        records, cfg.tau_min, cfg.tau_max, cfg.target_groups,
        extra_provenance={"seed": cfg.seed, "config_hash": stamp})
    data_mod.write_world(paths["world"], world)
    data_mod.write_dataset(paths["records"], paths["groups"], dataset)
    histogram = Counter(dataset.group_sizes())
    hist_text = " ".join(f"{k}:{v}" for k, v in sorted(histogram.items()))
    flag = " (short of target)" if dataset.provenance["short_of_target"] else ""
    print(f"make-data: {len(records)} records, {len(dataset.groups)} groups{flag}, "
          f"size histogram {hist_text}, config {stamp}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    paths = _paths(cfg)
    dataset = data_mod.read_dataset(paths["records"], paths["groups"])
    stamp = config_hash(cfg)
    checkpoint_path = Path(args.checkpoint) if args.checkpoint else paths["checkpoint"]

    def writer(step, denoiser):
        periodic = checkpoint_path.with_name(f"{checkpoint_path.stem}_{step:06d}.json")
        save_checkpoint(periodic, denoiser, stamp, cfg.schedule_kind)

    result = train(dataset, cfg, Rng(cfg.seed, STREAM_TRAIN),
                   steps=args.steps, on_checkpoint=writer)
    save_checkpoint(checkpoint_path, result.denoiser, stamp, cfg.schedule_kind)
    with open(paths["loss"], "w") as fh:
        fh.write(f"# config={stamp}\n")
        fh.write("step,term1,term2,term3,total\n")
        for row in result.curve:
            cells = ",".join(repr(float(v)) for v in row[1:5])
            fh.write(f"{int(row[0])},{cells}\n")
    if result.diverged:
        print(f"train: diverged at step {result.steps_completed}; "
              f"last good checkpoint written to {checkpoint_path}", file=sys.stderr)
        return 3
    final = result.curve[-1][4] if len(result.curve) else float("nan")
    print(f"train: {result.steps_completed} steps of {cfg.loss} loss, "
          f"final batch loss {final:.6g}, checkpoint {checkpoint_path}, config {stamp}")
    return 0


def _build_prompts(cfg: ExperimentConfig, world) -> tuple[np.ndarray, list[int]]:
    """Deterministic prompt batch: a seeded permutation picks sample_metas
    meta families; every child concept of a picked family is one prompt."""
    rng = Rng(cfg.seed, STREAM_PROMPTS)
    n_meta = world.provenance["n_meta"]
    picked = rng.permutation(n_meta)[:min(cfg.sample_metas, n_meta)]
    by_meta: dict[int, list] = {}
    for c in world.concepts:
        by_meta.setdefault(c.meta_id, []).append(c)
    concept_ids = [c.id for meta in picked for c in by_meta[int(meta)]]
    embeddings = np.stack([world.concepts[i].embedding for i in concept_ids])
    return embeddings, concept_ids


def cmd_sample(args) -> int:
    cfg = _load(args)
    paths = _paths(cfg)
    stamp = config_hash(cfg)
    denoiser, ckpt_hash = load_checkpoint(args.checkpoint or paths["checkpoint"])
    if ckpt_hash != stamp:
        print(f"sample: checkpoint config {ckpt_hash} != current config {stamp}",
              file=sys.stderr)
        if not args.force:
            print("sample: pass --force to proceed anyway", file=sys.stderr)
            return 1
    world = data_mod.read_world(paths["world"])
    embeddings, concept_ids = _build_prompts(cfg, world)
    grid = build_grid(denoiser.schedule, cfg.n_steps, cfg.beta if args.mode == "shared" else 0.0)
    rng = Rng(cfg.seed, STREAM_SAMPLE)
    if args.mode == "shared":
        traces, cost = sampling_mod.run_batch(denoiser, embeddings, grid,
                                              cfg.threshold, cfg.omega, rng)
    else:
        groups = greedy_partition(embeddings, cfg.threshold)
        traces = sampling_mod.sample_independent(denoiser, grid, embeddings,
                                                 cfg.omega, rng)
        for gid, group in enumerate(groups):
            for member in group.member_ids:
                traces[member].group_id = gid
        cost = sampling_mod.CostReport.from_traces(traces, grid.n_steps)
    beta_used = grid.beta
    samples = sampling_mod.samples_from_traces(traces, beta_used, cfg.omega,
                                               cfg.seed, id_map=concept_ids)
    samples_path = Path(args.samples) if args.samples else paths["samples"]
    sampling_mod.write_samples(samples_path, samples, stamp)
    cost_path = Path(args.cost) if args.cost else paths["cost"]
    with open(cost_path, "w") as fh:
        fh.write(f"# config={stamp}\n")
        fh.write("independent_steps,shared_steps,saving_ratio\n")
        fh.write(f"{cost.independent_steps},{cost.shared_steps},{cost.saving_ratio!r}\n")
    if args.dump_traces:
        _write_traces(paths["traces"], traces, stamp)
    print(f"sample: {len(samples)} samples over {len(traces)} groups, mode {args.mode}, "
          f"beta {beta_used:.3g}, cost saving {cost.saving_ratio:.4f}, config {stamp}")
    return 0


def _write_traces(path, traces, stamp) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"_meta": {"config_hash": stamp}}) + "\n")
        for t in traces:
            fh.write(json.dumps({
                "group_id": t.group_id,
                "member_ids": list(t.member_ids),
                "shared": [[int(ts), z.tolist()] for ts, z in t.shared_prefix],
                "branches": [[[int(ts), z.tolist()] for ts, z in branch]
                             for branch in t.branches],
            }) + "\n")


def _read_cost(path) -> sampling_mod.CostReport | None:
    if not Path(path).exists():
        return None
    lines = Path(path).read_text().splitlines()
    rows = [line for line in lines if line and not line.startswith("#")]
    if len(rows) < 2:
        return None
    independent, shared, _ = rows[1].split(",")
    return sampling_mod.CostReport(int(independent), int(shared))


def cmd_eval(args) -> int:
    cfg = _load(args)
    paths = _paths(cfg)
    samples_path = Path(args.samples) if args.samples else paths["samples"]
    samples, samples_hash = sampling_mod.read_samples(samples_path)
    world = data_mod.read_world(paths["world"])
    dataset = data_mod.read_dataset(paths["records"], paths["groups"])
    lineage = {
        "samples": samples_hash,
        "world": world.provenance.get("config_hash", ""),
        "dataset": dataset.provenance.get("config_hash", ""),
    }
    if len(set(lineage.values())) > 1:
        print(f"eval: mixed artifact lineages {lineage}", file=sys.stderr)
        if not args.force:
            print("eval: pass --force to proceed anyway", file=sys.stderr)
            return 1
    cost = _read_cost(Path(args.cost) if args.cost else paths["cost"])
    beta = samples[0].beta if samples else cfg.beta
    result = metrics_mod.evaluate(samples, dataset, world, cost,
                                  model=args.model or cfg.loss,
                                  scheme=args.scheme, beta=beta)
    report_path = Path(args.report) if args.report else paths["report"]
    if report_path.exists():
        metrics_mod.append_report(report_path, [result.report])
    else:
        metrics_mod.write_report(report_path, [result.report], samples_hash)
    r = result.report
    print(f"eval: model {r.model} scheme {r.scheme} beta {r.beta:.3g} "
          f"frechet {r.frechet:.4f} alignment {r.alignment:.4f} "
          f"diversity {r.diversity:.4f} -> {report_path}")
    if result.skipped_prompt_ids:
        print(f"eval: skipped {len(result.skipped_prompt_ids)} unresolvable prompt ids: "
              f"{result.skipped_prompt_ids}", file=sys.stderr)
    return 0


def cmd_plot(args) -> int:
    cfg = _load(args)
    paths = _paths(cfg)
    report_path = Path(args.report) if args.report else paths["report"]
    rows, _ = metrics_mod.read_report(report_path)
    plot_dir = Path(args.plot_dir) if args.plot_dir else paths["plots"]
    if not rows:
        print("plot: report is empty, nothing to draw", file=sys.stderr)
        return 0
    plot_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in ("frechet", "alignment", "diversity", "cost_saving"):
        series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            value = getattr(row, metric)
            if value is None:
                continue
            series.setdefault(f"{row.model}/{row.scheme}", []).append((row.beta, value))
        if not series:
            continue
        svg = line_chart(series, f"{metric} vs sharing ratio", "beta", metric)
        out = plot_dir / f"{metric}_vs_beta.svg"
        out.write_text(svg)
        written.append(out.name)
    samples_path = Path(args.samples) if args.samples else paths["samples"]
    if samples_path.exists():
        samples, _ = sampling_mod.read_samples(samples_path)
        prompt_order = {pid: i for i, pid in
                        enumerate(sorted({s.prompt_id for s in samples}))}
        points = [(float(s.x0[0]), float(s.x0[1]), prompt_order[s.prompt_id])
                  for s in samples if s.x0.size >= 2]
        trace_paths = []
        if paths["traces"].exists():
            with open(paths["traces"]) as fh:
                for line in fh:
                    obj = json.loads(line)
                    if "_meta" in obj:
                        continue
                    prefix = [(z[1][0], z[1][1]) for z in obj["shared"] if len(z[1]) >= 2]
                    if len(prefix) > 1:
                        trace_paths.append(prefix)
        if points:
            svg = scatter_chart(points, "generated samples by prompt", trace_paths or None)
            out = plot_dir / "samples_scatter.svg"
            out.write_text(svg)
            written.append(out.name)
    print(f"plot: wrote {', '.join(written)} to {plot_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sagediff",
                     description="Shared diffusion sampling experiments at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-data", help="generate world, records and groups files")
    _add_config_flags(p)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("train", help="train a denoiser on the grouped dataset")
    _add_config_flags(p)
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.add_argument("--steps", type=int, help="override the training step budget")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate samples from a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", help="checkpoint to load")
    p.add_argument("--mode", choices=("shared", "independent"), default="shared")
    p.add_argument("--samples", help="samples output path")
    p.add_argument("--cost", help="cost report output path")
    p.add_argument("--dump-traces", action="store_true",
                   help="also write the full latent trajectories (large)")
    p.add_argument("--force", action="store_true",
                   help="proceed despite a checkpoint config mismatch")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="score a samples file into the report table")
    _add_config_flags(p)
    p.add_argument("--samples", help="samples file to score")
    p.add_argument("--cost", help="cost report to fold in")
    p.add_argument("--report", help="report CSV to append to")
    p.add_argument("--model", help="model label for the report row")
    p.add_argument("--scheme", default="shared", help="sampling scheme label")
    p.add_argument("--force", action="store_true",
                   help="proceed despite mixed artifact lineages")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render SVG charts from a report")
    _add_config_flags(p)
    p.add_argument("--report", help="report CSV to draw")
    p.add_argument("--samples", help="samples file for the scatter plot")
    p.add_argument("--plot-dir", help="directory for SVG output")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"sagediff: missing file: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sagediff: I/O error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, data_mod.WorldGenerationError, ArithmeticError,
            ZeroDivisionError) as exc:
        print(f"sagediff: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"sagediff: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
