"""Command-line entry points for the experiment pipeline."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import click

from .harness import (
    ExperimentPlan,
    cmd_attack,
    cmd_calibrate_bdd,
    cmd_evaluate,
    cmd_gen_data,
    cmd_report,
    cmd_train_detectors,
    cmd_train_nse,
    paths_for,
)


def _plan_from(ctx) -> ExperimentPlan:
    opts = ctx.obj
    if opts["plan_file"]:
        plan = ExperimentPlan.from_json(Path(opts["plan_file"]).read_text())
    else:
        plan = ExperimentPlan()
    overrides = {}
    if opts["case"]:
        overrides["case"] = opts["case"]
    if opts["region"]:
        overrides["region"] = opts["region"]
    if opts["seed"] is not None:
        overrides.update(seed_a=opts["seed"] + 1, seed_b=opts["seed"] + 2,
                         attack_seed=opts["seed"] + 3)
    if opts["workers"] is not None:
        overrides["workers"] = opts["workers"]
    if opts["out"]:
        overrides["out_dir"] = opts["out"]
    if opts["paper_scale"]:
        overrides["paper_scale"] = True
    return replace(plan, **overrides) if overrides else plan


@click.group()
@click.option("--plan", "plan_file", type=click.Path(exists=True), default=None,
              help="JSON experiment plan; flags below override its fields.")
@click.option("--case", default=None, help="Builtin case name or case file path.")
@click.option("--region", default=None, help="Builtin region name or region file path.")
@click.option("--seed", type=int, default=None, help="Base seed for all stages.")
@click.option("--workers", type=int, default=None,
              help="Worker processes (default: FDIBENCH_WORKERS or 1).")
@click.option("--out", default=None, help="Output directory for run artifacts.")
@click.option("--paper-scale", is_flag=True,
              help="Full-scale datasets (105120 samples) and reference network size.")
@click.pass_context
def main(ctx, plan_file, case, region, seed, workers, out, paper_scale):
    """Grid attack-evasion workbench: data synthesis, substitute training,
    attack generation and detector scoring."""
    ctx.obj = {"plan_file": plan_file, "case": case, "region": region,
               "seed": seed, "workers": workers, "out": out,
               "paper_scale": paper_scale}


def _echo(msg):
    click.echo(f"  {msg}")


@main.command("gen-data")
@click.pass_context
def gen_data(ctx):
    """Generate scenario datasets A and B with estimated states."""
    hashes = cmd_gen_data(_plan_from(ctx), _echo)
    for k, v in hashes.items():
        click.echo(f"{k}: {v}")


@main.command("train-nse")
@click.pass_context
def train_nse_cmd(ctx):
    """Train the substitute state estimator on dataset A."""
    meta = cmd_train_nse(_plan_from(ctx), _echo)
    click.echo(f"holdout rmse: {meta['report']['holdout_rmse']:.6f}")


@main.command("calibrate-bdd")
@click.pass_context
def calibrate_bdd(ctx):
    """Calibrate the conventional residual-test thresholds on dataset B."""
    thr = cmd_calibrate_bdd(_plan_from(ctx), _echo)
    click.echo(f"tau_2={thr.tau_2:.6g} tau_inf={thr.tau_inf:.6g} "
               f"(far_target={thr.far_target})")


@main.command("train-detectors")
@click.pass_context
def train_detectors(ctx):
    """Build the labelled dataset, calibrate windowed detectors, train the classifier."""
    out = cmd_train_detectors(_plan_from(ctx), _echo)
    for name, info in out.items():
        click.echo(f"{name}: {info}")


@main.command("attack")
@click.pass_context
def attack(ctx):
    """Generate attack batches over the epsilon/selection grid."""
    out = cmd_attack(_plan_from(ctx), _echo)
    click.echo(f"attacked {out['attacked']} samples over {out['grid']} grid points")


@main.command("evaluate")
@click.pass_context
def evaluate(ctx):
    """Score all detectors and write the report tables."""
    plan = _plan_from(ctx)
    rows = cmd_evaluate(plan, _echo)
    click.echo(f"wrote {paths_for(plan).report_csv} ({len(rows)} rows)")


@main.command("report")
@click.pass_context
def report(ctx):
    """Render SVG figures from the evaluation tables."""
    for path in cmd_report(_plan_from(ctx), _echo):
        click.echo(path)


if __name__ == "__main__":
    main()
