"""
Command line for PED.

    ped estat FEATURES... --labels FILE      dependence profile (JSON)
    ped select PROFILE --k K                 pruning policy (JSON)
    ped toynet train|ped-run|grad-check|gen-data
    ped compare                              strategy comparison (CSV)

Run configuration comes from RunConfig defaults, then `--config FILE`, then
explicit flags. stdout only ever carries the JSON/CSV payload.
"""

import copy
import functools
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from pydantic import ValidationError

from config import get_settings
from ped_prune import __version__
from ped_prune.errors import ConfigError, GradCheckFailed, PedError
from ped_prune.functions.adapter.toynet import DATA_STREAM, ToyNetAdapter
from ped_prune.functions.energy.dependence import dependence_profile
from ped_prune.functions.io.checkpoint import save_checkpoint
from ped_prune.functions.io.dumps import load_feature_dump, load_labels, write_feature_dump, write_labels
from ped_prune.functions.io.reports import (
    STAGE_CSV_HEADER,
    dumps_json,
    emit_text,
    format_csv,
    read_config_file,
    read_policy,
    stage_rows,
    write_json,
)
from ped_prune.functions.ped.engine import offline_step, run_ped
from ped_prune.functions.toynet.data import class_counts, gen_synthetic
from ped_prune.functions.toynet.network import grad_check, init_network, with_policy
from ped_prune.types import Batch, FeatureMatrix, LabelVector, PruningPolicy, RunConfig

logger = logging.getLogger("ped-prune.cli")

settings = get_settings()

STRATEGIES = ["cluster-head", "top-k", "random"]
COMPARE_CSV_HEADER = [
    "strategy", "seed", "stage", "remaining_params_pct", "remaining_flops_pct", "accuracy",
]


# ============================================================================
# CONFIGURATION
# ============================================================================

def _int_list(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _str_list(text: Optional[str]) -> Optional[List[str]]:
    if text is None:
        return None
    return [part.strip() for part in text.split(",") if part.strip()]


def build_config(config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    """
    Effective RunConfig: defaults < config file < flags.

    Args:
        config_path: optional JSON config file
        overrides: dotted field path -> flag value; None means "not given"

    Raises:
        ConfigError naming the failing field
    """
    payload = read_config_file(config_path) if config_path else {}
    payload.setdefault("seed", settings.default_seed)
    if settings.default_subsample_cap is not None:
        payload.setdefault("dependence", {}).setdefault("subsample_cap", settings.default_subsample_cap)

    for dotted, value in overrides.items():
        if value is None:
            continue
        node = payload
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config field {key!r} must be an object")
        node[leaf] = value

    try:
        config = RunConfig.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"config field {field}: {first['msg']}") from None
    logger.debug(f"Effective config: {config.model_dump(mode='json')}")
    return config


def _config_json(config: RunConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


# ============================================================================
# SHARED OPTIONS
# ============================================================================

def common_options(fn):
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="Write the payload here instead of stdout.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                      help="Run seed (u64).")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                      help="JSON run configuration; flags override it.")(fn)
    return fn


# (flags, parameter name, dotted config path, click type)
_TOY_OPTIONS = [
    (("--units",), "units", "network.units", int),
    (("--width",), "width", "network.width", int),
    (("--growth",), "growth", "network.growth", int),
    (("--classes", "--p"), "classes", "network.classes", int),
    (("--input-dim",), "input_dim", "network.input_dim", int),
    (("--composition",), "composition", "network.composition", click.Choice(["residual", "dense"])),
    (("--activation",), "activation", "network.activation", click.Choice(["relu", "linear"])),
    (("--kind",), "kind", "data.kind", click.Choice(["blobs", "rings"])),
    (("--n",), "n", "data.n", int),
    (("--noise",), "noise", "data.noise", float),
    (("--test-fraction",), "test_fraction", "data.test_fraction", float),
    (("--epochs",), "epochs", "training.epochs", int),
    (("--lr",), "lr", "training.lr", float),
    (("--batch-size",), "batch_size", "training.batch_size", int),
    (("--retrain-epochs",), "retrain_epochs", "training.retrain_epochs", int),
]

_PED_OPTIONS = [
    (("--stages",), "stages", "schedule.n_stages", int),
    (("--rule",), "rule", "schedule.rule", click.Choice(["decrement", "fraction"])),
    (("--keep-ratio",), "keep_ratio", "schedule.keep_ratio", float),
    (("--head-mode",), "head_mode", "head_mode", click.Choice(["max", "centroid"])),
    (("--variant",), "variant", "dependence.variant", click.Choice(["v", "u"])),
    (("--subsample",), "subsample", "dependence.subsample_cap", int),
    (("--dependence-split",), "dependence_split", "dependence.split", click.Choice(["train", "test"])),
    (("--label-source",), "label_source", "dependence.label_source", click.Choice(["predicted", "true"])),
]


def _table_options(table):
    def decorate(fn):
        for flags, name, _, kind in reversed(table):
            fn = click.option(*flags, name, type=kind, default=None)(fn)
        return fn
    return decorate


toy_options = _table_options(_TOY_OPTIONS)
ped_options = _table_options(_PED_OPTIONS)


def _overrides(kwargs: Dict[str, Any], *tables) -> Dict[str, Any]:
    """Pop table options out of `kwargs` as dotted config overrides."""
    out = {}
    for table in tables:
        for _, name, dotted, _ in table:
            out[dotted] = kwargs.pop(name, None)
    return out


def handle_errors(fn):
    """Turn PedError into a stderr message and the error's exit code."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PedError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error ({type(e).__name__}): {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


# ============================================================================
# COMMANDS
# ============================================================================

@click.group()
@click.version_option(__version__, prog_name="ped")
def cli():
    """Prune skip-units of a network by energy dependence."""


@cli.command("estat")
@click.argument("features", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", type=click.Choice(["v", "u"]), default=None)
@click.option("--subsample", type=int, default=None, help="Stratified subsample cap.")
@click.option("--policy", "policy_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Previous policy; dump i belongs to its i-th active unit.")
@click.option("--stage", type=click.IntRange(min=0), default=None)
@common_options
@handle_errors
def cmd_estat(features, labels_path, variant, subsample, policy_path, stage, config_path, seed, out):
    """Energy-dependence profile of unit feature dumps."""
    config = build_config(config_path, {
        "seed": seed,
        "dependence.variant": variant,
        "dependence.subsample_cap": subsample,
    })
    labels: LabelVector = load_labels(labels_path)
    matrices: List[FeatureMatrix] = [load_feature_dump(path) for path in features]

    if policy_path:
        previous: PruningPolicy = read_policy(policy_path)
        if len(previous.active_set) != len(matrices):
            raise ConfigError(
                f"{policy_path} has {len(previous.active_set)} active units but {len(matrices)} dumps were given"
            )
        indices, n_units = previous.active_set, previous.n_units
        stage = previous.stage + 1 if stage is None else stage
    else:
        indices, n_units = list(range(len(matrices))), len(matrices)
        stage = stage or 0

    profile = dependence_profile(
        matrices,
        labels,
        variant=config.dependence.variant,
        subsample_cap=config.dependence.subsample_cap,
        seed=config.seed,
        unit_indices=indices,
        stage=stage,
        n_units=n_units,
    )
    logger.info(f"Profiled {len(matrices)} units on {profile.n_used} samples")
    write_json({
        **profile.model_dump(mode="json"),
        "inputs": {"features": list(features), "labels": labels_path, "policy": policy_path},
        "config": _config_json(config),
    }, out)


@cli.command("select")
@click.argument("profile_path", metavar="PROFILE", type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=None, help="Units to keep.")
@click.option("--strategy", type=click.Choice(STRATEGIES), default=None)
@click.option("--head-mode", type=click.Choice(["max", "centroid"]), default=None)
@common_options
@handle_errors
def cmd_select(profile_path, k, strategy, head_mode, config_path, seed, out):
    """Keep K units of a profile; writes the pruning policy."""
    config = build_config(config_path, {"seed": seed, "k": k, "strategy": strategy, "head_mode": head_mode})
    if config.k is None:
        raise ConfigError("--k is required (flag or config field 'k')")
    offline_step(
        profile_path,
        config.k,
        config.strategy,
        config.seed,
        out=out,
        head_mode=config.head_mode,
        meta={"config": _config_json(config)},
    )


@cli.group("toynet")
def toynet():
    """Train, prune and check the built-in toy skip network."""


@toynet.command("train")
@toy_options
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None, help="Save a PEDN checkpoint.")
@click.option("--dump-dir", type=click.Path(file_okay=False), default=None,
              help="Write per-unit PEDF dumps and a PEDL label file of the dependence split.")
@common_options
@handle_errors
def cmd_train(checkpoint, dump_dir, config_path, seed, out, **kwargs):
    """Train the toy network from scratch."""
    config = build_config(config_path, {"seed": seed, **_overrides(kwargs, _TOY_OPTIONS)})
    adapter = ToyNetAdapter.from_config(config)
    metrics = adapter.pretrain()

    payload: Dict[str, Any] = {
        **metrics.model_dump(mode="json"),
        "param_count": adapter.count_params(),
        "flop_count": adapter.count_flops(),
    }
    if checkpoint:
        payload["checkpoint"] = str(save_checkpoint(checkpoint, adapter.net))
    if dump_dir:
        directory = Path(dump_dir)
        directory.mkdir(parents=True, exist_ok=True)
        dumps = []
        for unit, matrix in zip(adapter.policy.active_set, adapter.extract_feature_maps()):
            dumps.append(str(write_feature_dump(directory / f"unit{unit:03d}.pedf", matrix)))
        payload["dumps"] = dumps
        payload["labels"] = str(write_labels(directory / "labels.pedl", adapter.dependence_labels()))
        logger.info(f"Wrote {len(dumps)} feature dumps to {directory}")
    payload["config"] = _config_json(config)
    write_json(payload, out)


@toynet.command("ped-run")
@toy_options
@ped_options
@click.option("--strategy", type=click.Choice(STRATEGIES), default=None)
@click.option("--k-sequence", default=None, help="Explicit K per stage, comma separated.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Stage CSV path (defaults to --out with a .csv suffix).")
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None, help="Save the pruned network.")
@click.option("--timings", is_flag=True, help="Include per-stage wall times.")
@common_options
@handle_errors
def cmd_ped_run(strategy, k_sequence, csv_path, checkpoint, timings, config_path, seed, out, **kwargs):
    """Pretrain the toy network, then run the PED stages."""
    config = build_config(config_path, {
        "seed": seed,
        "strategy": strategy,
        "schedule.k_sequence": _int_list(k_sequence),
        **_overrides(kwargs, _TOY_OPTIONS, _PED_OPTIONS),
    })
    adapter = ToyNetAdapter.from_config(config)
    baseline = adapter.pretrain()
    baseline_payload = {
        **baseline.model_dump(mode="json"),
        "param_count": adapter.count_params(),
        "flop_count": adapter.count_flops(),
    }
    reports = run_ped(
        adapter,
        config.schedule,
        strategy=config.strategy,
        seed=config.seed,
        head_mode=config.head_mode,
        variant=config.dependence.variant,
        subsample_cap=config.dependence.subsample_cap,
    )
    if checkpoint:
        save_checkpoint(checkpoint, adapter.net)

    exclude = None if timings else {"wall_time"}
    write_json({
        "baseline": baseline_payload,
        "stages": [report.model_dump(mode="json", exclude=exclude) for report in reports],
        "config": _config_json(config),
    }, out)

    csv_target = csv_path or (str(Path(out).with_suffix(".csv")) if out else None)
    if csv_target:
        emit_text(format_csv(STAGE_CSV_HEADER, stage_rows(reports)), csv_target)
    else:
        logger.info("No --out or --csv given; stage CSV not written")


@toynet.command("grad-check")
@toy_options
@click.option("--alphas", default=None, help="Pruning flags per unit, comma separated (default all 1).")
@click.option("--samples", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--eps", type=float, default=None)
@click.option("--tolerance", type=float, default=None)
@common_options
@handle_errors
def cmd_grad_check(alphas, samples, eps, tolerance, config_path, seed, out, **kwargs):
    """Compare analytic gradients with central differences (exit 3 on failure)."""
    config = build_config(config_path, {
        "seed": seed,
        "grad_eps": eps,
        "grad_tolerance": tolerance,
        **_overrides(kwargs, _TOY_OPTIONS),
    })
    net = init_network(config.network)
    if alphas is not None:
        try:
            policy = PruningPolicy(alphas=_int_list(alphas))
        except ValidationError as e:
            raise ConfigError(f"--alphas: {e.errors()[0]['msg']}") from None
        net = with_policy(net, policy)
    batch: Batch = gen_synthetic(
        config.data.kind,
        max(samples, config.network.classes),
        config.network.classes,
        config.network.input_dim,
        config.data.noise,
        seed=[config.seed, DATA_STREAM],
    )
    error = float(grad_check(net, batch, config.grad_eps))
    passed = bool(error < config.grad_tolerance)
    write_json({
        "max_relative_error": error,
        "tolerance": config.grad_tolerance,
        "passed": passed,
        "config": _config_json(config),
    }, out)
    if not passed:
        raise GradCheckFailed(f"max relative error {error:.3e} >= {config.grad_tolerance:.1e}")


@toynet.command("gen-data")
@toy_options
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@common_options
@handle_errors
def cmd_gen_data(out_dir, config_path, seed, out, **kwargs):
    """Write a synthetic dataset as features.pedf + labels.pedl."""
    config = build_config(config_path, {"seed": seed, **_overrides(kwargs, _TOY_OPTIONS)})
    batch = gen_synthetic(
        config.data.kind,
        config.data.n,
        config.network.classes,
        config.network.input_dim,
        config.data.noise,
        seed=[config.seed, DATA_STREAM],
    )
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    features = write_feature_dump(directory / "features.pedf", FeatureMatrix(data=batch.inputs, dtype="f64"))
    labels = write_labels(directory / "labels.pedl", LabelVector(labels=batch.targets))
    write_json({
        "features": str(features),
        "labels": str(labels),
        "class_counts": class_counts(config.data.n, config.network.classes).tolist(),
        "config": _config_json(config),
    }, out)


@cli.command("compare")
@toy_options
@ped_options
@click.option("--seeds", default=None, help="Comma-separated seeds (default 0,1,2).")
@click.option("--strategies", default=None, help="Comma-separated strategies (default all).")
@click.option("--k-sequence", default=None, help="Explicit K per stage, comma separated.")
@common_options
@handle_errors
def cmd_compare(seeds, strategies, k_sequence, config_path, seed, out, **kwargs):
    """Run the same schedule per seed and strategy; CSV of remaining cost and accuracy."""
    config = build_config(config_path, {
        "seed": seed,
        "seeds": _int_list(seeds),
        "strategies": _str_list(strategies),
        "schedule.k_sequence": _int_list(k_sequence),
        **_overrides(kwargs, _TOY_OPTIONS, _PED_OPTIONS),
    })
    logger.info(f"Effective config: {dumps_json(_config_json(config)).strip()}")

    rows = {strategy: [] for strategy in config.strategies}
    for run_seed in config.seeds:
        seeded = RunConfig.model_validate({**config.model_dump(), "seed": run_seed})
        pretrained = ToyNetAdapter.from_config(seeded)
        pretrained.pretrain()
        for strategy in config.strategies:
            adapter = copy.deepcopy(pretrained)
            reports = run_ped(
                adapter,
                seeded.schedule,
                strategy=strategy,
                seed=run_seed,
                head_mode=seeded.head_mode,
                variant=seeded.dependence.variant,
                subsample_cap=seeded.dependence.subsample_cap,
            )
            for report in reports:
                rows[strategy].append([
                    strategy,
                    run_seed,
                    report.stage,
                    100.0 - report.param_reduction_pct,
                    100.0 - report.flop_reduction_pct,
                    report.test_accuracy,
                ])
    emit_text(format_csv(COMPARE_CSV_HEADER, [row for strategy in config.strategies for row in rows[strategy]]), out)


def main():
    cli(prog_name="ped")
