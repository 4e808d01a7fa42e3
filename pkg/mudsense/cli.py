"""
CLI interface for running mud sensing experiments
"""

import json
import math
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from .config import ExperimentConfig, load_app_config, load_experiment_config
from .exceptions import ConfigError, MudSenseError
from .logger import get_logger, setup_logging
from .reporting import RunSummary, write_summary
from .scenarios import ScenarioManager, slug

logger = get_logger(__name__)

EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def print_json(data, indent=2):
    """Print data as formatted JSON"""
    click.echo(json.dumps(data, indent=indent, default=str))


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def resolve_output_dir(config: ExperimentConfig, out: Optional[str], app_config: dict) -> Path:
    """--out wins, then the experiment file, then <output_dir>/<scenario>"""
    if out:
        return Path(out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(app_config['output_dir']) / slug(config.scenario)


def _prepare(ctx, config_path: str, seed: Optional[int], out: Optional[str]):
    app_config = ctx.obj['app_config']
    try:
        config = load_experiment_config(config_path)
        if seed is not None:
            config = config.model_copy(update={'seed': seed})
    except (ConfigError, ValidationError) as e:
        click.echo(f"✗ {e}", err=True)
        ctx.exit(EXIT_CONFIG)

    out_dir = resolve_output_dir(config, out, app_config)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(str(out_dir / app_config['log_file']) if app_config.get('log_file') else None,
                  app_config['log_level'], app_config['enable_console'])
    return config, out_dir


def _plots_enabled(ctx, plots: Optional[str]) -> bool:
    if plots is None:
        return bool(ctx.obj['app_config']['plots'])
    return plots == 'on'


def _execute(ctx, config: ExperimentConfig, out_dir: Path, plots: bool, sweep: bool) -> RunSummary:
    manager = ScenarioManager(config, out_dir, plots=plots,
                              float_format=ctx.obj['app_config']['float_format'])
    try:
        if sweep:
            summary = manager.sweep()
            summary.artifacts.append(str(write_summary(summary, out_dir)))
        else:
            summary = manager.run()
    except ConfigError as e:
        click.echo(f"✗ {e}", err=True)
        ctx.exit(EXIT_CONFIG)
    except (MudSenseError, ValueError, RuntimeError, OSError) as e:
        logger.error(f"Run failed: {e}", extra={'event': 'run_error', 'scenario': config.scenario})
        click.echo(f"✗ Run failed: {e}", err=True)
        ctx.exit(EXIT_RUNTIME)
    return summary


@click.group()
@click.option('--app-config', default='./config/app_config.yaml',
              help='Application configuration file path')
@click.pass_context
def cli(ctx, app_config):
    """Proprioceptive mud sensing simulator"""
    ctx.ensure_object(dict)
    ctx.obj['app_config'] = load_app_config(app_config)


@cli.command('run')
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help='Override the experiment seed')
@click.option('--out', 'out', type=click.Path(file_okay=False), help='Output directory')
@click.option('--plots', type=click.Choice(['on', 'off']), help='Write SVG plots')
@click.option('--json', 'as_json', is_flag=True, help='Print headline numbers as JSON')
@click.pass_context
def run(ctx, config_path, seed, out, plots, as_json):
    """Run the scenario an experiment file describes"""
    config, out_dir = _prepare(ctx, config_path, seed, out)
    summary = _execute(ctx, config, out_dir, _plots_enabled(ctx, plots), sweep=False)

    click.echo(f"✓ Scenario '{config.scenario}' finished, artifacts in {out_dir}")
    if as_json:
        print_json(_json_safe(summary.headline))
    else:
        click.echo(summary.render())


@cli.command('sweep')
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=int, help='Override the experiment seed')
@click.option('--out', 'out', type=click.Path(file_okay=False), help='Output directory')
@click.option('--plots', type=click.Choice(['on', 'off']), help='Write SVG plots per cell')
@click.pass_context
def sweep(ctx, config_path, seed, out, plots):
    """Run every cell of the experiment file's parameter grid"""
    config, out_dir = _prepare(ctx, config_path, seed, out)
    if config.sweep is None:
        click.echo(f"✗ {config_path} has no sweep block", err=True)
        ctx.exit(EXIT_CONFIG)
    summary = _execute(ctx, config, out_dir, _plots_enabled(ctx, plots), sweep=True)

    failed = summary.headline['failed_cells']
    mark = '✓' if failed == 0 else '✗'
    click.echo(f"{mark} Sweep finished: {summary.headline['cells']} cell(s), {failed} failed, "
               f"table in {out_dir / 'sweep.csv'}")
    click.echo(summary.render())


def main():
    cli(obj={})


if __name__ == '__main__':
    main()
