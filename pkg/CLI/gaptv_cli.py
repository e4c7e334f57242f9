from typing import List
import logging
import sys

import click
from rich.console import Console
from rich.table import Table

from bench.benchmark import (
    DEFAULT_N_VALUES, DEFAULT_TRIALS, SWEEP_N_VALUES, SWEEP_TRIALS,
)
from gaptv import __version__
from gaptv.data_and_types import (
    FitConfig, FitMethod, GapConfig, GapMode, LambdaSelection, LossKind, SolverSettings,
)
from gaptv.exceptions import InvalidArgumentError
from CLI.error_mapping.error_mappers import (
    CliError, CliErrorSeverity, GapTVErrorMapper, exit_code_for,
)
from CLI.executors.benchmark import BenchmarkExecutor, QScanExecutor
from CLI.executors.crime_recipe import CrimeRecipeExecutor
from CLI.executors.fit import FitExecutor
from CLI.executors.gap_scan import GapScanExecutor
from CLI.executors.predict import PredictExecutor
from CLI.utils.config import (
    DEFAULT_CONFIG, command_default_map, config_dir, init_config_dir, load_config,
)

logger = logging.getLogger(__name__)

_LOG_HANDLER_TAG = '_gaptv_handler'

METHOD_CHOICES = [m.value for m in FitMethod]
GAP_MODE_CHOICES = [m.value for m in GapMode]
LOSS_CHOICES = [k.value for k in LossKind]


def display_results(changes: List[str], errors: List[CliError], console: Console):
    """Display command results: errors as a table, then the changes"""
    if errors:
        error_table = Table(show_header=True)
        error_table.add_column("Severity")
        error_table.add_column("Location")
        error_table.add_column("Message")
        error_table.add_column("Suggestion")
        for error in errors:
            colour = "red" if error.severity == CliErrorSeverity.ERROR else "yellow"
            error_table.add_row(
                f"[{colour}]{error.severity.value}[/{colour}]",
                error.source_location.describe() if error.source_location else "",
                error.message + (f"\n{error.details}" if error.details else ""),
                error.suggestion or ""
            )
        console.print(error_table)

    for change in changes:
        console.print(f"[green]✓[/green] {change}")


def finish(ctx: click.Context, changes: List[str], errors: List[CliError]):
    display_results(changes, errors, Console(stderr=True))
    ctx.exit(exit_code_for(errors))


def setup_logging(debug: bool = False):
    """File handler at DEBUG under the config dir and a WARNING console handler"""
    log_file = config_dir() / 'logs' / 'gaptv.log'
    log_file.parent.mkdir(parents=True, exist_ok=True)
    root_logger = logging.getLogger()

    # replace handlers from an earlier invocation in this process
    for handler in list(root_logger.handlers):
        if getattr(handler, _LOG_HANDLER_TAG, None) is not None:
            root_logger.removeHandler(handler)
            handler.close()

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(
        logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

    for handler in (file_handler, console_handler):
        setattr(handler, _LOG_HANDLER_TAG, True)
        root_logger.addHandler(handler)
    root_logger.setLevel(logging.DEBUG if debug else logging.INFO)


def version_callback(ctx, param, value):
    """Print version information"""
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"GapTV CLI v{__version__}")
    ctx.exit()


def gap_options(func):
    func = click.option('--gap-mode', type=click.Choice(GAP_MODE_CHOICES),
                        default=GapMode.PER_CELL_NULL.value, show_default=True,
                        help='Gap statistic variant')(func)
    func = click.option('--q-max', type=int, default=50, show_default=True,
                        help='Largest candidate grid size')(func)
    func = click.option('--q-min', type=int, default=2, show_default=True,
                        help='Smallest candidate grid size')(func)
    return func


def fit_options(func):
    func = click.option('--max-iters', type=int, default=10000, show_default=True,
                        help='Solver iteration budget per lambda')(func)
    func = click.option('--tol', type=float, default=1e-8, show_default=True,
                        help='Solver residual tolerance')(func)
    func = click.option('--seed', type=int, default=0, show_default=True,
                        help='Seed for fold assignment')(func)
    func = click.option('--lambda-min-ratio', type=float, default=1e-4, show_default=True,
                        help='Smallest lambda as a fraction of the largest')(func)
    func = click.option('--n-lambda', type=int, default=50, show_default=True,
                        help='Number of lambda values on the path')(func)
    func = click.option('--folds', type=int, default=5, show_default=True,
                        help='Cross-validation folds for lambda')(func)
    return gap_options(func)


def column_options(func):
    func = click.option('--y-column', default='y', show_default=True)(func)
    func = click.option('--x2-column', default='x2', show_default=True)(func)
    func = click.option('--x1-column', default='x1', show_default=True)(func)
    return func


def build_fit_config(q_min, q_max, gap_mode, folds, n_lambda, lambda_min_ratio, seed, tol,
                     max_iters, method=FitMethod.GAPTV.value,
                     lambda_selection=LambdaSelection.CV.value, fixed_q=None,
                     crisp_q=None) -> FitConfig:
    return FitConfig(
        gap=GapConfig(q_min=q_min, q_max=q_max, mode=GapMode(gap_mode)),
        folds=folds, n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio,
        solver=SolverSettings(tol=tol, max_iters=max_iters),
        method=FitMethod(method), seed=seed,
        lambda_selection=LambdaSelection(lambda_selection),
        fixed_q=fixed_q, crisp_q=crisp_q)


def config_or_exit(ctx: click.Context, **kwargs) -> FitConfig:
    try:
        return build_fit_config(**kwargs)
    except InvalidArgumentError as e:
        finish(ctx, [], [GapTVErrorMapper().map_error(e)])


def _parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got '{text}'")


@click.group()
@click.option('--debug/--no-debug', default=False, help='Enable debug mode')
@click.option('--version', is_flag=True, callback=version_callback,
              expose_value=False, is_eager=True, help='Show version information')
@click.pass_context
def main(ctx, debug):
    """GapTV: interpretable piecewise-constant models over two features

    Chooses a quantile grid with the gap statistic, fits cell values by
    total-variation denoising and reports plateaus and AIC.
    """
    try:
        init_config_dir()
        setup_logging(debug)
        ctx.default_map = command_default_map(load_config(), main.commands)
        if debug:
            click.echo(click.style("Debug mode enabled", fg="yellow"), err=True)
    except OSError as e:
        click.echo(click.style(f"\nError during initialization: {str(e)}", fg="red"), err=True)
        sys.exit(1)


@main.command()
def help():
    """Display help information about gaptv commands"""
    click.echo("\nGapTV CLI - gap-statistic grids with total-variation fits\n")
    click.echo("Commands:")
    click.echo("  fit           Fit a model to x1,x2,y CSV data and write model JSON")
    click.echo("  predict       Predict with a saved model at x1,x2 points")
    click.echo("  gap-scan      Score candidate grid sizes with the gap statistic")
    click.echo("  benchmark     Compare methods on synthetic plateau worlds")
    click.echo("  qscan         Accuracy of GapTV at every fixed grid size")
    click.echo("  crime-recipe  Bin lat/lon events, model log counts, compare methods")
    click.echo("  init-config   Rewrite the configuration file with defaults")
    click.echo(f"\nConfiguration: {config_dir() / 'config.yaml'}")
    click.echo("Run 'gaptv COMMAND --help' for the options of a command.")


@main.command()
@click.argument('data', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', default='model.json', show_default=True, help='Model JSON path')
@click.option('--loss', type=click.Choice(LOSS_CHOICES), default='gaussian', show_default=True)
@click.option('--method', type=click.Choice(METHOD_CHOICES), default='gaptv', show_default=True)
@click.option('--lambda-selection', type=click.Choice([s.value for s in LambdaSelection]),
              default='cv', show_default=True)
@click.option('--fixed-q', type=int, default=None, help='Skip the gap statistic and use this q')
@click.option('--crisp-q', type=int, default=None, help='q for crisp_fixed_q (default min(n, 100))')
@fit_options
@column_options
@click.pass_context
def fit(ctx, data, out, loss, method, lambda_selection, fixed_q, crisp_q, q_min, q_max,
        gap_mode, folds, n_lambda, lambda_min_ratio, seed, tol, max_iters,
        x1_column, x2_column, y_column):
    """Fit a model to a CSV of x1, x2, y observations"""
    config = config_or_exit(ctx, q_min=q_min, q_max=q_max, gap_mode=gap_mode, folds=folds,
                            n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio, seed=seed,
                            tol=tol, max_iters=max_iters, method=method,
                            lambda_selection=lambda_selection, fixed_q=fixed_q, crisp_q=crisp_q)
    executor = FitExecutor(data, out, config, LossKind(loss), (x1_column, x2_column, y_column))
    changes, errors = executor.execute_fit()
    if executor.summary:
        click.echo(executor.summary)
    finish(ctx, changes, errors)


@main.command()
@click.argument('model', type=click.Path(exists=True, dir_okay=False))
@click.argument('points', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', default='predictions.csv', show_default=True)
@click.option('--x1-column', default='x1', show_default=True)
@click.option('--x2-column', default='x2', show_default=True)
@click.pass_context
def predict(ctx, model, points, out, x1_column, x2_column):
    """Write x1, x2, yhat for every point in a CSV"""
    executor = PredictExecutor(model, points, out, (x1_column, x2_column))
    changes, errors = executor.execute_predict()
    finish(ctx, changes, errors)


@main.command('gap-scan')
@click.argument('data', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', default=None, help='CSV path for the scan')
@click.option('--loss', type=click.Choice(LOSS_CHOICES), default='gaussian', show_default=True)
@gap_options
@column_options
@click.pass_context
def gap_scan(ctx, data, out, loss, q_min, q_max, gap_mode, x1_column, x2_column, y_column):
    """Score every candidate q with the gap statistic"""
    try:
        config = GapConfig(q_min=q_min, q_max=q_max, mode=GapMode(gap_mode))
    except InvalidArgumentError as e:
        finish(ctx, [], [GapTVErrorMapper().map_error(e)])
    executor = GapScanExecutor(data, out, config, LossKind(loss), (x1_column, x2_column, y_column))
    changes, errors = executor.execute_scan()
    finish(ctx, changes, errors)


@main.command()
@click.option('--out-dir', '-o', default='benchmark', show_default=True)
@click.option('--methods', '-m', type=click.Choice(METHOD_CHOICES), multiple=True,
              help='Methods to compare (repeatable; default gaptv, gapcrisp, crisp_fixed_q)')
@click.option('--n-values', default=','.join(str(n) for n in DEFAULT_N_VALUES),
              show_default=True, help='Comma-separated sample sizes')
@click.option('--trials', type=int, default=DEFAULT_TRIALS, show_default=True)
@click.option('--jobs', type=int, default=1, show_default=True, help='Worker processes')
@click.option('--full-sweep', is_flag=True,
              help=f'{SWEEP_TRIALS} trials at n in {",".join(map(str, SWEEP_N_VALUES))}')
@click.option('--deterministic', is_flag=True, help='Record zero wall time for byte-stable reports')
@click.option('--export-truth', is_flag=True, help='Write the first trial truth grid as CSV and PGM')
@fit_options
@click.pass_context
def benchmark(ctx, out_dir, methods, n_values, trials, jobs, full_sweep, deterministic,
              export_truth, q_min, q_max, gap_mode, folds, n_lambda, lambda_min_ratio, seed,
              tol, max_iters):
    """Compare methods on synthetic plateau worlds"""
    config = config_or_exit(ctx, q_min=q_min, q_max=q_max, gap_mode=gap_mode, folds=folds,
                            n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio, seed=seed,
                            tol=tol, max_iters=max_iters)
    selected = [FitMethod(m) for m in methods] or [
        FitMethod.GAPTV, FitMethod.GAPCRISP, FitMethod.CRISP_FIXED_Q]
    sizes = _parse_int_list(n_values)
    if full_sweep:
        sizes, trials = list(SWEEP_N_VALUES), SWEEP_TRIALS
    executor = BenchmarkExecutor(out_dir, selected, sizes, trials, seed, config, jobs=max(jobs, 1),
                                 deterministic=deterministic, export=export_truth)
    changes, errors = executor.execute_benchmark()
    finish(ctx, changes, errors)


@main.command()
@click.option('--out', '-o', default='qscan.csv', show_default=True)
@click.option('--n', 'n_obs', type=int, default=2000, show_default=True, help='Sample size')
@click.option('--world-seed', type=int, default=None, help='Seed of the plateau world')
@fit_options
@click.pass_context
def qscan(ctx, out, n_obs, world_seed, q_min, q_max, gap_mode, folds, n_lambda,
          lambda_min_ratio, seed, tol, max_iters):
    """Fit GapTV at every q in [q-min, q-max] and mark the gap selection"""
    config = config_or_exit(ctx, q_min=q_min, q_max=q_max, gap_mode=gap_mode, folds=folds,
                            n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio, seed=seed,
                            tol=tol, max_iters=max_iters)
    executor = QScanExecutor(out, n_obs, q_min, q_max, seed, config, world_seed=world_seed)
    changes, errors = executor.execute_qscan()
    finish(ctx, changes, errors)


@main.command('crime-recipe')
@click.argument('points', type=click.Path(exists=True, dir_okay=False))
@click.option('--out-dir', '-o', default='crime', show_default=True)
@click.option('--lat-column', default='latitude', show_default=True)
@click.option('--lon-column', default='longitude', show_default=True)
@click.option('--cv-folds', type=int, default=20, show_default=True,
              help='Folds for the reported RMSE')
@click.option('--crisp-q', type=int, default=100, show_default=True)
@click.option('--q-min', type=int, default=2, show_default=True)
@click.option('--q-max', type=int, default=100, show_default=True)
@click.option('--gap-mode', type=click.Choice(GAP_MODE_CHOICES),
              default=GapMode.PER_CELL_NULL.value, show_default=True)
@click.option('--folds', type=int, default=5, show_default=True,
              help='Cross-validation folds for lambda inside each fit')
@click.option('--n-lambda', type=int, default=50, show_default=True)
@click.option('--lambda-min-ratio', type=float, default=1e-4, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--tol', type=float, default=1e-8, show_default=True)
@click.option('--max-iters', type=int, default=10000, show_default=True)
@click.pass_context
def crime_recipe(ctx, points, out_dir, lat_column, lon_column, cv_folds, crisp_q, q_min, q_max,
                 gap_mode, folds, n_lambda, lambda_min_ratio, seed, tol, max_iters):
    """Bin lat/lon events into 100 x 100 cells and model the log counts"""
    config = config_or_exit(ctx, q_min=q_min, q_max=q_max, gap_mode=gap_mode, folds=folds,
                            n_lambda=n_lambda, lambda_min_ratio=lambda_min_ratio, seed=seed,
                            tol=tol, max_iters=max_iters, crisp_q=crisp_q)
    executor = CrimeRecipeExecutor(points, out_dir, config, lat_column, lon_column, cv_folds)
    changes, errors = executor.execute_recipe()
    finish(ctx, changes, errors)


@main.command('init-config')
def init_config():
    """Rewrite the configuration file with the default settings"""
    path = init_config_dir(reset=True)
    click.echo(f"Wrote default configuration to {path}")
    for key, value in DEFAULT_CONFIG.items():
        click.echo(f"  {key}: {value}")


if __name__ == '__main__':
    main()
