"""Command line: simulate, ingest, train, infer, evaluate, serve.

Exit codes: 0 ok, 1 internal error, 2 validation, 3 missing resource,
4 insufficient data.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click
from filelock import FileLock, Timeout

from . import __version__, workflow
from .domain import Region, SourceKind, parse_date, read_ground_truth
from .errors import IliNowcastError, InvalidArgument
from .evaluation import Season, summarize
from .inference import MissingDayPolicy
from .registry import ModelRegistry, ServiceConfig
from .store import FeatureStore, StoreKey
from .synthetic import SyntheticScenario
from .text import ReplayStats, read_documents

logger = logging.getLogger("ilinowcast")

LOCK_NAME = ".ilinowcast.lock"


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IliNowcastError as exc:
            _fail(str(exc), exc.exit_code)
        except FileExistsError as exc:
            _fail(str(exc), 2)
        except FileNotFoundError as exc:
            _fail(str(exc), 3)
        except Timeout:
            _fail("another process holds the data directory lock", 1)
        except OSError as exc:
            _fail(f"I/O error: {exc}", 1)
    return wrapper


def _config(ctx: click.Context) -> ServiceConfig:
    o = ctx.obj
    if "config" not in o:
        o["config"] = ServiceConfig.load(o["config_path"], data_dir=o["data_dir"],
                                         registry_path=o["registry"])
    return o["config"]


def _write_lock(cfg: ServiceConfig) -> FileLock:
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    return FileLock(str(cfg.data_dir / LOCK_NAME), timeout=0)


def _date(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_date(value)
    except InvalidArgument as exc:
        raise click.BadParameter(str(exc)) from None


region_option = click.option("--region", type=click.Choice([r.value for r in Region]),
                             default=Region.ENGLAND.value, show_default=True)
source_option = click.option("--source", type=click.Choice([s.value for s in SourceKind]),
                             required=True)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file (default: $ILINOWCAST_CONFIG).")
@click.option("--data-dir", default=None, help="Feature store directory (overrides config).")
@click.option("--registry", default=None, help="Model registry JSON (default: <data-dir>/registry.json).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, data_dir, registry, verbose):
    """ILI nowcasting from daily term frequencies."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, data_dir=data_dir, registry=registry)


@main.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=SyntheticScenario.seed, show_default=True)
@click.option("--n-days", type=int, default=SyntheticScenario.n_days, show_default=True)
@click.option("--n-seasons", type=int, default=SyntheticScenario.n_seasons, show_default=True)
@click.option("--peak-rate", type=float, default=SyntheticScenario.peak_rate, show_default=True)
@click.option("--baseline-rate", type=float, default=SyntheticScenario.baseline_rate, show_default=True)
@click.option("--n-terms", type=int, default=SyntheticScenario.n_terms, show_default=True)
@click.option("--n-signal-terms", type=int, default=SyntheticScenario.n_signal_terms, show_default=True)
@click.option("--noise-std", type=float, default=SyntheticScenario.noise_std, show_default=True)
@click.option("--noise-term-std", type=float, default=SyntheticScenario.noise_term_std, show_default=True)
@click.option("--twitter-volume", type=int, default=SyntheticScenario.twitter_daily_volume, show_default=True)
@click.option("--twitter-rate", type=float, default=SyntheticScenario.twitter_sample_rate, show_default=True)
@click.option("--search-rate", type=float, default=SyntheticScenario.search_sample_rate, show_default=True)
@click.option("--daily-sessions", type=int, default=SyntheticScenario.daily_sessions, show_default=True)
@click.option("--start-date", callback=_date, default=SyntheticScenario.start_date.isoformat(), show_default=True)
@region_option
@click.option("--documents", "docs_per_day", type=int, default=0,
              help="Also write documents.tsv with this many synthetic documents per day.")
@click.option("--force", is_flag=True, help="Write into a non-empty directory.")
@handle_errors
def simulate(out_dir, seed, n_days, n_seasons, peak_rate, baseline_rate, n_terms, n_signal_terms,
             noise_std, noise_term_std, twitter_volume, twitter_rate, search_rate, daily_sessions,
             start_date, region, docs_per_day, force):
    """Write a seeded synthetic epidemic scenario to OUT_DIR."""
    scenario = SyntheticScenario(
        seed=seed, n_days=n_days, peak_rate=peak_rate, n_terms=n_terms,
        n_signal_terms=n_signal_terms, noise_std=noise_std, twitter_daily_volume=twitter_volume,
        twitter_sample_rate=twitter_rate, search_sample_rate=search_rate, region=region,
        baseline_rate=baseline_rate, n_seasons=n_seasons, start_date=start_date,
        daily_sessions=daily_sessions, noise_term_std=noise_term_std,
    )
    written = workflow.simulate_to_dir(scenario, out_dir, force=force, docs_per_day=docs_per_day)
    for name, rows in written.items():
        click.echo(f"wrote {Path(out_dir) / name} ({rows} rows)")


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@region_option
@source_option
@click.pass_context
@handle_errors
def ingest(ctx, csv_path, region, source):
    """Import a date,term,frequency CSV into the feature store."""
    cfg = _config(ctx)
    with _write_lock(cfg):
        n = FeatureStore(cfg.data_dir).import_csv(StoreKey(region, source), csv_path)
    click.echo(f"imported {n} rows into {region}/{source}")


@main.command("ingest-docs")
@click.argument("replay_path", type=click.Path(exists=True, dir_okay=False))
@source_option
@click.option("--vocabulary", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Text file with one tracked term per line.")
@click.option("--n-max", type=click.IntRange(1, 3), default=2, show_default=True)
@click.pass_context
@handle_errors
def ingest_docs(ctx, replay_path, source, vocabulary, n_max):
    """Count terms in a date<TAB>region<TAB>text replay file and append daily frequencies."""
    cfg = _config(ctx)
    vocab = [t.strip() for t in Path(vocabulary).read_text(encoding="utf-8").splitlines() if t.strip()]
    stats = ReplayStats()
    docs = read_documents(replay_path, stats)
    with _write_lock(cfg):
        days = workflow.ingest_documents(FeatureStore(cfg.data_dir), SourceKind(source), docs, vocab, n_max)
    click.echo(f"appended {days} day(s) from {stats.lines} lines ({stats.bad_lines} malformed)")


@main.command()
@click.argument("csv_path", type=click.Path(dir_okay=False))
@region_option
@source_option
@click.pass_context
@handle_errors
def export(ctx, csv_path, region, source):
    """Export one store series as a date,term,frequency CSV."""
    cfg = _config(ctx)
    n = FeatureStore(cfg.data_dir).export_csv(StoreKey(region, source), csv_path)
    click.echo(f"exported {n} rows")


@main.command()
@region_option
@source_option
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--start", callback=_date, help="First truth week-ending date to train on.")
@click.option("--end", callback=_date, help="Last truth week-ending date to train on.")
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True), default=0.9, show_default=True)
@click.option("--lambda", "lam", type=click.FloatRange(0, min_open=True), default=None,
              help="Fixed penalty; skips cross-validation.")
@click.option("--grid-size", type=click.IntRange(1), default=100, show_default=True)
@click.option("--folds", type=click.IntRange(2), default=5, show_default=True)
@click.option("--max-sweeps", type=click.IntRange(1), default=1000, show_default=True)
@click.option("--tolerance", type=click.FloatRange(0, min_open=True), default=1e-6, show_default=True)
@click.option("--bolasso", is_flag=True, help="Select terms by bootstrap lasso before fitting.")
@click.option("--bootstrap", "n_bootstrap", type=click.IntRange(10), default=100, show_default=True)
@click.option("--pi", type=click.FloatRange(0.5, 1, min_open=True), default=0.9, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--diagnostics", type=click.Path(dir_okay=False), help="Write per-lambda CV results as JSON.")
@click.pass_context
@handle_errors
def train(ctx, region, source, truth_path, start, end, alpha, lam, grid_size, folds, max_sweeps,
          tolerance, bolasso, n_bootstrap, pi, seed, diagnostics):
    """Fit and register a model against weekly ground truth."""
    cfg = _config(ctx)
    truth = read_ground_truth(truth_path, cfg.week_ending_weekday)
    store = FeatureStore(cfg.data_dir)
    with _write_lock(cfg):
        snapshot = store.snapshot(StoreKey(region, source))
        result = workflow.train_model(
            snapshot, truth, start=start, end=end, alpha=alpha, lam=lam, grid_size=grid_size,
            folds=folds, max_sweeps=max_sweeps, tolerance=tolerance, bolasso=bolasso,
            n_bootstrap=n_bootstrap, pi=pi, seed=seed)
        ModelRegistry(cfg.registry_path).register(result.model)
    m = result.model
    click.echo(m.model_id)
    click.echo(f"samples={m.n_samples} trained_on={m.trained_on[0]}..{m.trained_on[1]} "
               f"lambda={m.hyperparams.lam!r} alpha={m.hyperparams.alpha!r} "
               f"nonzero={int((m.weights != 0).sum())}/{len(m.terms)} converged={m.converged}")
    if result.cv is not None:
        best = int(result.cv.lambdas.tolist().index(m.hyperparams.lam))
        click.echo(f"cv folds={len(result.cv.folds)} grid={len(result.cv.lambdas)} "
                   f"best_index={best} mean_mae={float(result.cv.mean_mae[best])!r}")
        if diagnostics:
            Path(diagnostics).write_text(json.dumps(result.cv.diagnostics(), indent=2) + "\n")
    if m.selected_terms is not None:
        click.echo(f"bolasso selected {len(m.selected_terms)} terms: {' '.join(m.selected_terms)}")


@main.command()
@click.argument("model_id")
@click.option("--start", callback=_date)
@click.option("--end", callback=_date)
@click.option("--latest", is_flag=True, help="Estimate only the store's latest day (nightly run).")
@click.option("--weekly", is_flag=True, help="Only week-ending dates.")
@click.option("--smooth/--no-smooth", default=None,
              help="Add smoothed values (default: on for twitter models only).")
@click.option("--policy", type=click.Choice([p.value for p in MissingDayPolicy]), default=None)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Write CSV here instead of stdout.")
@click.pass_context
@handle_errors
def infer(ctx, model_id, start, end, latest, weekly, smooth, policy, output):
    """Emit daily (or weekly) ILI estimates as CSV."""
    cfg = _config(ctx)
    registry = ModelRegistry(cfg.registry_path)
    model = registry.load(model_id)
    if latest:
        day = FeatureStore(cfg.data_dir).latest_date(StoreKey(model.region, model.source))
        if day is None:
            _fail("store is empty", 4)
        start = end = day
    if start is None or end is None:
        raise InvalidArgument("give --start and --end, or --latest")
    records = workflow.run_inference(cfg, model_id, start, end, weekly=weekly, smooth=smooth,
                            policy=MissingDayPolicy(policy) if policy else None)
    text = workflow.records_to_csv(records)
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)
    gaps = sum(1 for r in records if r["value"] is None)
    if gaps:
        click.echo(f"warning: {gaps} day(s) without an estimate", err=True)


@main.command()
@click.argument("model_id")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--season", "seasons", multiple=True, required=True,
              help="LABEL:START:END, repeatable.")
@click.option("--smoothed", is_flag=True, help="Score smoothed instead of raw estimates.")
@click.option("--policy", type=click.Choice([p.value for p in MissingDayPolicy]), default=None)
@click.pass_context
@handle_errors
def evaluate(ctx, model_id, truth_path, seasons, smoothed, policy):
    """Score weekly estimates against ground truth; prints a JSON report."""
    cfg = _config(ctx)
    model = ModelRegistry(cfg.registry_path).load(model_id)
    truth = read_ground_truth(truth_path, cfg.week_ending_weekday)
    snapshot = FeatureStore(cfg.data_dir).snapshot(StoreKey(model.region, model.source))
    reports = [
        workflow.evaluate_model(model, snapshot, truth, Season.parse(s),
                                policy=MissingDayPolicy(policy) if policy else cfg.policy,
                                smooth_window=cfg.smoothing_window if smoothed else None,
                                use_smoothed=smoothed, week_ending_weekday=cfg.week_ending_weekday)
        for s in seasons
    ]
    doc = reports[0].to_dict() if len(reports) == 1 else summarize(reports)
    doc["model_id"] = model_id
    click.echo(json.dumps(doc, indent=2))


@main.command()
@click.pass_context
@handle_errors
def models(ctx):
    """List registered models as JSON."""
    cfg = _config(ctx)
    click.echo(json.dumps([e.to_dict() for e in ModelRegistry(cfg.registry_path).entries()], indent=2))


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
@handle_errors
def serve(ctx, host, port):
    """Run the read-only HTTP API."""
    import uvicorn

    from .api import create_app

    o = ctx.obj
    cfg = ServiceConfig.load(o["config_path"], data_dir=o["data_dir"], registry_path=o["registry"],
                             host=host, port=port)
    problems = ModelRegistry(cfg.registry_path).validate()
    if problems:
        _fail("registry invalid:\n  " + "\n  ".join(problems), 2)
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")


if __name__ == "__main__":
    main()
