"""Command-line entry point.

Exit codes: 0 on success, 2 on configuration errors, 3 on answer-source
failures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .aggregation import multiple_coverage
from .classifier import PredictionSet, classifier_coverage
from .collection import ItemCollection
from .engine import base_coverage, group_coverage, reported_upper_bound
from .errors import AnswerSourceError, ConfigError, CrowdCoverError
from .harness import (
    ExperimentSpec,
    fig5_collection,
    feret_like_counts,
    generate,
    multi_group_preset,
    read_csv,
    summarize,
    sweep,
    write_csv,
)
from .lattice import intersectional_coverage
from .schema import AttributeSchema, Group
from .sources import DEFAULT_ASSIGNMENTS, DEFAULT_ERROR_RATE, SimulatedCrowd


def _load_collection(manifest: str) -> ItemCollection:
    return ItemCollection.from_manifest(manifest)


def _parse_group(collection: ItemCollection, spec: str) -> Group:
    values = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"bad group spec {spec!r}; use attr=value[,attr=value]")
        name, value = part.split("=", 1)
        values[name.strip()] = value.strip()
    return Group.from_values(collection.schema, values)


def _write_out(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


@click.group()
def cli():
    """Crowd-efficient coverage auditing."""


@cli.command("generate")
@click.option("--out", required=True, type=click.Path())
@click.option("--size", "-N", "size", type=int, default=None, help="Item count.")
@click.option("--seed", type=int, default=0)
@click.option("--preset", type=str, default=None,
              help="fig5, feret, effective1, effective2, ineffective, adversarial")
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--counts", "counts_path", type=click.Path(exists=True), default=None,
              help="JSON mapping 'v1,v2,...' keys to planted counts.")
@click.option("--tau", type=int, default=50, help="Threshold presets are sized for.")
def generate_cmd(out, size, seed, preset, schema_path, counts_path, tau):
    """Write a dataset manifest with planted ground truth."""

    if preset == "fig5":
        collection = fig5_collection()
    elif preset == "feret":
        schema, counts = feret_like_counts(size or 1522)
        collection = generate(schema, size or 1522, counts, seed)
    elif preset:
        if size is None:
            raise ConfigError("--size is required for this preset")
        schema, counts = multi_group_preset(preset, size, tau)
        collection = generate(schema, size, counts, seed)
    else:
        if not (schema_path and counts_path and size):
            raise ConfigError("need --schema, --counts and --size without a preset")
        schema = AttributeSchema.from_dict(json.loads(Path(schema_path).read_text()))
        raw = json.loads(Path(counts_path).read_text())
        counts = {tuple(k.split(",")): v for k, v in raw.items()}
        collection = generate(schema, size, counts, seed)
    Path(out).write_text(json.dumps(collection.to_manifest()))
    click.echo(f"wrote {len(collection)} items to {out}")


@cli.command("run")
@click.argument("algorithm",
                type=click.Choice(["group", "base", "multiple", "intersectional", "classifier"]))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--group", "group_spec", type=str, default=None, help="attr=value[,attr=value]")
@click.option("--attribute", type=str, default=None, help="Attribute for multiple-coverage.")
@click.option("--n", type=int, default=50)
@click.option("--tau", type=int, default=50)
@click.option("--c", type=int, default=2)
@click.option("--p", type=float, default=DEFAULT_ERROR_RATE)
@click.option("--k", type=int, default=DEFAULT_ASSIGNMENTS)
@click.option("--seed", type=int, default=0)
@click.option("--predictions", type=click.Path(exists=True), default=None,
              help="CSV with id,predicted.<attr> columns (classifier mode).")
@click.option("--out", type=click.Path(), default=None)
def run_cmd(algorithm, manifest, group_spec, attribute, n, tau, c, p, k, seed,
            predictions, out):
    """Run one algorithm against a simulated crowd over a manifest."""

    collection = _load_collection(manifest)
    source = SimulatedCrowd(collection, error_rate=p, assignments_per_task=k, seed=seed)
    if algorithm in ("group", "base", "classifier"):
        if not group_spec:
            raise ConfigError(f"{algorithm} needs --group")
        target = _parse_group(collection, group_spec)
    if algorithm == "group":
        verdict = group_coverage(collection, target, n=n, tau=tau, source=source)
        payload = verdict.to_json()
    elif algorithm == "base":
        verdict = base_coverage(collection, target, tau=tau, source=source)
        payload = verdict.to_json()
    elif algorithm == "multiple":
        schema = collection.schema
        attr = schema.attributes[schema.index_of(attribute)] if attribute \
            else schema.attributes[0]
        groups = [Group.single(schema, attr.name, v) for v in attr.values]
        report = multiple_coverage(collection, groups, n=n, tau=tau, c=c,
                                   source=source, seed=seed)
        payload = {
            "verdicts": [v.to_json() for v in report.verdicts],
            "sample_tasks": report.sample_tasks,
            "engine_tasks": report.engine_tasks,
        }
    elif algorithm == "intersectional":
        report = intersectional_coverage(collection, n=n, tau=tau, c=c,
                                         source=source, seed=seed)
        payload = {
            "mups": [p_.render() for p_ in report.mups],
            "patterns": report.mup_report.to_json(),
            "total_tasks": report.total_tasks,
        }
    else:
        if predictions:
            pset = PredictionSet.from_csv(collection, target, predictions)
        else:
            pset = PredictionSet.from_collection(collection, target)
        report = classifier_coverage(collection, pset, n=n, tau=tau,
                                     source=source, seed=seed)
        payload = {
            **report.verdict.to_json(),
            "strategy": report.strategy,
            "precision": report.precision,
            "probe_tasks": report.probe_tasks,
            "verify_tasks": report.verify_tasks,
            "sweep_tasks": report.sweep_tasks,
        }
    payload["upper_bound"] = reported_upper_bound(len(collection) or 1, n, tau)
    _write_out(payload, out)


@cli.command("sweep")
@click.option("--spec", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def sweep_cmd(spec, out):
    """Run a parameter sweep from a JSON spec and write the CSV report."""

    rows = sweep(ExperimentSpec.from_json(spec))
    write_csv(rows, out)
    click.echo(f"wrote {len(rows)} rows to {out}")


@cli.command("report")
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="Optional PNG of mean tasks vs. parameter (needs matplotlib).")
def report_cmd(csv_path, out, plot_path):
    """Summarize a sweep CSV (mean/min/max tasks per parameter value)."""

    rows = read_csv(csv_path)
    summary = summarize(rows)
    lines = [f"{'param':>12} {'runs':>5} {'mean':>10} {'min':>7} {'max':>7}"]
    for entry in summary:
        lines.append(
            f"{entry['param_value']:>12} {entry['runs']:>5} "
            f"{entry['mean_tasks']:>10.1f} {entry['min_tasks']:>7} {entry['max_tasks']:>7}"
        )
    text = "\n".join(lines)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)
    if plot_path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        xs = [float(e["param_value"]) for e in summary]
        ys = [e["mean_tasks"] for e in summary]
        fig, ax = plt.subplots()
        ax.plot(xs, ys, marker="o")
        ax.set_xlabel(rows[0]["param_name"] if rows else "param")
        ax.set_ylabel("mean tasks")
        fig.savefig(plot_path, dpi=120)
        click.echo(f"wrote plot to {plot_path}")


@cli.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8756)
@click.option("--data-dir", type=click.Path(), default=None,
              help="Directory for session configs and event logs.")
@click.option("--console", "console_dir", type=click.Path(exists=True), default=None,
              help="Serve a built worker-console bundle at /.")
def serve_cmd(host, port, data_dir, console_dir):
    """Start the live task service."""

    from .service import make_server

    server = make_server(host, port, data_dir=data_dir, static_dir=console_dir)
    actual_port = server.server_address[1]
    click.echo(f"listening on http://{host}:{actual_port}", err=False)
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 2
    except click.exceptions.ClickException as err:
        err.show()
        return 2
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        return 2
    except AnswerSourceError as err:
        click.echo(f"answer source failure: {err}", err=True)
        return 3
    except CrowdCoverError as err:
        click.echo(f"error: {err}", err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
