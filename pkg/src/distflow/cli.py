"""Rich-based CLI for DistFlow-Sim."""

import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import click
from rich.table import Table

from .bench.models import RowStatus, RunConfig, RunSummary
from .bench.runner import run_experiment, sweep
from .bench.verify import verify
from .console import console
from .core.run_context import RunContext, RunKind, RunPhase
from .dag.parser import load_dag_file
from .dag.validator import validate_dag
from .errors import DistFlowError
from .runtime.datapath import Mode
from .transport.fabric import Backend

DISTFLOW_LOGO = """
[bold cyan]
 ██████╗ ██╗███████╗████████╗███████╗██╗      ██████╗ ██╗    ██╗
 ██╔══██╗██║██╔════╝╚══██╔══╝██╔════╝██║     ██╔═══██╗██║    ██║
 ██║  ██║██║███████╗   ██║   █████╗  ██║     ██║   ██║██║ █╗ ██║
 ██║  ██║██║╚════██║   ██║   ██╔══╝  ██║     ██║   ██║██║███╗██║
 ██████╔╝██║███████║   ██║   ██║     ███████╗╚██████╔╝╚███╔███╔╝
 ╚═════╝ ╚═╝╚══════╝   ╚═╝   ╚═╝     ╚══════╝ ╚═════╝  ╚══╝╚══╝
[/bold cyan]
[dim]Multi-controller dataflow for multi-stage RL pipelines, simulated at desk scale[/dim]
"""


def show_logo():
    """Show the DistFlow-Sim logo."""
    console.print(DISTFLOW_LOGO)


def parse_scales(scales_str: str) -> List[str]:
    """Parse comma-separated scale labels such as '1x4,2x4'."""
    return [scale.strip() for scale in scales_str.split(",") if scale.strip()]


def get_phase_color(phase) -> str:
    """Get color for phase status."""
    phase_str = phase.value if hasattr(phase, "value") else str(phase)
    color_map = {
        "created": "dim",
        "planned": "blue",
        "running": "cyan",
        "completed": "bold green",
        "failed": "bold red",
    }
    return color_map.get(phase_str, "white")


def format_datetime(dt_str: str) -> str:
    """Format datetime string for display."""
    try:
        dt = datetime.fromisoformat(dt_str)
        return dt.strftime("%Y-%m-%d %H:%M")
    except ValueError:
        return dt_str


def load_run_config(
    path: Path,
    mode: Optional[str] = None,
    backend: Optional[str] = None,
) -> RunConfig:
    """Read a run file and apply command-line overrides."""
    config = RunConfig.load(path)
    updates = {}
    if mode:
        updates["mode"] = Mode(mode)
    if backend:
        updates["backend"] = Backend(backend)
    return config.model_copy(update=updates) if updates else config


def print_summaries(summaries: List[RunSummary], title: str) -> None:
    table = Table(title=title)
    table.add_column("Scale", style="cyan")
    table.add_column("Mode", style="magenta")
    table.add_column("Status", style="white")
    table.add_column("Iters", justify="right")
    table.add_column("Wall (s)", justify="right")
    table.add_column("Tokens/s", justify="right")
    table.add_column("Tokens/s/worker", justify="right")
    table.add_column("Controller B", justify="right")
    table.add_column("Max node dataflow B", justify="right")
    table.add_column("Speedup", justify="right")
    for summary in summaries:
        ok = summary.status == RowStatus.OK
        table.add_row(
            summary.scale,
            summary.mode,
            "[green]ok[/green]" if ok else "[red]failed[/red]",
            str(summary.measured_iterations),
            f"{summary.mean_wall_time_s:.4f}",
            f"{summary.mean_tokens_per_sec:,.0f}",
            f"{summary.mean_tokens_per_sec_per_worker:,.0f}",
            f"{summary.mean_controller_bytes:,.0f}",
            f"{summary.mean_max_node_dataflow_bytes:,.0f}",
            f"{summary.speedup:.2f}x" if summary.speedup is not None else "[dim]—[/dim]",
        )
    console.print(table)
    for summary in summaries:
        if summary.error:
            console.print(f"  [red]• {summary.scale} {summary.mode}: {summary.error}[/red]")


def show_help_with_logo(ctx, _, value):
    """Custom help callback that shows logo."""
    if not value or ctx.resilient_parsing:
        return
    show_logo()
    click.echo(ctx.get_help())
    ctx.exit()


@click.group(invoke_without_command=True)
@click.version_option(package_name="distflow-sim")
@click.option("--help", "-h", is_flag=True, expose_value=False, is_eager=True,
              callback=show_help_with_logo, help="Show this message and exit.")
@click.pass_context
def cli(ctx):
    """DistFlow-Sim - compare distributed and single-controller dataflow for RL pipelines."""
    if ctx.invoked_subcommand is None:
        show_logo()
        click.echo(ctx.get_help())


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path), required=True,
              help="JSON run file")
@click.option("--mode", "-m", type=click.Choice([m.value for m in Mode]), default=None,
              help="Override the dataflow mode")
@click.option("--backend", "-b", type=click.Choice([b.value for b in Backend]), default=None,
              help="Override the fabric backend")
@click.option("--dump-plan", is_flag=True, help="Print the rank/layout plan before launching")
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None,
              help="CSV output path (default: results.csv in the run directory)")
def run(config_path: Path, mode: Optional[str], backend: Optional[str], dump_plan: bool, out: Optional[Path]):
    """Run one experiment and write per-iteration CSV rows."""
    show_logo()
    try:
        config = load_run_config(config_path, mode, backend)
        context = RunContext.create(
            config.name, RunKind.RUN, config.model_dump(mode="json"), config.fingerprint()
        )
        out = out or context.run_dir / "results.csv"
        if dump_plan:
            console.print(config.build_plan().dump_json())

        with console.status(f"[bold green]Running {config.mode.value} at {config.scale}..."):
            result = run_experiment(config, out=out, context=context)

        print_summaries([result.summary], f"Run {context.run_id[:8]}")
        console.print(f"[bold blue]Run ID:[/bold blue] {context.run_id}")
        console.print(f"[bold blue]Results:[/bold blue] {out}")
        if not result.ok:
            console.print(f"[bold red]✗[/bold red] Run failed: {result.summary.error}")
            sys.exit(1)
        console.print("[bold green]✓[/bold green] Run completed")
    except (DistFlowError, ValueError) as e:
        console.print(f"[bold red]✗[/bold red] Failed to run experiment: {e}")
        sys.exit(1)


@cli.command("sweep")
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path), required=True,
              help="JSON run file used as the template")
@click.option("--scales", "-s", required=True, help="Comma-separated scales, e.g. 1x4,2x4,4x4")
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None,
              help="CSV output path (default: sweep.csv in the run directory)")
@click.option("--paired", is_flag=True, help="Run both modes per scale and fill the speedup column")
@click.option("--mode", "-m", type=click.Choice([m.value for m in Mode]), default=None,
              help="Override the dataflow mode (ignored with --paired)")
@click.option("--backend", "-b", type=click.Choice([b.value for b in Backend]), default=None,
              help="Override the fabric backend")
def sweep_command(config_path: Path, scales: str, out: Optional[Path], paired: bool,
                  mode: Optional[str], backend: Optional[str]):
    """Run the config at several scales, growing the global batch with the node count."""
    show_logo()
    try:
        config = load_run_config(config_path, mode, backend)
        scale_list = parse_scales(scales)
        if not scale_list:
            raise click.BadParameter("no scales given", param_hint="--scales")
        context = RunContext.create(
            config.name, RunKind.SWEEP, config.model_dump(mode="json"), config.fingerprint()
        )
        context.metadata["scales"] = scale_list
        out = out or context.run_dir / "sweep.csv"

        with console.status(f"[bold green]Sweeping {', '.join(scale_list)}..."):
            result = sweep(config, scale_list, out=out, paired=paired, context=context)

        print_summaries(result.summaries, f"Sweep {context.run_id[:8]}")
        for line in result.analysis.describe():
            console.print(f"[bold]{line}[/bold]")
        console.print(f"[bold blue]Run ID:[/bold blue] {context.run_id}")
        console.print(f"[bold blue]Results:[/bold blue] {out}")
        if not result.ok:
            console.print("[bold red]✗[/bold red] Some sub-runs failed")
            sys.exit(1)
        console.print("[bold green]✓[/bold green] Sweep completed")
    except (DistFlowError, ValueError) as e:
        console.print(f"[bold red]✗[/bold red] Failed to sweep: {e}")
        sys.exit(1)


@cli.command("verify")
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path), required=True,
              help="JSON run file")
@click.option("--iterations", "-n", type=int, default=None, help="Iterations to compare (default: config)")
@click.option("--seed-override", type=int, default=None,
              help="Run central mode with another seed (negative control)")
@click.option("--backend", "-b", type=click.Choice([b.value for b in Backend]), default=None,
              help="Override the fabric backend")
def verify_command(config_path: Path, iterations: Optional[int], seed_override: Optional[int],
                   backend: Optional[str]):
    """Compare distributed mode, central mode and the single-process oracle record by record."""
    show_logo()
    try:
        config = load_run_config(config_path, None, backend)
        context = RunContext.create(
            config.name, RunKind.VERIFY, config.model_dump(mode="json"), config.fingerprint()
        )
        context.mark_running()
        with console.status("[bold green]Running both modes and the oracle..."):
            report = verify(config, iterations=iterations, seed_override=seed_override)

        table = Table(title=f"Verify {report.scale}, {report.iterations} iterations")
        table.add_column("Left", style="cyan")
        table.add_column("Right", style="cyan")
        table.add_column("Records", justify="right")
        table.add_column("Mismatches", justify="right")
        table.add_column("Missing keys", justify="right")
        table.add_column("Duplicates", justify="right")
        for check in report.checks:
            table.add_row(
                check.left,
                check.right,
                str(check.compared),
                str(check.mismatches),
                str(check.missing_keys),
                str(check.duplicates),
            )
        console.print(table)
        for check in report.checks:
            if check.detail:
                console.print(f"  [red]• {check.left} vs {check.right}: {check.detail}[/red]")
        for failure in report.failures:
            console.print(f"  [red]• {failure}[/red]")

        summary = report.model_dump(mode="json")
        if report.ok:
            context.mark_completed(summary)
            console.print(f"[bold green]✓ {report.verdict.value}[/bold green]")
        else:
            context.mark_failed(report.verdict.value, summary)
            console.print(f"[bold red]✗ {report.verdict.value}[/bold red]")
            sys.exit(1)
    except (DistFlowError, ValueError) as e:
        console.print(f"[bold red]✗[/bold red] Failed to verify: {e}")
        sys.exit(1)


@cli.command()
@click.argument("dag_path", type=click.Path(path_type=Path))
def validate(dag_path: Path):
    """Parse and validate a DAG file."""
    try:
        graph = load_dag_file(dag_path)
    except (DistFlowError, ValueError) as e:
        console.print(f"[bold red]✗[/bold red] {e}")
        sys.exit(1)

    report = validate_dag(graph)
    if report.ok:
        console.print(f"[bold green]✓[/bold green] '{graph.name}' is valid ({len(graph.nodes)} nodes)")
        return
    table = Table(title=f"Issues in '{graph.name}'")
    table.add_column("Code", style="red")
    table.add_column("Node", style="cyan")
    table.add_column("Message", style="white")
    for issue in report.issues:
        table.add_row(issue.code.value, issue.node_id or "—", issue.message)
    console.print(table)
    sys.exit(1)


@cli.command()
@click.option("--config", "-c", "config_path", type=click.Path(path_type=Path), required=True,
              help="JSON run file")
@click.option("--mode", "-m", type=click.Choice([m.value for m in Mode]), default=None,
              help="Override the dataflow mode")
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None, help="Also write the plan here")
def plan(config_path: Path, mode: Optional[str], out: Optional[Path]):
    """Plan chains and layouts without launching anything."""
    try:
        config = load_run_config(config_path, mode)
        worker_plan = config.build_plan()
    except (DistFlowError, ValueError) as e:
        console.print(f"[bold red]✗[/bold red] Plan failed: {e}")
        sys.exit(1)

    dump = worker_plan.dump_json()
    console.print(dump)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dump + "\n", encoding="utf-8")
        console.print(f"[bold green]✓[/bold green] Plan written to {out}")
    if not worker_plan.is_replicated:
        console.print("[yellow]Group-mode plan: it can be inspected but not executed.[/yellow]")


@cli.command("list")
def list_runs():
    """List all runs with their status."""
    show_logo()
    try:
        runs = RunContext.list_runs()
        if not runs:
            console.print("[yellow]No runs found.[/yellow]")
            console.print("[dim]Use 'distflow-sim run --config run.json' to start one.[/dim]")
            return

        table = Table(title="DistFlow-Sim Runs")
        table.add_column("Run ID", style="cyan", width=36)
        table.add_column("Name", style="magenta")
        table.add_column("Kind", style="blue")
        table.add_column("Mode", style="white")
        table.add_column("Scale", style="white")
        table.add_column("Phase", style="white")
        table.add_column("Created", style="dim")

        for context in runs:
            summary = context.to_summary_dict()
            phase = summary["phase"]
            phase_str = phase.value if hasattr(phase, "value") else str(phase)
            color = get_phase_color(phase)
            errors = " [red]⚠[/red]" if summary["has_errors"] else ""
            table.add_row(
                summary["run_id"],
                summary["name"],
                summary["kind"],
                summary["mode"],
                summary["scale"],
                f"[{color}]{phase_str}[/{color}]{errors}",
                format_datetime(summary["created_at"]),
            )
        console.print(table)
        console.print(f"\n[dim]Showing {len(runs)} runs. Use 'distflow-sim status <run-id>' for details.[/dim]")
    except Exception as e:
        console.print(f"[bold red]✗[/bold red] Failed to list runs: {e}")
        sys.exit(1)


@cli.command()
@click.argument("run_id")
def status(run_id: str):
    """Show details of one run."""
    show_logo()
    try:
        context = RunContext.load(run_id)
    except ValueError as e:
        console.print(f"[bold red]✗[/bold red] {e}")
        console.print("[dim]Use 'distflow-sim list' to see available runs.[/dim]")
        sys.exit(1)

    phase = context.status.phase
    color = get_phase_color(phase)
    console.print(f"[bold blue]Run Status:[/bold blue] {context.run_id}")
    console.print(f"Name: [cyan]{context.name}[/cyan]  Kind: [cyan]{context.kind.value}[/cyan]")
    console.print(f"Fingerprint: [cyan]{context.fingerprint}[/cyan]")
    console.print(f"[bold]Current Phase:[/bold] [{color}]{phase.value}[/{color}]")
    console.print()

    console.print("[bold]Phase Timeline:[/bold]")
    order = [RunPhase.CREATED, RunPhase.PLANNED, RunPhase.RUNNING, RunPhase.COMPLETED]
    for step in order:
        if step == phase or (phase != RunPhase.FAILED and order.index(step) < order.index(phase)):
            console.print(f"  [green]✓[/green] {step.value}")
        else:
            console.print(f"  [dim]○ {step.value}[/dim]")
    if phase == RunPhase.FAILED:
        console.print(f"  [red]✗[/red] {phase.value}")
    console.print()

    if context.results_path:
        console.print(f"[bold]Results:[/bold] {context.results_path}")
    for key in ("mean_wall_time_s", "mean_tokens_per_sec", "mean_controller_bytes", "verdict"):
        if key in context.summary:
            console.print(f"  {key}: [cyan]{context.summary[key]}[/cyan]")

    if context.status.errors:
        console.print("[bold red]Errors:[/bold red]")
        for error in context.status.errors[-5:]:
            console.print(f"  [red]• {error}[/red]")
        if len(context.status.errors) > 5:
            console.print(f"  [dim]... and {len(context.status.errors) - 5} more errors[/dim]")


@cli.command()
@click.option("--older-than", "-o", type=int, default=30, help="Remove runs older than N days (default: 30)")
@click.confirmation_option(prompt="Are you sure you want to delete old runs?")
def clean(older_than: int):
    """Clean up old runs."""
    show_logo()
    try:
        removed = RunContext.clean(older_than)
    except OSError as e:
        console.print(f"[bold red]✗[/bold red] Failed to clean runs: {e}")
        sys.exit(1)
    if not removed:
        console.print(f"[green]No runs older than {older_than} days found.[/green]")
        return
    for run_id in removed:
        console.print(f"• [dim]{run_id}[/dim]")
    console.print(f"[bold green]✓[/bold green] Deleted {len(removed)} runs")


def main():
    """Main entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
