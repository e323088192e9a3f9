"""CLI commands for fouriereg."""

import asyncio
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable, NoReturn, Sequence, get_args

import click
import torch
import yaml
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .. import __version__
from ..config.settings import DataConfig, LoggingConfig, Settings, VariantKind
from ..config.validators import generate_sample_config, validate_config_file
from ..core.deform import neg_jac_fraction
from ..core.fourier import BandLimitedPatch, FourierError, decode_with_residue
from ..core.metrics import MetricError, evaluate_manifest, summarize
from ..core.model import RegistrationModel, VariantError, build, count_costs
from ..core.state import CheckpointError, CheckpointManager
from ..core.tensor import ShapeError
from ..core.trainer import Trainer, TrainingError
from ..io.dataset import ManifestError, load_image, load_pairs
from ..io.pgm import PGMError, write_pgm
from ..io.synthetic import gen_synthetic
from ..io.tensorfile import (
    TensorFileError,
    atomic_write_text,
    read_tensor,
    write_tensor,
)
from ..logging.setup import get_logger, setup_logging

console = Console()
logger = get_logger(__name__)

# Global state
_settings: Settings | None = None
_output_format: str = "text"

# Failures reported as runtime errors (exit 2)
RUNTIME_ERRORS = (
    CheckpointError,
    FourierError,
    ManifestError,
    MetricError,
    PGMError,
    ShapeError,
    TensorFileError,
    TrainingError,
    VariantError,
    OSError,
)


def _fail(message: str) -> NoReturn:
    console.print(f"[red]Error: {message}[/red]")
    sys.exit(2)


def override_options(func: Callable) -> Callable:
    """Flags that override configuration-file values."""
    options = [
        click.option("--variant", type=click.Choice(list(get_args(VariantKind)))),
        click.option("--cascades", type=click.IntRange(min=1), help="Cascade count K"),
        click.option("--diff/--no-diff", default=None, help="Diffeomorphic variant"),
        click.option("--image-reduction", type=int, help="Input image reduction"),
        click.option("--field-reduction", type=int, help="Output field reduction"),
        click.option("--lambda", "lambda_", type=float, help="Smoothness weight"),
        click.option("--loss", type=click.Choice(["mse", "ncc"])),
        click.option("--seed", type=int),
        click.option("--out", type=click.Path(), help="Output location"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _resolve_settings(**overrides: Any) -> Settings:
    """Configuration file values with CLI flags applied on top."""
    base = _settings if _settings is not None else Settings()
    flat = {
        "variant": overrides.pop("variant", None),
        "cascades": overrides.pop("cascades", None),
        "diff": overrides.pop("diff", None),
        "image_reduction": overrides.pop("image_reduction", None),
        "field_reduction": overrides.pop("field_reduction", None),
        "lambda": overrides.pop("lambda_", None),
        "loss": overrides.pop("loss", None),
        "seed": overrides.pop("seed", None),
        **overrides,
    }
    try:
        return base.with_overrides(**flat)
    except ValueError as e:
        raise click.UsageError(f"Invalid configuration: {e}") from e


def _print_data(data: Any, title: str) -> None:
    if _output_format == "json":
        click.echo(json.dumps(data, indent=2))
    elif _output_format == "yaml":
        click.echo(yaml.dump(data, default_flow_style=False, sort_keys=False))
    else:
        console.print(
            Panel(
                Text(yaml.dump(data, default_flow_style=False, sort_keys=False)),
                title=title,
                border_style="blue",
            )
        )


def _load_model(path: str | Path) -> RegistrationModel:
    """Load a checkpoint directory, or the latest checkpoint of a run directory."""
    path = Path(path)
    if (path / "manifest.json").exists():
        model, _ = CheckpointManager(path.parent).load(path)
    else:
        model, _ = CheckpointManager(path).load()
    model.eval()
    return model


def _manifest_path(data: str | Path, split: str) -> Path:
    path = Path(data)
    return path if path.is_file() else path / split / "manifest.json"


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.lower().split("x"))
    except ValueError as e:
        raise click.BadParameter(f"expected a shape like 96x96, got {text!r}") from e


@click.group()
@click.version_option(version=__version__, prog_name="fouriereg")
@click.option(
    "--config", "-c", type=click.Path(exists=True), help="Configuration file path"
)
@click.option(
    "--log-level",
    "-l",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]),
    default="INFO",
)
@click.option("--format", type=click.Choice(["json", "yaml", "text"]), default="text")
def main(config: str | None, log_level: str, format: str) -> None:
    """fouriereg - Deformable image registration with band-limited Fourier fields."""
    global _settings, _output_format
    _settings = None
    _output_format = format

    if config:
        try:
            _settings = Settings.from_file(Path(config))
            setup_logging(_settings.logging)
        except Exception as e:
            console.print(f"[red]Error: Failed to load configuration: {e}[/red]")
            sys.exit(1)
    else:
        setup_logging(LoggingConfig(level=log_level, output="stderr", format="text"))


@main.command("gen-data")
@override_options
@click.option("--shape", help="Image shape, e.g. 96x96")
@click.option("--deform-scale", type=float, help="Peak velocity magnitude in voxels")
@click.option("--n-train", type=click.IntRange(min=1))
@click.option("--n-test", type=click.IntRange(min=1))
@click.option("--n-labels", type=click.IntRange(1, 4))
def gen_data(out: str | None, **options: Any) -> None:
    """Generate the synthetic disc/ring dataset."""
    settings = _resolve_settings(**options)
    data: DataConfig = settings.data
    root = Path(out or "data")
    try:
        summary = gen_synthetic(
            root,
            seed=settings.training.seed,
            n_train=data.n_train,
            n_test=data.n_test,
            shape=data.shape,
            deform_scale=data.deform_scale,
            n_labels=data.n_labels,
        )
    except RUNTIME_ERRORS as e:
        _fail(str(e))
    _print_data(summary.to_dict(), "Synthetic Dataset")


@main.command()
@override_options
@click.option("--data", "data_dir", type=click.Path(exists=True), default="data")
@click.option("--epochs", type=click.IntRange(min=1))
@click.option("--batch", type=click.IntRange(min=1))
@click.option("--lr", type=float)
def train(out: str | None, data_dir: str, **options: Any) -> None:
    """Train a registration model on a generated dataset."""
    settings = _resolve_settings(**options)
    run_dir = Path(out or Path("runs") / settings.model.label)
    try:
        train_pairs = load_pairs(_manifest_path(data_dir, "train"))
        val_path = Path(data_dir) / "test" / "manifest.json"
        val_pairs = load_pairs(val_path) if val_path.is_file() else []
        history = Trainer(settings, run_dir).run(train_pairs, val_pairs)
    except RUNTIME_ERRORS as e:
        _fail(str(e))

    records = [record.to_dict() for record in history]
    if _output_format != "text":
        _print_data({"run_dir": str(run_dir), "epochs": records}, "Training")
        return
    table = Table(title=f"Training {settings.model.label}")
    table.add_column("Epoch", style="cyan")
    table.add_column("Loss", style="white")
    table.add_column("Val Dice", style="white")
    for record in history:
        val = "-" if record.val_dice is None else f"{record.val_dice:.4f}"
        table.add_row(str(record.epoch), f"{record.loss:.6f}", val)
    console.print(table)
    console.print(f"[green]✓ Checkpoints written to {run_dir}[/green]")


@main.command()
@click.argument("moving", type=click.Path(exists=True))
@click.argument("fixed", type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default="registered")
def register(moving: str, fixed: str, checkpoint: str, out: str) -> None:
    """Register MOVING to FIXED and write the field and warped image."""
    out_dir = Path(out)
    try:
        model = _load_model(checkpoint)
        dtype = next(model.parameters()).dtype
        moving_image = load_image(moving).to(dtype)[None, None]
        fixed_image = load_image(fixed).to(dtype)[None, None]
        start = time.perf_counter()
        with torch.no_grad():
            output = model(moving_image, fixed_image)
        seconds = time.perf_counter() - start

        write_tensor(out_dir / "field.blt", output.displacement[0])
        write_tensor(out_dir / "warped.blt", output.warped[0, 0])
        if output.velocity is not None:
            write_tensor(out_dir / "velocity.blt", output.velocity[0])
        if output.warped.dim() == 4:
            write_pgm(out_dir / "warped.pgm", output.warped[0, 0])
    except RUNTIME_ERRORS as e:
        _fail(str(e))

    _print_data(
        {
            "variant": model.variant.label,
            "out": str(out_dir),
            "neg_jac_pct": neg_jac_fraction(output.displacement),
            "seconds": seconds,
        },
        "Registration",
    )


@main.command()
@click.option("--manifest", "manifest", type=click.Path(exists=True), default="data")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), help="Write JSON lines here, not stdout")
@click.option("--workers", type=click.IntRange(min=1), default=4)
def evaluate(manifest: str, checkpoint: str, out: str | None, workers: int) -> None:
    """Evaluate a checkpoint on a manifest, one JSON line per pair."""
    try:
        model = _load_model(checkpoint)
        pairs = load_pairs(_manifest_path(manifest, "test"))
        results = asyncio.run(evaluate_manifest(model, pairs, workers))
    except RUNTIME_ERRORS as e:
        _fail(str(e))

    lines = [json.dumps(result.to_dict()) for result in results]
    if out is None:
        for line in lines:
            click.echo(line)
        return
    atomic_write_text(out, "".join(line + "\n" for line in lines))
    summary = summarize(results)
    table = Table(title="Evaluation")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="white")
    for key, value in summary.items():
        table.add_row(key, f"{value:.4f}" if isinstance(value, float) else str(value))
    console.print(table)
    console.print(f"[green]✓ Metrics written to {out}[/green]")


@main.command()
@override_options
@click.option("--shape", help="Input shape for cost accounting, e.g. 96x96")
@click.option("--channels", type=click.IntRange(min=1), help="Base channel count C")
def inspect(
    out: str | None, shape: str | None, channels: int | None, **options: Any
) -> None:
    """Show the layer plan, parameter count and mult-adds of a variant."""
    settings = _resolve_settings(channels=channels, **options)
    variant = settings.model
    spatial = _parse_shape(shape) if shape else settings.data.shape
    if len(spatial) != variant.dims:
        raise click.UsageError(f"shape {spatial} does not have {variant.dims} axes")

    costs = count_costs(variant, variant.base_channels, spatial)
    model = build(variant, seed=None)
    slopes = sum(
        p.numel() for name, p in model.named_parameters() if name.endswith(".slopes")
    )
    rows = model.plan.rows(spatial)
    report = {
        "variant": variant.label,
        "shape": list(spatial),
        "cascades": variant.cascades,
        **costs.to_dict(),
        "prelu_slopes": slopes,
        "layers": rows,
    }
    if out:
        atomic_write_text(out, json.dumps(report, indent=2))
    if _output_format != "text":
        _print_data(report, "Inspect")
        return

    table = Table(title=f"{variant.label} layer plan (per cascade)")
    for column in ("Layer", "Op", "Output", "Params", "Mult-Adds"):
        table.add_column(column, style="cyan" if column == "Layer" else "white")
    for row in rows:
        table.add_row(
            row["name"],
            row["layer"],
            "x".join(str(n) for n in row["output"]),
            str(row["params"]),
            str(row["mult_adds"]),
        )
    console.print(table)
    console.print(f"Parameters: {costs.params}")
    console.print(f"Mult-Adds: {costs.mult_adds} ({costs.mult_adds / 1e6:.2f} M)")
    console.print(f"Activations: {costs.activations}")
    console.print(f"PReLU slopes: {slopes}")


@main.command()
@click.argument("patch_file", type=click.Path(exists=True))
@click.option("--full-shape", required=True, help="Full resolution, e.g. 96x96")
@click.option("--out", type=click.Path(), default="field.blt")
def decode(patch_file: str, full_shape: str, out: str) -> None:
    """Decode a band-limited patch file into a full-resolution field file."""
    full = _parse_shape(full_shape)
    try:
        coeffs = read_tensor(patch_file)
        if not coeffs.is_complex():
            raise FourierError(
                f"patch file holds {coeffs.dtype} values, expected complex"
            )
        patch_shape = tuple(coeffs.shape[-len(full) :])
        divides = all(n % m == 0 for n, m in zip(full, patch_shape))
        if len(patch_shape) != len(full) or not divides:
            raise FourierError(f"patch shape {patch_shape} does not divide {full}")
        reduction = tuple(n // m for n, m in zip(full, patch_shape))
        field, residue = decode_with_residue(BandLimitedPatch(coeffs, full, reduction))
        write_tensor(out, field)
    except RUNTIME_ERRORS as e:
        _fail(str(e))
    result = {
        "out": out,
        "shape": list(field.shape),
        "reduction": list(reduction),
        "residue": residue,
    }
    _print_data(result, "Decode")


@main.command()
@override_options
@click.option("--zero", is_flag=True, help="Set every parameter to zero")
def init(out: str | None, zero: bool, **options: Any) -> None:
    """Write an initial checkpoint for the configured variant."""
    settings = _resolve_settings(**options)
    variant = settings.model
    dtype = getattr(torch, settings.training.dtype)
    model = build(variant, dtype, settings.training.seed)
    if zero:
        model.zero_()
    target = Path(out or Path("runs") / variant.label)
    try:
        path = CheckpointManager(target).save(model, epoch=0, loss=None)
    except RUNTIME_ERRORS as e:
        _fail(str(e))
    console.print(f"[green]✓ Checkpoint written to {path}[/green]")


@main.group()
def config() -> None:
    """Configuration management commands."""
    pass


@config.command()
@click.argument("config_path", type=click.Path())
def validate(config_path: str) -> None:
    """Validate configuration file."""
    path = Path(config_path)
    if not path.exists():
        console.print(f"[red]Error: Configuration file not found: {config_path}[/red]")
        sys.exit(1)

    errors = validate_config_file(path)
    if errors:
        console.print("[red]Configuration validation failed:[/red]")
        for error in errors:
            console.print(f"[red]  - {error}[/red]")
        sys.exit(1)
    else:
        console.print("[green]✓ Configuration is valid[/green]")


@config.command()
@click.option("--output", "-o", type=click.Path(), help="Output file path")
def generate(output: str | None) -> None:
    """Generate sample configuration."""
    sample_config = generate_sample_config()

    if output:
        output_path = Path(output)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w") as f:
            yaml.dump(sample_config, f, default_flow_style=False, indent=2)
        console.print(f"[green]✓ Sample configuration written to {output}[/green]")
    else:
        _print_data(sample_config, "Sample Configuration")


@config.command()
def show() -> None:
    """Show the effective configuration."""
    settings = _settings if _settings is not None else Settings()
    _print_data(settings.to_dict(), "Current Configuration")


def cli(argv: Sequence[str] | None = None) -> int:
    """Run the CLI; 0 on success, 1 on usage errors, 2 on runtime failures."""
    try:
        result = main.main(
            args=list(argv) if argv is not None else None,
            prog_name="fouriereg",
            standalone_mode=False,
        )
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except click.Abort:
        console.print("[red]Aborted[/red]")
        return 1
    except SystemExit as e:
        if e.code is None:
            return 0
        return e.code if isinstance(e.code, int) else 1
    except Exception as e:
        logger.debug("Unhandled error", exc_info=True)
        console.print(f"[red]Error: {e}[/red]")
        return 2
    return result if isinstance(result, int) else 0


def run() -> int:
    return cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(run())
