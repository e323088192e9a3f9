"""Configuration checks and the sample configuration."""

from pathlib import Path
from typing import Any

from pydantic import ValidationError

from .settings import Settings

# Four stride-2 levels in every layer plan
MODEL_DIVISOR = 16


def _field_errors(error: ValidationError) -> list[str]:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "settings"
        messages.append(f"{location}: {item['msg']}")
    return messages


def check_settings(settings: Settings) -> list[str]:
    """Problems that only show up once the data meets the model."""
    problems = []
    shape = settings.data.shape
    if len(shape) != settings.model.dims:
        problems.append(
            f"data.shape {list(shape)} has {len(shape)} axes, "
            f"model.dims is {settings.model.dims}"
        )
    if any(n % MODEL_DIVISOR for n in shape):
        problems.append(
            f"data.shape {list(shape)} is not divisible by {MODEL_DIVISOR}; "
            "the model rejects such images"
        )
    reduction = settings.model.field_reduction
    if reduction > 1 and any((n // reduction) % 2 for n in shape):
        problems.append(
            f"data.shape {list(shape)} gives an odd field patch at "
            f"field_reduction {reduction}"
        )
    return problems


def validate_config_file(config_path: Path) -> list[str]:
    """Validate a configuration file; returns one message per problem."""
    config_path = Path(config_path)
    if not config_path.exists():
        return [f"Configuration file not found: {config_path}"]

    try:
        settings = Settings.from_file(config_path)
    except ValidationError as e:
        return [f"Failed to load configuration: {m}" for m in _field_errors(e)]
    except Exception as e:
        return [f"Failed to load configuration: {e}"]
    return check_settings(settings)


def generate_sample_config() -> dict[str, Any]:
    """The desk-scale Fourier-Net setup, every field spelled out."""
    settings = Settings(
        model={"kind": "fourier-net", "field_reduction": 4, "base_channels": 8},
        training={
            "loss": "mse",
            "lambda": 0.01,
            "epochs": 30,
            "batch": 1,
            "lr": 1e-4,
            "seed": 7,
            "checkpoint_every": 5,
        },
        data={"shape": [96, 96], "deform_scale": 3.0, "n_train": 200, "n_test": 20},
    )
    return settings.to_dict()
