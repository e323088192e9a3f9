"""Configuration settings for fouriereg."""

import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings

VariantKind = Literal[
    "fourier-net",
    "fourier-net-plus",
    "unet",
    "bilinear-net",
    "bilinear-net-plus",
]

_PLAN_REDUCTIONS = (1, 2, 4, 8, 16)


class NetVariant(BaseModel):
    """Network variant selector."""

    model_config = ConfigDict(frozen=True)

    kind: VariantKind = "fourier-net"
    image_reduction: int = 1
    field_reduction: int = 4
    cascades: int = Field(default=1, ge=1)
    diffeomorphic: bool = False
    base_channels: int = Field(default=8, ge=1)
    dims: Literal[2, 3] = 2
    embed_dft: bool = True
    zero_nyquist: bool = True
    exp_steps: int = Field(default=7, ge=1)

    @field_validator("image_reduction", "field_reduction")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value not in _PLAN_REDUCTIONS:
            raise ValueError(
                f"reduction must be one of {_PLAN_REDUCTIONS}, got {value}"
            )
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "NetVariant":
        if self.field_reduction < self.image_reduction:
            raise ValueError(
                f"field_reduction {self.field_reduction} is finer than "
                f"image_reduction {self.image_reduction}"
            )
        if self.band_limited_input and self.image_reduction < 2:
            raise ValueError(f"{self.kind} needs image_reduction >= 2")
        if not self.band_limited_input and self.image_reduction != 1:
            raise ValueError(
                f"{self.kind} takes full-resolution images (image_reduction 1)"
            )
        if self.kind == "unet" and self.field_reduction != 1:
            raise ValueError("unet predicts full-resolution fields (field_reduction 1)")
        if self.cascades > 1 and self.kind != "fourier-net-plus":
            raise ValueError("cascades > 1 is only defined for fourier-net-plus")
        return self

    @property
    def uses_codec(self) -> bool:
        """Whether the field goes through the band-limited Fourier decoder."""
        return self.kind in ("fourier-net", "fourier-net-plus")

    @property
    def band_limited_input(self) -> bool:
        """Whether the CNN sees reduced-resolution images."""
        return self.kind in ("fourier-net-plus", "bilinear-net-plus")

    @property
    def output_channels(self) -> int:
        """Channels emitted by the final convolution."""
        if self.uses_codec and not self.embed_dft:
            return 2 * self.dims
        return self.dims

    @property
    def label(self) -> str:
        """Human-readable name, e.g. ``Diff-2xFourier-Net+``."""
        names = {
            "fourier-net": "Fourier-Net",
            "fourier-net-plus": "Fourier-Net+",
            "unet": "U-Net",
            "bilinear-net": "Bilinear-Net",
            "bilinear-net-plus": "Bilinear-Net+",
        }
        name = names[self.kind]
        if self.cascades > 1:
            name = f"{self.cascades}x{name}"
        return f"Diff-{name}" if self.diffeomorphic else name


class TrainConfig(BaseModel):
    """Loss and optimizer configuration."""

    model_config = ConfigDict(populate_by_name=True)

    loss: Literal["mse", "ncc"] = "mse"
    lambda_: float = Field(default=0.01, alias="lambda", ge=0.0)
    epochs: int = Field(default=10, ge=1)
    batch: int = Field(default=1, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps_adam: float = Field(default=1e-8, gt=0.0)
    seed: int = 0
    checkpoint_every: int = Field(default=1, ge=1)
    ncc_window: int = Field(default=9, ge=1)
    ncc_eps: float = Field(default=1e-5, gt=0.0)
    dtype: Literal["float32", "float64"] = "float32"


class DataConfig(BaseModel):
    """Synthetic dataset configuration."""

    shape: tuple[int, ...] = (96, 96)
    deform_scale: float = Field(default=3.0, ge=0.0)
    n_train: int = Field(default=200, ge=1)
    n_test: int = Field(default=20, ge=1)
    n_labels: int = Field(default=4, ge=1, le=4)
    pairing: Literal["listed", "all-pairs", "atlas-to-subject"] = "listed"

    @field_validator("shape", mode="before")
    @classmethod
    def _parse_shape(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(int(part) for part in value.lower().split("x"))
        return value

    @field_validator("shape")
    @classmethod
    def _divisible(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if len(value) not in (2, 3) or any(axis <= 0 or axis % 8 for axis in value):
            raise ValueError(f"shape axes must be positive multiples of 8, got {value}")
        return value


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = "INFO"
    format: Literal["json", "text"] = "text"
    output: Literal["stderr", "stdout", "file"] = "stderr"
    file_path: str | None = None


# Flat ``key=value`` names and the nested field each one sets.
FLAT_KEYS: dict[str, tuple[str, str]] = {
    "variant": ("model", "kind"),
    "kind": ("model", "kind"),
    "cascades": ("model", "cascades"),
    "diff": ("model", "diffeomorphic"),
    "diffeomorphic": ("model", "diffeomorphic"),
    "image_reduction": ("model", "image_reduction"),
    "field_reduction": ("model", "field_reduction"),
    "channels": ("model", "base_channels"),
    "base_channels": ("model", "base_channels"),
    "dims": ("model", "dims"),
    "embed_dft": ("model", "embed_dft"),
    "zero_nyquist": ("model", "zero_nyquist"),
    "exp_steps": ("model", "exp_steps"),
    "loss": ("training", "loss"),
    "lambda": ("training", "lambda"),
    "epochs": ("training", "epochs"),
    "batch": ("training", "batch"),
    "lr": ("training", "lr"),
    "beta1": ("training", "beta1"),
    "beta2": ("training", "beta2"),
    "eps_adam": ("training", "eps_adam"),
    "seed": ("training", "seed"),
    "checkpoint_every": ("training", "checkpoint_every"),
    "ncc_window": ("training", "ncc_window"),
    "dtype": ("training", "dtype"),
    "shape": ("data", "shape"),
    "deform_scale": ("data", "deform_scale"),
    "n_train": ("data", "n_train"),
    "n_test": ("data", "n_test"),
    "n_labels": ("data", "n_labels"),
    "pairing": ("data", "pairing"),
    "log_level": ("logging", "level"),
    "log_format": ("logging", "format"),
}


class Settings(BaseSettings):
    """Main settings configuration."""

    model: NetVariant = Field(default_factory=NetVariant)
    training: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    model_config = {
        "env_prefix": "FOUREG_",
        "env_nested_delimiter": "__",
        "case_sensitive": False,
        "extra": "ignore",
        "protected_namespaces": (),
    }

    @classmethod
    def _substitute_env_vars(cls, data: Any) -> Any:
        """Recursively substitute environment variables in configuration data."""
        if isinstance(data, dict):
            return {k: cls._substitute_env_vars(v) for k, v in data.items()}
        elif isinstance(data, list):
            return [cls._substitute_env_vars(item) for item in data]
        elif isinstance(data, str) and data.startswith("${") and data.endswith("}"):
            env_var = data[2:-1]
            # Handle default values in format ${VAR:-default}
            if ":-" in env_var:
                var_name, default_value = env_var.split(":-", 1)
                return os.getenv(var_name, default_value)
            value = os.getenv(env_var)
            return data if value is None else value
        else:
            return data

    @staticmethod
    def _nest(flat: dict[str, Any]) -> dict[str, Any]:
        """Turn flat or dotted keys into the nested section layout."""
        nested: dict[str, Any] = {}
        for key, value in flat.items():
            name = key.strip().lower().replace("-", "_")
            if name in FLAT_KEYS:
                section, field = FLAT_KEYS[name]
            elif "." in name:
                section, field = name.split(".", 1)
            else:
                raise ValueError(f"Unknown configuration key: {key}")
            nested.setdefault(section, {})[field] = value
        return nested

    @staticmethod
    def parse_key_values(text: str) -> dict[str, str]:
        """Parse flat ``key=value`` lines, skipping blanks and ``#`` comments."""
        values: dict[str, str] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {number}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return values

    @classmethod
    def from_file(cls, config_path: Path) -> "Settings":
        """Load settings from a YAML or flat key=value configuration file."""
        config_path = Path(config_path)
        text = config_path.read_text()

        if config_path.suffix in (".yaml", ".yml"):
            import yaml

            config_data = yaml.safe_load(text) or {}
        else:
            config_data = cls._nest(cls.parse_key_values(text))

        # Handle environment variable substitution
        config_data = cls._substitute_env_vars(config_data)

        return cls(**config_data)

    def with_overrides(self, **flat: Any) -> "Settings":
        """Return a copy with flat overrides applied; ``None`` values are ignored."""
        given = {k: v for k, v in flat.items() if v is not None}
        if not given:
            return self
        data = self.to_dict()
        for section, values in self._nest(given).items():
            data.setdefault(section, {}).update(values)
        return type(self)(**data)

    def to_dict(self) -> dict[str, Any]:
        """Convert settings to dictionary."""
        return self.model_dump(mode="json", by_alias=True)
