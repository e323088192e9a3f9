"""File formats and datasets for fouriereg."""

from .dataset import DatasetManifest, ManifestError, load_pairs
from .pgm import PGMError, read_pgm, write_pgm
from .tensorfile import TensorFileError, read_tensor, write_tensor

__all__ = [
    "DatasetManifest",
    "ManifestError",
    "PGMError",
    "TensorFileError",
    "load_pairs",
    "read_pgm",
    "read_tensor",
    "write_pgm",
    "write_tensor",
]
