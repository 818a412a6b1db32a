"""Python bindings for the paramshift C++ core."""

from ._core import (
    Directions,
    Error,
    Generator,
    decode_png,
    encode_png,
    generate_dataset,
    run_cli,
    spectrum,
)

__all__ = [
    "Directions",
    "Error",
    "Generator",
    "decode_png",
    "encode_png",
    "generate_dataset",
    "run_cli",
    "spectrum",
]
