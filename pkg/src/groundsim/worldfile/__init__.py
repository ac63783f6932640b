"""World definition files: preprocessing, parsing, validation."""

from .expr import evaluate  # noqa: F401
from .preprocess import preprocess, preprocess_file  # noqa: F401
from .schema import (ElevationGrid, WorldDefinition, elevation_at,  # noqa: F401
                     load_world, parse_world)
