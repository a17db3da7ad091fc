"""Instance space analysis: projection, footprints and boundary of algorithm performance."""

from .metadata import GoodnessMatrix, Metadata, compute_goodness, load_metadata
from .pilot import Projection, fit_projection, project_point

__version__ = "0.1.0"
