"""Monte Carlo toolkit for chemical distances in supercritical bond percolation on Z^d."""
from .errors import (DataQualityError, DomainError, FormatError, InsufficientDataError,
                     LawViolation, PercolabError, RangeError, UnavailableError)
from .lattice import (EdgeConfiguration, LatticeBox, RenormScheme, derive_seed, deserialize,
                      sample_configuration, serialize)
from .clusters import label_clusters, nearest_giant_point
from .chemdist import INFINITY, chemical_distance, distance_field, geodesic, modified_distance
from .renorm import renorm_distance, renorm_geodesic

__version__ = "0.1.0"
