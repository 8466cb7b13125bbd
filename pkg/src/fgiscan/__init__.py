"""Fine-grained package profiling and malicious-package detection.

The pipeline: ingest registry archives into a corpus store, extract
three-facet profiles (registry metadata, static call sites, dynamic
install traces), study them statistically, and train classical
classifiers over embedding-based feature vectors.
"""

__version__ = "0.1.0"

from .catalog import (  # noqa: F401
    Category,
    FunctionCatalog,
    Language,
    default_catalog,
    load_catalog,
)
from .corpus import (  # noqa: F401
    CorpusStore,
    DatasetManifest,
    Ecosystem,
    ExtractionCaps,
    FileKind,
    Label,
    PackageRef,
    UnpackedTree,
    dedup,
)
from .errors import FgiscanError  # noqa: F401
from .profiles import FgiProfile  # noqa: F401
