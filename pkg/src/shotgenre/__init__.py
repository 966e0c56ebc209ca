"""shotgenre: shot-based multi-modal movie genre classification toolkit.

Submodules map to the pipeline stages:

- featurestore: data model, record-stream files, synthetic generator
- aggregate:    shot/video mean pooling and sampling policy
- nn:           minimal MLP core (losses, Adam, gradients, grad checking)
- fusion:       early/intermediate/late fusion models, training, inference
- metrics:      macro/micro recall@0.5, precision@0.5, mAP; boundary report
- textlab:      keyword extraction, language features, TF-IDF analytics
- analysis:     sliding-window labeling, shot retrieval, pixel statistics
- sceneboundary: scene boundary samples, classifier, training, evaluation
- cli:          the "shotgenre" executable
"""

__version__ = "0.1.0"

from . import (  # noqa: F401  (re-exports)
    aggregate,
    analysis,
    featurestore,
    fusion,
    metrics,
    nn,
    sceneboundary,
    textlab,
)

__all__ = [
    "__version__",
    "aggregate",
    "analysis",
    "featurestore",
    "fusion",
    "metrics",
    "nn",
    "sceneboundary",
    "textlab",
]
