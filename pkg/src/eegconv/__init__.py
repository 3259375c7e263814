"""Sex classification from resting-state EEG with small convolutional networks.

Subpackages and modules:

* ``preprocessing``: rest-segment extraction, resampling, FIR band-pass,
  mastoid re-reference and 2-s epoching.
* ``spectral``: Welch band powers and head-disk topographic images.
* ``nn``: a numpy CNN engine with Adamax and gradient checking.
* ``models``: the four named network configurations.
* ``training`` / ``experiment``: training loop, splits, votes and statistics.
* ``synth``: synthetic cohorts with a controllable alpha effect.
* ``io`` / ``cli``: file formats and the ``eegconv`` command.
"""
from .estimators import ConvNetClassifier, SpectralTopomapTransformer
from .exceptions import NonFiniteGradientError, ParseError, ShapeError
from .models import MODEL_NAMES, PUBLISHED_PARAMETER_COUNTS, build

__version__ = "0.1.0"

__all__ = [
    "ConvNetClassifier", "MODEL_NAMES", "NonFiniteGradientError", "PUBLISHED_PARAMETER_COUNTS",
    "ParseError", "ShapeError", "SpectralTopomapTransformer", "build",
]
