"""Grid-free Monte Carlo solvers for elliptic boundary value problems.

The walkers in this package estimate pointwise solution values by recursive
sphere sampling, never touching a mesh of the interior. On top of the raw
estimators sit a streaming estimate cache, randomized problem families, a
small neural surrogate trained directly against noisy walk estimates, and an
image inpainting demo.
"""

import os

# The bundled TBB on this image is too old for numba; pick the portable layer
# before numba is imported anywhere.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
