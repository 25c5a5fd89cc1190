"""Secrecy-rate precoding for the real-valued MIMO wiretap channel.

Library layout:

* secrecy  — rate objective, gradient, feasibility projection, factors.
* solvers  — projected-gradient label oracle and the GSVD/water-filling
             closed-form baseline.
* features — channel -> 72-feature input and covariance <-> 6-vector codecs.
* network  — from-scratch residual PReLU regressor with Adam training.
* dataset  — binary sample files: generation, cascade, streaming reads.
* harness  — evaluation, latency benchmarking, plots (backing the CLI).

Hot solver kernels run on a compiled backend when the extension is
built, with a pure-numpy fallback (see wtap._backend).
"""

from . import _backend

__version__ = "0.1.0"

backend_name = _backend.name
have_compiled_backend = _backend.HAVE_COMPILED
