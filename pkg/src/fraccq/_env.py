"""Pin BLAS thread pools before numpy is first imported.

Parallelism in this package lives in its own worker pool; nested BLAS
threading would only fight it for the two memory channels and break
run-to-run reproducibility of the timing experiments. Pre-set environment
values are respected.
"""

import os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
