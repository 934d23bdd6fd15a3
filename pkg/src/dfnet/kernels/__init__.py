"""Hot array kernels, numba-compiled with a pure-numpy fallback.

The DFNET_BACKEND environment variable picks the implementation at import
time: "numba" requires the compiled path, "numpy" forces the fallback, and
the default ("auto") uses numba when it is importable. Both backends share
signatures and conventions; `benchmarks/bench_kernels.py` compares them.
"""

import os

_choice = os.environ.get("DFNET_BACKEND", "auto").lower()
if _choice == "numpy":
    from . import numpy_backend as _impl
elif _choice == "numba":
    from . import numba_backend as _impl
elif _choice == "auto":
    try:
        from . import numba_backend as _impl
    except ImportError:
        from . import numpy_backend as _impl
else:
    raise RuntimeError(
        f"DFNET_BACKEND must be 'numba', 'numpy' or 'auto', got {_choice!r}"
    )

BACKEND = _impl.NAME

conv_out_size = _impl.conv_out_size
conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weights = _impl.conv2d_grad_weights
avg_pool_forward = _impl.avg_pool_forward
avg_pool_grad_input = _impl.avg_pool_grad_input
bilinear_forward = _impl.bilinear_forward
bilinear_grad_input = _impl.bilinear_grad_input
