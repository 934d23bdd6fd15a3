import os

# Backend parity is asserted head-on in test_kernels; the rest of the suite
# runs the numpy path so collection cost does not include jit compiles.
# Override by exporting DFNET_BACKEND before invoking pytest.
os.environ.setdefault("DFNET_BACKEND", "numpy")
