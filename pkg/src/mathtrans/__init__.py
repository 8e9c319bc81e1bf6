"""Tree-to-tree neural translation of mathematical formulae.

Parses generic/semantic LaTeX into only-leaf-labeled binary trees, clusters
them by topology into minibatches, and trains a recursive LSTM
encoder/decoder with a swap-aware child combination and a masked reduce-sum
loss.

Kept import-light on purpose: the CLI pins BLAS thread environment variables
before anything pulls in numpy.
"""

__version__ = "0.1.0"


def kernel_backend() -> str:
    """'ext' when the compiled topology kernels are in use, else 'pure'."""
    from . import kernels
    return kernels.BACKEND
