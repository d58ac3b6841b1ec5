"""
Numerical core: centered Fourier transforms, a minimal reverse-mode tape,
differentiable layers and the two optimizers used by the adaptation loops.
"""
