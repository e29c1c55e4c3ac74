"""Forward operators with spectral or SVD factors.

Every operator acts on the last axis of its input (flattened row-major
images), so leading axes are free for batches of chains or channels.
Circulant operators are applied as ``ifft2(lam * fft2(x))``; a diagonal
between a transform and its inverse is scale-free, so this equals the
unitary factorization ``F^H diag(lam) F``. Kernels are embedded with their
center at pixel (0, 0) with circular wrap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from codps.exceptions import DimensionError, InvalidRangeError

__all__ = [
    "BlurDecimateOperator",
    "BlurOperator",
    "DenseOperator",
    "InpaintOperator",
    "LinearOperatorModel",
    "OperatorKind",
    "SeparableOperator",
    "SeparablePayload",
    "bccb_eigenvalues",
    "build_decimation_indices",
    "embed_kernel",
    "fold_spectrum",
    "separable_svd",
]


class OperatorKind(str, enum.Enum):
    DENSE = "dense"
    INPAINT = "inpaint"
    BLUR = "blur"
    BLUR_DECIMATE = "sr"
    SEPARABLE = "separable"


def embed_kernel(kernel, shape) -> np.ndarray:
    """Zero-pad ``kernel`` to ``shape`` and wrap its center onto (0, 0)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise DimensionError("kernel must be 2-D")
    H, W = shape
    kh, kw = kernel.shape
    if kh > H or kw > W:
        raise DimensionError(f"kernel {kernel.shape} larger than image {tuple(shape)}")
    out = np.zeros((H, W))
    out[:kh, :kw] = kernel
    return np.roll(out, (-(kh // 2), -(kw // 2)), axis=(0, 1))


def bccb_eigenvalues(kernel, shape) -> np.ndarray:
    """Eigenvalues of the BCCB matrix of cyclic convolution with ``kernel``.

    These are the unnormalized 2-D DFT of the embedded kernel, so the
    convolution is ``ifft2(lam * fft2(x))`` under any consistent DFT scaling.
    """
    return np.fft.fft2(embed_kernel(kernel, shape))


def fold_spectrum(lam, d: int) -> np.ndarray:
    """Average |lam|^2 over the d*d aliases that decimation folds together.

    Entry (i, j) of the result collects frequencies (i + a*m1, j + b*m2)
    for a, b in range(d), where (m1, m2) is the decimated grid shape.
    """
    lam = np.asarray(lam)
    H, W = lam.shape
    if d < 1 or H % d or W % d:
        raise DimensionError(f"grid {lam.shape} is not divisible by factor {d}")
    power = np.abs(lam) ** 2
    return power.reshape(d, H // d, d, W // d).mean(axis=(0, 2))


def build_decimation_indices(shape, d: int) -> np.ndarray:
    """Row-major flat indices of the top-left pixel of each d-by-d block."""
    H, W = shape
    if d < 1 or H % d or W % d:
        raise DimensionError(f"shape {tuple(shape)} is not divisible by factor {d}")
    rows = np.arange(0, H, d)
    cols = np.arange(0, W, d)
    return (rows[:, None] * W + cols[None, :]).ravel()


@dataclass(frozen=True)
class SeparablePayload:
    A_l: np.ndarray
    A_r: np.ndarray
    U_l: np.ndarray
    s_l: np.ndarray
    Vt_l: np.ndarray
    U_r: np.ndarray
    s_r: np.ndarray
    Vt_r: np.ndarray


def separable_svd(A_l, A_r) -> SeparablePayload:
    """Thin SVDs of both factors (singular values in nonincreasing order)."""
    A_l = np.asarray(A_l, dtype=np.float64)
    A_r = np.asarray(A_r, dtype=np.float64)
    if A_l.ndim != 2 or A_r.ndim != 2:
        raise DimensionError("separable factors must be matrices")
    U_l, s_l, Vt_l = np.linalg.svd(A_l, full_matrices=False)
    U_r, s_r, Vt_r = np.linalg.svd(A_r, full_matrices=False)
    return SeparablePayload(A_l, A_r, U_l, s_l, Vt_l, U_r, s_r, Vt_r)


class LinearOperatorModel:
    """Common surface: ``apply``/``adjoint`` on the last axis."""

    kind: OperatorKind
    shape_in: tuple
    shape_out: tuple

    @property
    def n_in(self) -> int:
        return int(np.prod(self.shape_in))

    @property
    def n_out(self) -> int:
        return int(np.prod(self.shape_out))

    def _check(self, v, n, what):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 0 or v.shape[-1] != n:
            raise DimensionError(
                f"{type(self).__name__}.{what} expects last axis {n}, got shape {v.shape}"
            )
        return v

    def apply(self, x):
        x = self._check(x, self.n_in, "apply")
        return self._apply(x)

    def adjoint(self, y):
        y = self._check(y, self.n_out, "adjoint")
        return self._adjoint(y)

    def __call__(self, x):
        return self.apply(x)

    def __repr__(self):
        return f"{type(self).__name__}(n_in={self.n_in}, n_out={self.n_out})"


class DenseOperator(LinearOperatorModel):
    kind = OperatorKind.DENSE

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DimensionError("dense operator needs a 2-D matrix")
        self.matrix = matrix
        self.shape_out = (matrix.shape[0],)
        self.shape_in = (matrix.shape[1],)

    def _apply(self, x):
        return x @ self.matrix.T

    def _adjoint(self, y):
        return y @ self.matrix


class InpaintOperator(LinearOperatorModel):
    """Pointwise mask; measurements live on the full grid, zero off-mask."""

    kind = OperatorKind.INPAINT

    def __init__(self, mask):
        mask = np.asarray(mask)
        if not np.all((mask == 0) | (mask == 1)):
            raise InvalidRangeError("inpainting mask must be binary")
        self.mask = mask.astype(np.float64)
        self.shape_in = self.shape_out = mask.shape
        self._flat = self.mask.ravel()

    def _apply(self, x):
        return x * self._flat

    def _adjoint(self, y):
        return y * self._flat


class BlurOperator(LinearOperatorModel):
    """Cyclic 2-D convolution diagonalized by the DFT."""

    kind = OperatorKind.BLUR

    def __init__(self, kernel, shape):
        self.kernel = np.asarray(kernel, dtype=np.float64)
        self.shape_in = self.shape_out = tuple(int(s) for s in shape)
        self.lam = bccb_eigenvalues(self.kernel, self.shape_in)

    def _filter(self, x, spectrum, shape):
        img = x.reshape(x.shape[:-1] + shape)
        out = np.fft.ifft2(np.fft.fft2(img) * spectrum).real
        return out.reshape(x.shape[:-1] + (-1,))

    def _apply(self, x):
        return self._filter(x, self.lam, self.shape_in)

    def _adjoint(self, y):
        return self._filter(y, np.conj(self.lam), self.shape_in)


class BlurDecimateOperator(BlurOperator):
    """Cyclic blur followed by keeping the top-left pixel of each block."""

    kind = OperatorKind.BLUR_DECIMATE

    def __init__(self, kernel, shape, factor: int):
        super().__init__(kernel, shape)
        self.factor = int(factor)
        self.indices = build_decimation_indices(self.shape_in, self.factor)
        H, W = self.shape_in
        self.shape_out = (H // self.factor, W // self.factor)
        self.gamma = fold_spectrum(self.lam, self.factor)

    def decimate(self, x):
        return x[..., self.indices]

    def zero_fill(self, y):
        out = np.zeros(y.shape[:-1] + (self.n_in,))
        out[..., self.indices] = y
        return out

    def _apply(self, x):
        return self.decimate(super()._apply(x))

    def _adjoint(self, y):
        return super()._adjoint(self.zero_fill(y))


class SeparableOperator(LinearOperatorModel):
    """``X -> A_l X A_r^T`` on the row-major reshaped image."""

    kind = OperatorKind.SEPARABLE

    def __init__(self, A_l, A_r):
        self.payload = separable_svd(A_l, A_r)
        p = self.payload
        self.shape_in = (p.A_l.shape[1], p.A_r.shape[1])
        self.shape_out = (p.A_l.shape[0], p.A_r.shape[0])

    def _apply(self, x):
        X = x.reshape(x.shape[:-1] + self.shape_in)
        Y = self.payload.A_l @ X @ self.payload.A_r.T
        return Y.reshape(x.shape[:-1] + (-1,))

    def _adjoint(self, y):
        Y = y.reshape(y.shape[:-1] + self.shape_out)
        X = self.payload.A_l.T @ Y @ self.payload.A_r
        return X.reshape(y.shape[:-1] + (-1,))
