"""File formats: kernels, PGM images and masks, GMM priors, flat configs."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from codps.exceptions import ConfigError, DimensionError
from codps.priors import GmmPrior

__all__ = [
    "load_config",
    "load_gmm",
    "load_kernel",
    "load_mask",
    "read_pgm",
    "save_gmm",
    "write_pgm",
]


def load_kernel(path) -> np.ndarray:
    """Whitespace-separated rows of a 2-D kernel."""
    k = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if k.size == 0:
        raise DimensionError(f"empty kernel file {path}")
    return k


def read_pgm(path) -> np.ndarray:
    """Grayscale image (P2 or P5) scaled to [0, 1] by its maxval."""
    with Image.open(path) as im:
        if im.format != "PPM" or im.mode not in ("L", "I", "I;16", "I;16B"):
            raise DimensionError(f"{path} is not a grayscale PGM image")
        arr = np.asarray(im, dtype=np.float64)
        maxval = 255.0 if im.mode == "L" else 65535.0
    return arr / maxval


def write_pgm(path, image, maxval: int = 255):
    """Binary PGM of ``image`` clipped to [0, 1]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 2:
        raise DimensionError("PGM output must be 2-D")
    Image.fromarray(np.round(img * maxval).astype(np.uint8), mode="L").save(path, format="PPM")


def load_mask(path) -> np.ndarray:
    """PGM mask; nonzero pixels are observed."""
    return (read_pgm(path) != 0).astype(np.float64)


def save_gmm(path, prior: GmmPrior):
    """Header ``K n``, then per component: weight, mean row, n covariance rows."""
    with open(path, "w") as fh:
        fh.write(f"{prior.K} {prior.dim}\n")
        for k in range(prior.K):
            fh.write(f"{float(prior.weights[k])!r}\n")
            fh.write(" ".join(repr(float(v)) for v in prior.means[k]) + "\n")
            for row in prior.covariances[k]:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_gmm(path) -> GmmPrior:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        K, n = int(lines[0][0]), int(lines[0][1])
        weights, means, covs = [], [], []
        pos = 1
        for _ in range(K):
            weights.append(float(lines[pos][0]))
            means.append([float(v) for v in lines[pos + 1]])
            covs.append([[float(v) for v in lines[pos + 2 + r]] for r in range(n)])
            pos += 2 + n
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed GMM file {path}: {exc}") from exc
    return GmmPrior(weights, means, covs)


def load_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Values stay strings."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out
