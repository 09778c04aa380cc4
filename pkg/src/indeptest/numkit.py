"""Random streams, normal/gamma distribution functions and the median heuristic.

Matrices throughout the package are plain float64 numpy arrays.
"""

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "make_rng",
    "stream_id",
    "normal_cdf",
    "normal_quantile",
    "gamma_cdf",
    "gamma_pdf",
    "gamma_quantile",
    "median_pairwise_sqdist",
]


def make_rng(seed, stream=0):
    """Return a numpy Generator for the stream ``(seed, stream)``.

    Streams are derived with ``SeedSequence(seed, spawn_key=(stream,))`` so any
    two distinct stream ids give independent PCG64 states, and the same pair
    always reproduces the same draws.
    """
    if isinstance(stream, (tuple, list)):
        key = tuple(int(s) for s in stream)
    else:
        key = (int(stream),)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def stream_id(*parts):
    """Stable 32-bit stream id from strings/ints (used to key replicates)."""
    import zlib

    text = "/".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8"))


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0.0) | ~(p_arr < 1.0)):
        raise DomainError(f"normal_quantile needs p in (0, 1), got {p!r}")
    return special.ndtri(p)


def _check_gamma(shape, scale):
    if not (np.all(np.asarray(shape) > 0) and np.all(np.asarray(scale) > 0)):
        raise DomainError(f"gamma shape and scale must be positive, got {shape!r}, {scale!r}")


def gamma_cdf(x, shape, scale=1.0):
    _check_gamma(shape, scale)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("gamma_cdf needs x >= 0")
    out = special.gammainc(shape, x / scale)
    return out if out.ndim else float(out)


def gamma_pdf(x, shape, scale=1.0):
    _check_gamma(shape, scale)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("gamma_pdf needs x >= 0")
    z = x / scale
    with np.errstate(divide="ignore"):
        logp = special.xlogy(shape - 1.0, z) - z - special.gammaln(shape) - np.log(scale)
    out = np.exp(logp)
    return out if out.ndim else float(out)


def gamma_quantile(p, shape, scale=1.0):
    """Inverse of :func:`gamma_cdf` in ``x``, polished with Newton steps."""
    _check_gamma(shape, scale)
    if not 0.0 < p < 1.0:
        raise DomainError(f"gamma_quantile needs p in (0, 1), got {p!r}")
    z = float(special.gammaincinv(shape, p))
    for _ in range(3):
        dens = gamma_pdf(z, shape, 1.0)
        if not dens > 0:
            break
        step = (special.gammainc(shape, z) - p) / dens
        z_new = z - step
        if z_new <= 0 or not np.isfinite(z_new):
            break
        z = z_new
        if abs(step) <= 1e-15 * max(z, 1.0):
            break
    return z * scale


def median_pairwise_sqdist(points):
    """Lower median of squared Euclidean distances over unordered distinct pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n < 2:
        raise DomainError("median_pairwise_sqdist needs at least 2 points")
    sq = np.einsum("ij,ij->i", pts, pts)
    d = sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T
    iu = np.triu_indices(n, k=1)
    vals = np.maximum(d[iu], 0.0)
    # exact recompute for the selected entry avoids cancellation error
    k = (vals.size - 1) // 2
    idx = np.argpartition(vals, k)[k]
    i, j = iu[0][idx], iu[1][idx]
    diff = pts[i] - pts[j]
    return float(diff @ diff)
