"""NumPy implementation of the kernels in ``_kernels.pyx``.

Same signatures and arithmetic, vectorized over nodes and quadrature points.
Used when the extension is not built or ``SLHJB_PURE_PYTHON`` is set.
"""

import numpy as np

LINEAR_EXTRAP = 1


def _destinations(base, c1, c2, xi):
    return base[:, None] + c1[:, None] * xi[None, :] + c2[:, None] * xi[None, :] * xi[None, :]


def _split(values, lo, dx, y):
    J = values.shape[0] - 1
    u = (y - lo) / dx
    k = np.clip(u.astype(np.intp), 0, J - 1)
    t = np.where(u <= 0.0, 0.0, np.where(u >= J, 1.0, u - k))
    return k, t


def _extrapolate(values, lo, dx, y, interp):
    J = values.shape[0] - 1
    u = (y - lo) / dx
    interp = np.where(u <= 0.0, values[0] + u * (values[1] - values[0]), interp)
    return np.where(u >= J, values[J] + (u - J) * (values[J] - values[J - 1]), interp)


def expect_linear_1d(values, lo, hi, dx, base, c1, c2, xi, lam, mode, out, flags, num_threads=1):
    y = _destinations(base, c1, c2, xi)
    k, t = _split(values, lo, dx, y)
    interp = (1.0 - t) * values[k] + t * values[k + 1]
    if mode == LINEAR_EXTRAP:
        interp = _extrapolate(values, lo, dx, y, interp)
    out[:] = interp @ lam
    flags[:] = np.any((y < lo) | (y > hi), axis=1)


def expect_pchip_1d(values, slopes, lo, hi, dx, base, c1, c2, xi, lam, mode, out, flags, num_threads=1):
    y = _destinations(base, c1, c2, xi)
    k, t = _split(values, lo, dx, y)
    t2 = t * t
    t3 = t2 * t
    interp = (
        (2.0 * t3 - 3.0 * t2 + 1.0) * values[k]
        + (t3 - 2.0 * t2 + t) * dx * slopes[k]
        + (-2.0 * t3 + 3.0 * t2) * values[k + 1]
        + (t3 - t2) * dx * slopes[k + 1]
    )
    if mode == LINEAR_EXTRAP:
        interp = _extrapolate(values, lo, dx, y, interp)
    out[:] = interp @ lam
    flags[:] = np.any((y < lo) | (y > hi), axis=1)
