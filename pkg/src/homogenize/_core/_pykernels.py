"""Pure-Python (numpy) fallback for the compiled orbit kernels.

Signatures and results match :mod:`homogenize._core._ckernels`; the compiled
module is preferred when it imports.
"""

import numpy as np

MASK53 = np.uint64((1 << 53) - 1)
INV53 = 1.0 / 9007199254740992.0


def _noise_bits(noise, n):
    raw = np.ascontiguousarray(noise, dtype="<u8").view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :n].astype(np.uint64)


def doubling_orbit(s, noise, n, record):
    # The state after k steps is the 53-bit window starting at bit k of the
    # stream (initial mantissa bits, then injected noise bits).
    M = s.shape[0]
    shifts = np.arange(52, -1, -1, dtype=np.uint64)
    head = (s[:, None] >> shifts[None, :]) & np.uint64(1)
    stream = np.concatenate([head, _noise_bits(noise, n)], axis=1)
    window = np.zeros((M, n + 1), dtype=np.uint64)
    for i in range(53):
        window = (window << np.uint64(1)) | stream[:, i:i + n + 1]
    s[:] = window[:, n]
    if not record:
        return None
    return np.ascontiguousarray((window[:, :n] * INV53).T)


def pm_orbit(x, noise, n, alpha, record):
    M = x.shape[0]
    bits = _noise_bits(noise, n).astype(np.float64) * INV53
    c = 2.0 ** alpha
    out = np.empty((n, M)) if record else None
    xi = x.copy()
    for k in range(n):
        if record:
            out[k] = xi
        low = xi < 0.5
        lo = xi * (1.0 + c * np.power(xi, alpha))
        lo = np.where(lo >= 1.0, 1.0 - INV53, lo)
        hi = (2.0 * xi - 1.0) + bits[:, k]
        xi = np.where(low, lo, hi)
    x[:] = xi
    return out


def cat_orbit(s, n, record):
    M = s.shape[0]
    out = np.empty((n, M, 2)) if record else None
    a = s[:, 0].copy()
    b = s[:, 1].copy()
    two = np.uint64(2)
    for k in range(n):
        if record:
            out[k, :, 0] = a * INV53
            out[k, :, 1] = b * INV53
        a, b = (two * a + b) & MASK53, (a + b) & MASK53
    s[:, 0] = a
    s[:, 1] = b
    return out


def _lorenz_rhs(x, y, z, sigma, rho, beta):
    return sigma * (y - x), x * (rho - z) - y, x * y - beta * z


def lorenz_orbit(state, h, substeps, n, sigma, rho, beta, record):
    M = state.shape[0]
    out = np.empty((n, M, 3)) if record else None
    x, y, z = state[:, 0].copy(), state[:, 1].copy(), state[:, 2].copy()
    h2, h6 = 0.5 * h, h / 6.0
    bad = -1
    for k in range(n):
        if record:
            out[k, :, 0] = x
            out[k, :, 1] = y
            out[k, :, 2] = z
        for _ in range(substeps):
            k1x, k1y, k1z = _lorenz_rhs(x, y, z, sigma, rho, beta)
            k2x, k2y, k2z = _lorenz_rhs(x + h2 * k1x, y + h2 * k1y, z + h2 * k1z,
                                        sigma, rho, beta)
            k3x, k3y, k3z = _lorenz_rhs(x + h2 * k2x, y + h2 * k2y, z + h2 * k2z,
                                        sigma, rho, beta)
            k4x, k4y, k4z = _lorenz_rhs(x + h * k3x, y + h * k3y, z + h * k3z,
                                        sigma, rho, beta)
            x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            y = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            z = z + h6 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        if bad < 0:
            finite = np.isfinite(x) & np.isfinite(y) & np.isfinite(z)
            if not finite.all():
                bad = int(np.argmin(finite))
    state[:, 0] = x
    state[:, 1] = y
    state[:, 2] = z
    return out, bad
