"""Bessel functions of the first and second kind and the Hankel function.

Only the argument range needed by the benchmark problems is supported
(``0 <= x <= 60``).  All functions accept a scalar order and a scalar or
array argument and return an array of the same shape as ``x``.

Branches
--------
* ``x <= SERIES_CUTOFF``: ascending power series.
* ``x > SERIES_CUTOFF``: Miller backward recurrence, normalised with the
  Neumann-type sum ``(x/2)**mu = sum_k (mu+2k) Gamma(mu+k)/k! J_{mu+2k}(x)``.

Negative non-integer orders at large argument are reached by downward
recurrence from two positive orders, which is the stable direction for J.
``Y_0`` and ``Y_1`` use the ascending series for small x and the Neumann
expansions in even-order J for large x; higher integer orders follow by
forward recurrence (stable for Y).
"""

from __future__ import annotations

import math

import numpy as np

X_MAX = 60.0
SERIES_CUTOFF = 12.0
SERIES_TERMS = 80
EULER_GAMMA = 0.57721566490153286061

_BIG = 1e250


def _as_array(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > X_MAX) or np.any(~np.isfinite(x)):
        raise ValueError(f"Bessel argument outside the supported range [0, {X_MAX}]")
    return x


def _is_integer(nu: float) -> bool:
    return float(nu).is_integer()


def _series_j(nu: float, x: np.ndarray) -> np.ndarray:
    """Ascending series sum_m (-1)^m (x/2)^(2m+nu) / (m! Gamma(m+nu+1))."""
    half = 0.5 * x
    q = -half * half
    out = np.zeros_like(x)
    # first coefficient; 1/Gamma vanishes at non-positive integers
    m0 = 0
    if _is_integer(nu) and nu < 0:
        m0 = int(-nu)
    coef = 1.0 / (math.factorial(m0) * math.gamma(m0 + nu + 1.0))
    term = coef * q**m0
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(x > 0, half**nu, 1.0 if nu == 0 else 0.0)
    for m in range(m0, m0 + SERIES_TERMS):
        out = out + term
        term = term * q / ((m + 1) * (m + 1 + nu))
    return out * lead


def _miller(mu: float, x: np.ndarray, n_orders: int) -> np.ndarray:
    """J_{mu+j}(x) for j = 0..n_orders-1 by backward recurrence, 0 <= mu < 1.

    Returns an array of shape (n_orders, x.size).  Requires x > 0.
    """
    x = np.atleast_1d(x).astype(float)
    start = int(max(n_orders, x.max())) + 40
    start += start % 2  # normalisation sum runs over even offsets
    f_next = np.zeros_like(x)
    f_cur = np.full_like(x, 1e-300)
    stored = np.zeros((n_orders, x.size))
    norm = np.zeros_like(x)

    def weight(j: int) -> float:
        # coefficient of J_{mu+j} in the normalisation sum (j even)
        k = j // 2
        if mu == 0.0:
            return 1.0 if k == 0 else 2.0
        return (mu + 2 * k) * math.gamma(mu + k) / math.factorial(k)

    for j in range(start, -1, -1):
        if j < n_orders:
            stored[j] = f_cur
        if j % 2 == 0:
            norm = norm + weight(j) * f_cur
        if j == 0:
            break
        f_prev = (2.0 * (mu + j) / x) * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > _BIG
        if np.any(big):
            scale = np.where(big, 1.0 / _BIG, 1.0)
            f_cur = f_cur * scale
            f_next = f_next * scale
            stored = stored * scale
            norm = norm * scale
    target = (0.5 * x) ** mu
    return stored * (target / norm)


def _j_large(nu: float, x: np.ndarray) -> np.ndarray:
    if nu >= 0:
        n = int(math.floor(nu))
        mu = nu - n
        return _miller(mu, x, n + 1)[n]
    if _is_integer(nu):
        n = int(-nu)
        return (-1) ** n * _miller(0.0, x, n + 1)[n]
    # downward recurrence J_{v-1} = (2v/x) J_v - J_{v+1}
    steps = int(math.ceil(-nu))
    top = nu + steps  # in [0, 1)
    vals = _miller(top, x, 2)
    j_hi, j_cur = vals[1], vals[0]
    v = top
    for _ in range(steps):
        j_lo = (2.0 * v / x) * j_cur - j_hi
        j_hi, j_cur = j_cur, j_lo
        v -= 1.0
    return j_cur


def bessel_j(nu: float, x):
    """Bessel function of the first kind J_nu(x) for real order nu.

    Parameters
    ----------
    nu : float
        Order.  Negative non-integer orders are allowed for ``x > 0``.
    x : float or array_like
        Argument in ``[0, 60]``.

    Returns
    -------
    numpy.ndarray or float
        Values with absolute accuracy around 1e-13 on the supported range.
    """
    scalar = np.ndim(x) == 0
    x = _as_array(x)
    xf = np.atleast_1d(x)
    if nu < 0 and not _is_integer(nu) and np.any(xf == 0):
        raise ValueError("J_nu is singular at x = 0 for negative non-integer nu")
    out = np.empty_like(xf)
    small = xf <= SERIES_CUTOFF
    if np.any(small):
        out[small] = _series_j(nu, xf[small])
    if np.any(~small):
        out[~small] = _j_large(nu, xf[~small])
    return float(out[0]) if scalar else out.reshape(x.shape)


def bessel_j_derivative(nu: float, x, order: int = 1):
    """First or second derivative of J_nu from the recurrence identities.

    ``J' = (J_{nu-1} - J_{nu+1}) / 2`` and
    ``J'' = (J_{nu-2} - 2 J_nu + J_{nu+2}) / 4``.
    """
    if order == 1:
        return 0.5 * (bessel_j(nu - 1, x) - bessel_j(nu + 1, x))
    if order == 2:
        return 0.25 * (bessel_j(nu - 2, x) - 2.0 * bessel_j(nu, x) + bessel_j(nu + 2, x))
    raise ValueError("only first and second derivatives are provided")


def _harmonic(n: int) -> float:
    return sum(1.0 / i for i in range(1, n + 1))


def _y01_series(x: np.ndarray):
    half = 0.5 * x
    q = half * half
    log_term = np.log(half) + EULER_GAMMA
    j0 = _series_j(0.0, x)
    j1 = _series_j(1.0, x)

    s0 = np.zeros_like(x)
    term = np.ones_like(x)  # (x^2/4)^k / (k!)^2
    for k in range(1, SERIES_TERMS):
        term = term * q / (k * k)
        s0 = s0 + (-1) ** (k + 1) * _harmonic(k) * term
    y0 = (2.0 / math.pi) * (log_term * j0 + s0)

    s1 = np.zeros_like(x)
    term = half.copy()  # (x/2)^(2k+1) / (k! (k+1)!)
    for k in range(SERIES_TERMS):
        psi_sum = -2.0 * EULER_GAMMA + _harmonic(k) + _harmonic(k + 1)
        s1 = s1 + (-1) ** k * psi_sum * term
        term = term * q / ((k + 1) * (k + 2))
    y1 = -2.0 / (math.pi * x) + (2.0 / math.pi) * np.log(half) * j1 - s1 / math.pi
    return y0, y1


def _y01_neumann(x: np.ndarray):
    n_orders = int(x.max()) + 60
    jn = _miller(0.0, x, n_orders)
    log_term = np.log(0.5 * x) + EULER_GAMMA
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    for k in range(1, (n_orders - 2) // 2):
        sign = (-1) ** k
        s0 = s0 + sign * jn[2 * k] / k
        s1 = s1 + sign * (jn[2 * k - 1] - jn[2 * k + 1]) / k
    y0 = (2.0 / math.pi) * log_term * jn[0] - (4.0 / math.pi) * s0
    y1 = (2.0 / math.pi) * (log_term * jn[1] - jn[0] / x) + (2.0 / math.pi) * s1
    return y0, y1


def bessel_y(n: int, x):
    """Bessel function of the second kind Y_n(x) for integer order, x > 0."""
    if not _is_integer(n):
        raise ValueError("bessel_y supports integer orders only")
    n = int(n)
    scalar = np.ndim(x) == 0
    x = _as_array(x)
    xf = np.atleast_1d(x)
    if np.any(xf <= 0):
        raise ValueError("Y_n is singular at x = 0")
    sign = 1.0
    if n < 0:
        sign = (-1.0) ** n
        n = -n
    y0 = np.empty_like(xf)
    y1 = np.empty_like(xf)
    small = xf <= 8.0
    if np.any(small):
        y0[small], y1[small] = _y01_series(xf[small])
    if np.any(~small):
        y0[~small], y1[~small] = _y01_neumann(xf[~small])
    if n == 0:
        out = y0
    else:
        prev, cur = y0, y1
        for j in range(1, n):
            prev, cur = cur, (2.0 * j / xf) * cur - prev
        out = cur
    out = sign * out
    return float(out[0]) if scalar else out.reshape(x.shape)


def hankel1(n: int, x):
    """Hankel function of the first kind H^(1)_n(x) = J_n(x) + i Y_n(x)."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise ValueError("hankel1 requires x > 0")
    return bessel_j(n, x) + 1j * bessel_y(n, x)


def hankel1_derivative(n: int, x, order: int = 1):
    """Derivatives of H^(1)_n via the same recurrences as for J."""
    if order == 1:
        return 0.5 * (hankel1(n - 1, x) - hankel1(n + 1, x))
    if order == 2:
        return 0.25 * (hankel1(n - 2, x) - 2.0 * hankel1(n, x) + hankel1(n + 2, x))
    raise ValueError("only first and second derivatives are provided")
