"""Special functions used by the kernel quadratures: erfc and Gamma.

``erfc`` follows the piecewise rational scheme of the SunPro libm
(FreeBSD ``s_erf.c``); the coefficient tables below are copied from it.

    Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
    Developed at SunPro, a Sun Microsystems, Inc. business.
    Permission to use, copy, modify, and distribute this software is
    freely granted, provided that this notice is preserved.

``gamma`` is the Lanczos approximation with g = 7 and nine terms.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.polynomial import polyval

_ERX = 8.45062911510467529297e-01

# erf on [0, 0.84375]
_PP = (1.28379167095512558561e-01, -3.25042107247001499370e-01,
       -2.84817495755985104766e-02, -5.77027029648944159157e-03,
       -2.37630166566501626084e-05)
_QQ = (1.0, 3.97917223959155352819e-01, 6.50222499887672944485e-02,
       5.08130628187576562776e-03, 1.32494738004321644526e-04,
       -3.96022827877536812320e-06)
# erf on [0.84375, 1.25]
_PA = (-2.36211856075265944077e-03, 4.14856118683748331666e-01,
       -3.72207876035701323847e-01, 3.18346619901161753674e-01,
       -1.10894694282396677476e-01, 3.54783043256182359371e-02,
       -2.16637559486879084300e-03)
_QA = (1.0, 1.06420880400844228286e-01, 5.40397917702171048937e-01,
       7.18286544141962662868e-02, 1.26171219808761642112e-01,
       1.36370839120290507362e-02, 1.19844998467991074170e-02)
# erfc on [1.25, 1/0.35]
_RA = (-9.86494403484714822705e-03, -6.93858572707181764372e-01,
       -1.05586262253232909814e01, -6.23753324503260060396e01,
       -1.62396669462573470355e02, -1.84605092906711035994e02,
       -8.12874355063065934246e01, -9.81432934416914548592e00)
_SA = (1.0, 1.96512716674392571292e01, 1.37657754143519042600e02,
       4.34565877475229228821e02, 6.45387271733267880336e02,
       4.29008140027567833386e02, 1.08635005541779435134e02,
       6.57024977031928170135e00, -6.04244152148580987438e-02)
# erfc on [1/0.35, 28]
_RB = (-9.86494292470009928597e-03, -7.99283237680523006574e-01,
       -1.77579549177547519889e01, -1.60636384855821916062e02,
       -6.37566443368389627722e02, -1.02509513161107724954e03,
       -4.83519191608651397019e02)
_SB = (1.0, 3.03380607434824582924e01, 3.25792512996573918826e02,
       1.53672958608443695994e03, 3.19985821950859553908e03,
       2.55305040643316442583e03, 4.74528541206955367215e02,
       -2.24409524465858183362e01)


def _erfc_nonneg(a):
    """erfc on a 1-D array of non-negative finite values."""
    out = np.zeros_like(a)

    m = a < 0.84375
    if m.any():
        x = a[m]
        z = x * x
        y = polyval(z, _PP) / polyval(z, _QQ)
        small = x < 0.25
        out_m = np.where(small, 1.0 - (x + x * y), 0.5 - (x * y + (x - 0.5)))
        out[m] = out_m

    m = (a >= 0.84375) & (a < 1.25)
    if m.any():
        s = a[m] - 1.0
        out[m] = (1.0 - _ERX) - polyval(s, _PA) / polyval(s, _QA)

    m = (a >= 1.25) & (a < 28.0)
    if m.any():
        x = a[m]
        s = 1.0 / (x * x)
        near = x < 1.0 / 0.35
        r = np.where(near, polyval(s, _RA), polyval(s, _RB))
        q = np.where(near, polyval(s, _SA), polyval(s, _SB))
        # split x so that exp(-z*z) is evaluated without rounding in z*z
        z = (x.view(np.uint64) & np.uint64(0xFFFFFFFF00000000)).view(np.float64)
        out[m] = np.exp(-z * z - 0.5625) * np.exp((z - x) * (z + x) + r / q) / x
    return out


def erfc(x):
    """Complementary error function, elementwise.

    Relative error stays below 1e-15 on [0, 10]; returns a float for
    scalar input.
    """
    arr = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(arr).ravel()
    a = np.abs(flat)
    res = _erfc_nonneg(np.where(np.isfinite(a), a, 0.0))
    res = np.where(np.isinf(a), 0.0, res)
    res = np.where(flat < 0, 2.0 - res, res)
    res = np.where(np.isnan(flat), np.nan, res)
    if arr.ndim == 0:
        return float(res[0])
    return res.reshape(arr.shape)


def erf(x):
    return 1.0 - erfc(x)


_LANCZOS_G = 7.0
_LANCZOS = (0.99999999999980993, 676.5203681218851, -1259.1392167224028,
            771.32342877765313, -176.61502916214059, 12.507343278686905,
            -0.13857109526572012, 9.9843695780195716e-6,
            1.5056327351493116e-7)


def gamma(x: float) -> float:
    """Euler's Gamma function for real x (Lanczos, reflection below 1/2)."""
    if x < 0.5:
        if x == math.floor(x):
            raise ValueError(f"gamma has a pole at {x}")
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS[0]
    for k in range(1, len(_LANCZOS)):
        acc += _LANCZOS[k] / (x + k)
    tt = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * tt ** (x + 0.5) * math.exp(-tt) * acc
