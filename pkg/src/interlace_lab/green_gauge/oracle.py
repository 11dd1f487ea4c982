"""Independent reference values for the lattice Green function.

These routes share no code with ``quadrature``: the Fourier integral over
[-pi, pi]^3 is reduced by integrating one angle in closed form, and the
remaining two-dimensional integral (with its integrable 1/r singularity at
the origin) is done in polar coordinates.
"""
from __future__ import annotations

import math

from scipy import integrate
from scipy.special import gamma


def watson_closed_form() -> float:
    """g(0, 0) for the simple cubic lattice via the Gamma-function product."""
    return (
        math.sqrt(6.0)
        / (32.0 * math.pi**3)
        * gamma(1 / 24)
        * gamma(5 / 24)
        * gamma(7 / 24)
        * gamma(11 / 24)
    )


def _reduced_integrand(t2: float, t3: float, x: tuple[int, int, int]) -> float:
    # 1 - (c1+c2+c3)/3 = (a - cos t1)/3 with a = 3 - c2 - c3
    a = 3.0 - math.cos(t2) - math.cos(t3)
    am1 = 2.0 * (math.sin(t2 / 2) ** 2 + math.sin(t3 / 2) ** 2)  # a - 1 without cancellation
    root = math.sqrt(am1 * (a + 1.0))
    z = 1.0 / (a + root)  # a - sqrt(a^2 - 1), stable form
    return 3.0 * z ** abs(x[0]) / root * math.cos(x[1] * t2) * math.cos(x[2] * t3)


def fourier_green_d3(x=(0, 0, 0), tol: float = 1e-9) -> float:
    """g(0, x) in d = 3 from the Fourier representation.

    After the closed-form t1 integration,
    g(x) = (1/(2 pi)^2) * int int 3 z^{|x1|} cos(x2 t2) cos(x3 t3) / sqrt(a^2 - 1),
    integrated over [0, pi]^2 (times 4) in polar coordinates about the
    singular corner, split at the diagonal so each piece has a smooth
    outer radius.
    """
    x = tuple(int(v) for v in x)
    if len(x) != 3:
        raise ValueError("the Fourier oracle is implemented for d = 3")

    def polar(r: float, theta: float) -> float:
        return r * _reduced_integrand(r * math.cos(theta), r * math.sin(theta), x)

    total = 0.0
    for lo, hi, rmax in (
        (0.0, math.pi / 4, lambda th: math.pi / math.cos(th)),
        (math.pi / 4, math.pi / 2, lambda th: math.pi / math.sin(th)),
    ):
        val, _ = integrate.dblquad(polar, lo, hi, 0.0, rmax, epsabs=tol / 10, epsrel=tol / 10)
        total += val
    return 4.0 * total / (2.0 * math.pi) ** 2
