"""Adaptive Simpson quadrature, kept independent of the closed forms it checks."""

from __future__ import annotations

from .dists import DistributionSpec, Family


class QuadratureLimitError(RuntimeError):
    """The interval budget was exhausted before the tolerance was met."""


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10,
                     max_intervals: int = 1_000_000) -> float:
    """Integrate f over [a, b] to absolute tolerance ``tol``.

    Standard interval-halving Simpson with Richardson correction; tolerance
    is split across halves.  Raises QuadratureLimitError past
    ``max_intervals`` subdivisions.
    """
    a, b = float(a), float(b)
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fm = f(mid)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    width_floor = (b - a) * 1e-15
    stack = [(a, b, fa, fm, fb, whole, tol)]
    total = 0.0
    used = 0
    while stack:
        a0, b0, fa0, fm0, fb0, s0, t0 = stack.pop()
        used += 1
        if used > max_intervals:
            raise QuadratureLimitError(
                f"adaptive Simpson exceeded {max_intervals} intervals"
            )
        m0 = 0.5 * (a0 + b0)
        lm = 0.5 * (a0 + m0)
        rm = 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        left = (m0 - a0) / 6.0 * (fa0 + 4.0 * flm + fm0)
        right = (b0 - m0) / 6.0 * (fm0 + 4.0 * frm + fb0)
        delta = left + right - s0
        if abs(delta) <= 15.0 * t0 or (b0 - a0) <= width_floor:
            total += left + right + delta / 15.0
        else:
            half = 0.5 * t0
            stack.append((a0, m0, fa0, flm, fm0, left, half))
            stack.append((m0, b0, fm0, frm, fb0, right, half))
    return total


def truncated_first_moment_quad(d: DistributionSpec, tau: float,
                                tol: float = 1e-10) -> float:
    """E[X * 1(X <= tau)] by quadrature of x * pdf(x); cross-check oracle.

    For Pareto the integral is mapped through x = m/u so the slowly decaying
    tail becomes a short polynomial-like integrand on (m/tau, 1].
    """
    tau = float(tau)
    if tau <= 0.0:
        return 0.0
    if d.family is Family.PARETO:
        m = d.scale
        if tau <= m:
            return 0.0

        def g(u):
            x = m / u
            return x * d.pdf(x) * (m / (u * u))

        return adaptive_simpson(g, m / tau, 1.0, tol)

    def f(x):
        return x * d.pdf(x) if x > 0.0 else 0.0

    return adaptive_simpson(f, 0.0, tau, tol)
