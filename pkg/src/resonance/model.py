"""Nonlinearity models f(t, x): expression-backed or registered families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr as ex

FULL_LINE = "full_line"
SINGULAR = "singular"


@dataclass(frozen=True)
class NonlinearityModel:
    """A T-periodic nonlinearity f(t, x) with its working metadata.

    f is the scalar fast path used inside integrator loops; f_tarr
    evaluates f over an array of times at fixed x (used by envelope and
    window scans).  domain is "full_line" (x ranges over all reals) or
    "singular" (x > 0 with a wall at 0).  n_mode is the declared integer N
    placing the linear band [mu_N, mu_N+1] at +infinity.
    """

    f: Callable[[float, float], float]
    period: float
    domain: str = FULL_LINE
    n_mode: int = 1
    f_tarr: Optional[Callable] = None
    source: Optional[str] = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    def f_over_t(self, t_grid: np.ndarray, x: float) -> np.ndarray:
        if self.f_tarr is not None:
            return self.f_tarr(t_grid, x)
        return np.array([self.f(float(tt), x) for tt in np.atleast_1d(t_grid)])


def eigenvalue_for(j: int, period: float) -> float:
    return (j * math.pi / period) ** 2


def from_expression(source: str, period: float, domain: str = FULL_LINE,
                    n_mode: int = 1, name: str = "expr") -> NonlinearityModel:
    tree = ex.parse(source)
    return NonlinearityModel(
        f=ex.compile_scalar(tree), period=period, domain=domain, n_mode=n_mode,
        f_tarr=ex.compile_vector_t(tree), source=source, name=name)


def from_piecewise(left_src: str, right_src: str, period: float,
                   domain: str = FULL_LINE, n_mode: int = 1,
                   name: str = "piecewise") -> NonlinearityModel:
    """Two expressions glued at the split point (0 on the full line, 1 in
    singular mode); continuity is the user's responsibility."""
    split = 0.0 if domain == FULL_LINE else 1.0
    fl = ex.compile_scalar(ex.parse(left_src))
    fr = ex.compile_scalar(ex.parse(right_src))
    fl_v = ex.compile_vector_t(ex.parse(left_src))
    fr_v = ex.compile_vector_t(ex.parse(right_src))

    def f(t, x):
        return fl(t, x) if x < split else fr(t, x)

    def f_tarr(t, x):
        return fl_v(t, x) if x < split else fr_v(t, x)

    return NonlinearityModel(f=f, period=period, domain=domain, n_mode=n_mode,
                             f_tarr=f_tarr,
                             source=f"[x<{split}] {left_src} | {right_src}",
                             name=name)


def _band_profile(x: float, mu_lo: float, dmu: float, lift: float, drop: float):
    """Right-side profile mu_lo*x + ramp(x)*(lift + (dmu*x - lift - drop)*chi(x)).

    chi oscillates between 0 and 1 on a log scale, so f(t,x)/x keeps
    visiting both edges of the band as x grows; the residues against the
    band edges settle at +lift (lower edge) and -drop (upper edge).
    """
    ramp = x * x / (1.0 + x * x)
    chi = 0.5 * (1.0 - math.cos(math.pi * math.log2(1.0 + x)))
    return mu_lo * x + ramp * (lift + (dmu * x - lift - drop) * chi)


def make_cubic_band(period: float = 2 * math.pi, n_mode: int = 2,
                    forcing: float = 0.5, lift: float = 1.0, drop: float = 1.0,
                    oscillating: bool = True, name: str = "cubic_band") -> NonlinearityModel:
    """Superlinear (cubic) left side, band-limited right side, bounded forcing.

    Right side stays between mu_N x - c and mu_N+1 x + c; with
    oscillating=True it keeps touching both edges so the residues at
    +infinity are exactly +lift / -drop.  With oscillating=False the right
    side is the midline slope (strictly inside the band).
    """
    mu_lo = eigenvalue_for(n_mode, period)
    mu_hi = eigenvalue_for(n_mode + 1, period)
    dmu = mu_hi - mu_lo
    mu_mid = 0.5 * (mu_lo + mu_hi)
    om = 2 * math.pi / period

    def f(t, x):
        e = forcing * math.cos(om * t)
        if x <= 0.0:
            return x * x * x + e
        if oscillating:
            return _band_profile(x, mu_lo, dmu, lift, drop) + e
        ramp = x * x / (1.0 + x * x)
        return mu_mid * x + ramp * 0.5 * (lift - drop) + e

    def f_tarr(t, x):
        e = forcing * np.cos(om * np.asarray(t, dtype=float))
        if x <= 0.0:
            return x * x * x + e
        if oscillating:
            return _band_profile(x, mu_lo, dmu, lift, drop) + e
        ramp = x * x / (1.0 + x * x)
        return mu_mid * x + ramp * 0.5 * (lift - drop) + e

    return NonlinearityModel(f=f, period=period, domain=FULL_LINE, n_mode=n_mode,
                             f_tarr=f_tarr, name=name,
                             params=dict(forcing=forcing, lift=lift, drop=drop,
                                         oscillating=oscillating))


def make_resonant_edge(period: float = 2 * math.pi, n_mode: int = 2,
                       offset: float = 1.0, forcing: float = 0.5,
                       name: str = "resonant_edge") -> NonlinearityModel:
    """Cubic left side, right side pinned to the upper band edge mu_N+1 with a
    positive residue: the sign condition against the (N+1)-profile fails."""
    mu_hi = eigenvalue_for(n_mode + 1, period)
    om = 2 * math.pi / period

    def f(t, x):
        e = forcing * math.cos(om * t)
        if x <= 0.0:
            return x * x * x + e
        ramp = x * x / (1.0 + x * x)
        return mu_hi * x + ramp * offset + e

    def f_tarr(t, x):
        e = forcing * np.cos(om * np.asarray(t, dtype=float))
        if x <= 0.0:
            return x * x * x + e
        ramp = x * x / (1.0 + x * x)
        return mu_hi * x + ramp * offset + e

    return NonlinearityModel(f=f, period=period, domain=FULL_LINE, n_mode=n_mode,
                             f_tarr=f_tarr, name=name,
                             params=dict(offset=offset, forcing=forcing))


def make_linear_resonant(period: float = 2 * math.pi, m: int = 2,
                         forcing: float = 1.0,
                         name: str = "linear_resonant") -> NonlinearityModel:
    """f = m^2 x + forcing cos(m t'): the forcing pumps the eigenmode, so no
    T-periodic solution exists at all (the textbook obstruction case)."""
    om = 2 * math.pi / period
    mu = (m * om) ** 2

    def f(t, x):
        return mu * x + forcing * math.cos(m * om * t)

    def f_tarr(t, x):
        return mu * x + forcing * np.cos(m * om * np.asarray(t, dtype=float))

    return NonlinearityModel(f=f, period=period, domain=FULL_LINE,
                             n_mode=max(2 * m - 1, 1), f_tarr=f_tarr,
                             name=name, params=dict(m=m, forcing=forcing))


def make_singular_band(period: float = 2 * math.pi, n_mode: int = 2,
                       wobble: float = 1.0, name: str = "singular_band") -> NonlinearityModel:
    """Attractive wall -(1 + wobble sin^2 t) x^-5 - x^-3 plus a midband linear
    tail: repulsive strong singularity at 0, linear band growth at infinity."""
    mu_mid = 0.5 * (eigenvalue_for(n_mode, period) + eigenvalue_for(n_mode + 1, period))
    om = 2 * math.pi / period

    def f(t, x):
        s = math.sin(om * t)
        return mu_mid * x - (1.0 + wobble * s * s) / x ** 5 - 1.0 / x ** 3

    def f_tarr(t, x):
        s = np.sin(om * np.asarray(t, dtype=float))
        return mu_mid * x - (1.0 + wobble * s * s) / x ** 5 - 1.0 / x ** 3

    return NonlinearityModel(f=f, period=period, domain=SINGULAR, n_mode=n_mode,
                             f_tarr=f_tarr, name=name, params=dict(wobble=wobble))


FAMILIES = {
    "cubic_band": make_cubic_band,
    "resonant_edge": make_resonant_edge,
    "linear_resonant": make_linear_resonant,
    "singular_band": make_singular_band,
}


def from_family(family: str, period: float, n_mode: int, params: dict | None = None,
                ) -> NonlinearityModel:
    if family not in FAMILIES:
        raise KeyError(f"unknown model family {family!r}; known: {sorted(FAMILIES)}")
    return FAMILIES[family](period=period, n_mode=n_mode, **(params or {}))
