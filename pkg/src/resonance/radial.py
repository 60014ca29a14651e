"""Rotating solutions of radially symmetric second-order systems.

A plane-valued solution of x'' + f(t, |x|) x/|x| = 0 reduces, at fixed
angular momentum L = x1 x2' - x2 x1', to the scalar radial equation
rho'' - L^2/rho^3 + f(t, rho) = 0 coupled with rho^2 theta' = L.  Solutions
that are T-periodic in rho and advance theta by 2 pi nu over k periods
close up into kT-periodic orbits making exactly nu revolutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrate import (HomotopyField, IntegrateOpts, PhaseState,
                        integrate, integrate_system)
from .model import SINGULAR, NonlinearityModel
from .solver import (NewtonError, SingularJacobianError, SolveOpts,
                     homotopy_solve, newton_fixed_point)

__all__ = [
    "RotatingSolution", "effective_field", "circular_orbit",
    "angular_progress", "solve_radial_profile", "find_rotating",
    "cartesian_samples", "NoBracketError",
]


class NoBracketError(ValueError):
    pass


def effective_field(model: NonlinearityModel, L: float) -> NonlinearityModel:
    """Radial reduction: rho'' + [f(t, rho) - L^2/rho^3] = 0.

    The centrifugal term only strengthens the repulsive wall, so the
    reduced nonlinearity is handled by the singular-mode machinery.
    """
    f = model.f
    L2 = L * L

    def f_eff(t, x):
        return f(t, x) - L2 / x ** 3

    def f_eff_tarr(t, x):
        return np.asarray(model.f_over_t(t, x), dtype=float) - L2 / x ** 3

    return NonlinearityModel(f=f_eff, period=model.period, domain=SINGULAR,
                             n_mode=model.n_mode, f_tarr=f_eff_tarr,
                             name=f"{model.name}+L^2/r^3",
                             params=dict(model.params, L=L))


def _mean_f(model: NonlinearityModel, t_points: int = 64):
    t_grid = np.linspace(0.0, model.period, t_points, endpoint=False)

    def fbar(rho: float) -> float:
        return float(np.mean(model.f_over_t(t_grid, rho)))

    return fbar


def circular_orbit(model: NonlinearityModel, L: float,
                   bracket: Optional[tuple[float, float]] = None,
                   average_t: bool = False, tol: float = 1e-12) -> float:
    """Radius of the circular balance f(rho) = L^2/rho^3, by bisection.

    The model must be autonomous unless average_t is set, in which case
    the t-average of f is balanced instead (useful for search estimates).
    """
    fbar = _mean_f(model) if average_t else (lambda r: model.f(0.0, r))

    def balance(r):
        return fbar(r) - L * L / r ** 3

    if bracket is None:
        grid = np.geomspace(1e-2, 1e3, 120)
        vals = [balance(float(r)) for r in grid]
        bracket = None
        for (r1, v1), (r2, v2) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
            if v1 < 0.0 < v2:
                bracket = (float(r1), float(r2))
                break
        if bracket is None:
            raise NoBracketError("no sign change of f(r) - L^2/r^3 in scan range")
    lo, hi = bracket
    f_lo = balance(lo)
    if f_lo == 0.0:
        return lo
    if f_lo * balance(hi) > 0.0:
        raise NoBracketError(f"bracket {bracket} does not straddle a balance radius")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol * max(1.0, mid):
            break
        if f_lo * balance(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def angular_progress(model: NonlinearityModel, z0: PhaseState, L: float,
                     horizon: float, opts: IntegrateOpts = IntegrateOpts()
                     ) -> float:
    """Angle swept by the full orbit: integral of L / rho(t)^2.

    The angle rides along the radial integration as an extra state, so it
    inherits the integrator tolerance instead of a quadrature grid.
    """
    eff = effective_field(model, L)
    fld = HomotopyField(eff, 1.0)
    g = fld.g

    def rhs(t, y):
        rho, v, _ = y
        return np.array([v, -g(t, rho), L / rho ** 2])

    def guard(t, y):
        if y[0] <= 0.0:
            raise ValueError("rho reached the wall")

    ts, ys = integrate_system(rhs, np.array([z0.x, z0.y, 0.0]), z0.t,
                              z0.t + horizon, opts, guard=guard)
    return float(ys[-1, 2])


@dataclass
class RotatingSolution:
    k: int
    nu: int
    L: float
    z0: PhaseState               # (rho, rho') at t = 0
    residual: float
    delta_theta_period: float    # angle advance over one rho-period
    rho_min: float
    rho_max: float

    @property
    def delta_theta_total(self) -> float:
        return self.k * self.delta_theta_period

    @property
    def revolutions(self) -> float:
        return self.delta_theta_total / (2.0 * math.pi)


def solve_radial_profile(model: NonlinearityModel, L: float,
                         guess: Optional[tuple[float, float]] = None,
                         opts: SolveOpts = SolveOpts()):
    """T-periodic solution of the reduced radial equation at fixed L.

    Warm guesses come from neighbouring L values during sweeps; without
    one, the full interpolation homotopy bootstraps the orbit.
    """
    eff = effective_field(model, L)
    if guess is not None:
        try:
            fld = HomotopyField(eff, 1.0)
            z, res, _ = newton_fixed_point(fld, guess, opts.newton_tol, opts)
            return z, res
        except (NewtonError, SingularJacobianError) as exc:
            pass
    cert = homotopy_solve(eff, opts=opts, compute_degree=False)
    if not cert.converged:
        raise NewtonError(f"radial profile solve failed at L={L:.6g}")
    return (cert.z_star.x, cert.z_star.y), cert.residual


def _delta_theta_of_L(model, L, cache, opts):
    guess = None
    if cache:
        nearest = min(cache, key=lambda Lc: abs(Lc - L))
        guess = cache[nearest]
    z, res = solve_radial_profile(model, L, guess, opts)
    cache[L] = z
    dth = angular_progress(model, PhaseState(0.0, z[0], z[1]), L,
                           model.period, opts.integrate)
    return dth, z, res


def _estimate_L_max(model, target_dtheta):
    """Circular-balance estimate: find rho with T sqrt(fbar/rho) = target/T
    scale, then L = sqrt(fbar(rho) rho^3); generous factor 4 on top."""
    fbar = _mean_f(model)
    period = model.period

    def omega_gap(r):
        v = fbar(r)
        if v <= 0.0:
            return -1.0
        return period * math.sqrt(v / r) - target_dtheta

    grid = np.geomspace(1e-2, 1e4, 160)
    vals = [omega_gap(float(r)) for r in grid]
    rho_star = None
    for (r1, v1), (r2, v2) in zip(zip(grid, vals), zip(grid[1:], vals[1:])):
        if v1 < 0.0 <= v2 or v1 >= 0.0 > v2:
            rho_star = 0.5 * (r1 + r2)
            break
    if rho_star is None:
        finite = [r for r, v in zip(grid, vals) if v > -1.0]
        rho_star = float(finite[-1]) if finite else 1.0
    L_est = math.sqrt(max(fbar(rho_star), 1e-12) * rho_star ** 3)
    return 4.0 * L_est


def find_rotating(model: NonlinearityModel, nu: int, k_max: int,
                  opts: SolveOpts = SolveOpts(), k_min: int = 1,
                  dtheta_tol: float = 1e-6) -> tuple[list[RotatingSolution], Optional[int]]:
    """Rotating solutions for each k: solve Delta_theta(L) = 2 pi nu / k.

    For each k the angular advance over one rho-period must equal
    2 pi nu / k; L is located by a bracketing scan plus golden-section
    refinement of |Delta_theta(L) - target| (the profile solver restarts
    from warm guesses along the sweep).  Returns the solutions found and
    the smallest succeeding k.
    """
    results: list[RotatingSolution] = []
    k_nu: Optional[int] = None
    cache: dict[float, tuple[float, float]] = {}
    failures: dict[int, str] = {}
    for k in range(k_min, k_max + 1):
        target = 2.0 * math.pi * nu / k
        try:
            L_hi = _estimate_L_max(model, target)
            scan = np.geomspace(L_hi / 256.0, L_hi, 12)
            lo = hi = None
            for L in scan:
                try:
                    dth, _, _ = _delta_theta_of_L(model, float(L), cache, opts)
                except (NewtonError, SingularJacobianError) as e:
                    continue
                if dth < target:
                    lo = (float(L), dth)
                elif hi is None:
                    hi = (float(L), dth)
                    break
            if lo is None or hi is None:
                failures[k] = "no bracket for the angular advance"
                continue
            a, b = lo[0], hi[0]
            phi = (math.sqrt(5.0) - 1.0) / 2.0
            best = None
            for _ in range(60):
                if abs(b - a) < 1e-12 * max(1.0, b):
                    break
                m1 = b - phi * (b - a)
                m2 = a + phi * (b - a)
                try:
                    d1, z1, r1 = _delta_theta_of_L(model, m1, cache, opts)
                except (NewtonError, SingularJacobianError):
                    a = m1
                    continue
                if abs(d1 - target) < dtheta_tol:
                    best = (m1, d1, z1, r1)
                    break
                if d1 < target:
                    a = m1
                else:
                    b = m1
            if best is None:
                failures[k] = "golden-section did not reach the target advance"
                continue
            L_star, dth, z, res = best
            traj = integrate(HomotopyField(effective_field(model, L_star), 1.0),
                             PhaseState(0.0, z[0], z[1]), model.period,
                             opts.integrate)
            sol = RotatingSolution(k=k, nu=nu, L=L_star,
                                   z0=PhaseState(0.0, z[0], z[1]),
                                   residual=res, delta_theta_period=dth,
                                   rho_min=float(np.min(traj.x)),
                                   rho_max=float(np.max(traj.x)))
            results.append(sol)
            if k_nu is None:
                k_nu = k
        except Exception as e:      # solver failure: record and move on
            failures[k] = str(e)
    return results, k_nu


def cartesian_samples(model: NonlinearityModel, sol: RotatingSolution,
                      n: int = 720, opts: IntegrateOpts = IntegrateOpts()):
    """(t, x1, x2) samples of the plane orbit over the full kT window."""
    eff = effective_field(model, sol.L)
    fld = HomotopyField(eff, 1.0)
    g = fld.g
    L = sol.L

    def rhs(t, y):
        rho, v, _ = y
        return np.array([v, -g(t, rho), L / rho ** 2])

    period = model.period
    stops = np.linspace(0.0, period, max(2, n // max(sol.k, 1)) + 1)
    ts, ys = integrate_system(rhs, np.array([sol.z0.x, sol.z0.y, 0.0]),
                              0.0, period, opts, t_stops=stops)
    idx = np.searchsorted(ts, stops[:-1])
    rho_p = ys[idx, 0]
    th_p = ys[idx, 2]
    out = []
    for m in range(sol.k):
        for tt, rho, th in zip(stops[:-1], rho_p, th_p):
            ang = th + m * sol.delta_theta_period
            out.append((float(m * period + tt), float(rho * math.cos(ang)),
                        float(rho * math.sin(ang))))
    return out
