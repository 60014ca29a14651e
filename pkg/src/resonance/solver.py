"""Periodic-solution search: return map, shooting, boundary degree, homotopy.

A T-periodic solution is a fixed point of the time-T return map of the
planar system.  Fixed points are found by damped Newton shooting with a
finite-difference Jacobian, certified by the winding number of z - P(z)
along a large closed curve (nonzero winding = the disc must contain a
fixed point), and transported from the solvable comparison field (lam = 0)
to the target field (lam = 1) along an adaptive interpolation schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .integrate import (BlowUpError, CenterHitError, DomainExitError,
                        HomotopyField, IntegrateOpts, PhaseState, Trajectory,
                        integrate, rotation_count)
from .model import FULL_LINE, SINGULAR, NonlinearityModel

__all__ = [
    "SolveOpts", "PathPoint", "PeriodicCertificate", "SingularJacobianError",
    "NewtonError", "poincare", "newton_fixed_point",
    "boundary_degree", "degree_search", "homotopy_solve",
    "path_trajectories", "normalized_profile", "circle_curve", "n_level_curve",
]


class SingularJacobianError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOpts:
    newton_tol: float = 1e-9
    newton_max_iter: int = 25
    fd_step: float = 1e-6          # relative Jacobian step, scaled by ||z||
    lambda_points: int = 33
    lambda_floor: float = 1e-6     # smallest allowed continuation step
    degree_samples: int = 48
    degree_budget: int = 2048
    boundary_tol: float = 1e-7     # relative: fixed point on the curve
    max_sup_norm: float = 1e6      # growth cap: beyond it the branch is lost
    # shooting needs the return map resolved below the Newton tolerance
    integrate: IntegrateOpts = IntegrateOpts(rtol=1e-11, atol=1e-11)


@dataclass(frozen=True)
class PathPoint:
    lam: float
    x: float
    y: float
    residual: float
    sup_norm: float
    min_x: float


@dataclass
class PeriodicCertificate:
    status: str                    # converged | lost
    z_star: Optional[PhaseState]
    residual: float
    rotation: Optional[float]
    degree: Optional[int]
    radius_used: Optional[float]
    path: list[PathPoint]
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def poincare(fld: HomotopyField, z: tuple[float, float],
             opts: IntegrateOpts = IntegrateOpts()) -> tuple[float, float]:
    """Return-map image of z = (x, y) after one period."""
    traj = integrate(fld, PhaseState(0.0, z[0], z[1]), fld.model.period, opts)
    end = traj.state_at_end()
    return end.x, end.y


def _return_residual(fld, z, opts):
    px, py = poincare(fld, z, opts)
    return (px - z[0], py - z[1])


def newton_fixed_point(fld: HomotopyField, z_guess: tuple[float, float],
                       tol: float = 1e-9, opts: SolveOpts = SolveOpts()
                       ) -> tuple[tuple[float, float], float, int]:
    """Damped Newton on P(z) - z; returns (z, residual, iterations).

    The Jacobian is forward-difference with step fd_step * max(1, ||z||);
    damping halves the update until the residual decreases.
    """
    z = (float(z_guess[0]), float(z_guess[1]))
    io = opts.integrate
    gx, gy = _return_residual(fld, z, io)
    res = math.hypot(gx, gy)
    for it in range(opts.newton_max_iter):
        if res < tol:
            return z, res, it
        # integration noise bounds how far the residual can be polished
        stall_tol = max(tol, 100.0 * io.rtol * (1.0 + math.hypot(*z)))
        h = opts.fd_step * max(1.0, math.hypot(*z))
        g1x, g1y = _return_residual(fld, (z[0] + h, z[1]), io)
        g2x, g2y = _return_residual(fld, (z[0], z[1] + h), io)
        j11, j21 = (g1x - gx) / h, (g1y - gy) / h
        j12, j22 = (g2x - gx) / h, (g2y - gy) / h
        det = j11 * j22 - j12 * j21
        scale = max(abs(j11), abs(j12), abs(j21), abs(j22), 1e-300)
        # scale below finite-difference noise means the return map is
        # numerically the identity (resonant linearization)
        if scale < 1e-3 or abs(det) < 1e-10 * scale * scale:
            raise SingularJacobianError(
                f"return-map linearization is singular near {z} (det={det:.3g})")
        dx = -(j22 * gx - j12 * gy) / det
        dy = -(-j21 * gx + j11 * gy) / det
        step = 1.0
        for _ in range(8):
            zn = (z[0] + step * dx, z[1] + step * dy)
            try:
                gnx, gny = _return_residual(fld, zn, io)
            except (BlowUpError, DomainExitError):
                step *= 0.5
                continue
            rn = math.hypot(gnx, gny)
            if rn < res or rn < tol:
                z, gx, gy, res = zn, gnx, gny, rn
                break
            step *= 0.5
        else:
            if res <= stall_tol:
                return z, res, it
            raise NewtonError(f"damping failed near {z}; residual {res:.3g}")
    if res < max(tol, 100.0 * io.rtol * (1.0 + math.hypot(*z))):
        return z, res, opts.newton_max_iter
    raise NewtonError(f"no convergence in {opts.newton_max_iter} iterations; "
                      f"residual {res:.3g}")


def circle_curve(radius: float) -> Callable[[float], tuple[float, float]]:
    def curve(s: float):
        a = 2.0 * math.pi * s
        return radius * math.cos(a), radius * math.sin(a)
    return curve


def n_level_curve(level: float) -> Callable[[float], tuple[float, float]]:
    """Closed level set of 1/x^2 + x^2 + y^2 around (1, 0), for x > 0."""
    disc = math.sqrt(max(level * level - 4.0, 0.0))
    x_lo = math.sqrt((level - disc) / 2.0)
    x_hi = math.sqrt((level + disc) / 2.0)

    def curve(s: float):
        phi = 2.0 * math.pi * s
        lx = math.log(x_lo) + (math.log(x_hi) - math.log(x_lo)) * 0.5 * (1.0 - math.cos(phi))
        x = math.exp(lx)
        y2 = level - x * x - 1.0 / (x * x)
        y = math.copysign(math.sqrt(max(y2, 0.0)), math.sin(phi))
        return x, y

    return curve


def boundary_degree(fld: HomotopyField, radius: float,
                    n_samples: Optional[int] = None,
                    opts: SolveOpts = SolveOpts(),
                    curve: Optional[Callable] = None) -> int:
    """Winding number of z - P(z) along a closed curve of initial states.

    radius picks a centered circle (full line) or a largeness level
    (singular mode); a custom closed curve s in [0,1) -> (x, y) overrides
    it.  Samples are refined until adjacent angular increments stay below
    pi/2; a fixed point on the curve is an error.
    """
    if curve is None:
        curve = (n_level_curve(radius) if fld.regime == SINGULAR
                 else circle_curve(radius))
    n0 = n_samples or opts.degree_samples
    io = opts.integrate
    cache: dict[float, tuple[float, float, float]] = {}

    def w_of(s: float):
        if s not in cache:
            zx, zy = curve(s)
            px, py = poincare(fld, (zx, zy), io)
            wx, wy = zx - px, zy - py
            norm = math.hypot(wx, wy)
            ref = math.hypot(zx, zy) or 1.0
            if norm < opts.boundary_tol * ref:
                raise ValueError(f"fixed point on the boundary curve at s={s}")
            cache[s] = (math.atan2(wy, wx), wx, wy)
        return cache[s]

    ss = [k / n0 for k in range(n0)] + [1.0]
    angles = {}
    for s in ss:
        angles[s] = w_of(s % 1.0)[0]

    def gap(a1, a2):
        d = a2 - a1
        while d > math.pi:
            d -= 2.0 * math.pi
        while d <= -math.pi:
            d += 2.0 * math.pi
        return d

    work = True
    while work:
        work = False
        if len(ss) > opts.degree_budget:
            raise RuntimeError("refinement budget exceeded in winding computation")
        new_ss = [ss[0]]
        for s1, s2 in zip(ss[:-1], ss[1:]):
            if abs(gap(angles[s1], angles[s2])) > 0.5 * math.pi:
                sm = 0.5 * (s1 + s2)
                angles[sm] = w_of(sm % 1.0)[0]
                new_ss.extend([sm, s2])
                work = True
            else:
                new_ss.append(s2)
        ss = new_ss

    total = sum(gap(angles[s1], angles[s2]) for s1, s2 in zip(ss[:-1], ss[1:]))
    deg = round(total / (2.0 * math.pi))
    if abs(total - 2.0 * math.pi * deg) > 0.5:
        raise RuntimeError(f"winding did not close up: {total / (2*math.pi):.4f}")
    return int(deg)


def _rect_winding(fld, x0, x1, y0, y1, n_side, opts):
    """Winding of z - P(z) along a rectangle boundary; None if unresolved."""
    pts = []
    for k in range(n_side):
        pts.append((x0 + (x1 - x0) * k / n_side, y0))
    for k in range(n_side):
        pts.append((x1, y0 + (y1 - y0) * k / n_side))
    for k in range(n_side):
        pts.append((x1 - (x1 - x0) * k / n_side, y1))
    for k in range(n_side):
        pts.append((x0, y1 - (y1 - y0) * k / n_side))
    pts.append(pts[0])
    io = opts.integrate
    angles = []
    for (zx, zy) in pts:
        try:
            px, py = poincare(fld, (zx, zy), io)
        except (BlowUpError, DomainExitError):
            return None
        wx, wy = zx - px, zy - py
        if math.hypot(wx, wy) == 0.0:
            return None
        angles.append(math.atan2(wy, wx))
    total = 0.0
    for a1, a2 in zip(angles[:-1], angles[1:]):
        d = a2 - a1
        while d > math.pi:
            d -= 2.0 * math.pi
        while d <= -math.pi:
            d += 2.0 * math.pi
        if abs(d) > 0.5 * math.pi:
            return None     # under-resolved: caller refines or recurses
        total += d
    return round(total / (2.0 * math.pi))


def degree_search(fld: HomotopyField, radius: float,
                  opts: SolveOpts = SolveOpts(), max_cells: int = 96,
                  n_side: int = 8, stop_after: int = 2
                  ) -> list[tuple[tuple[float, float], float]]:
    """Locate return-map fixed points by recursive winding bisection.

    Splits the bounding box into four sub-cells at a jittered point (so a
    fixed point almost never sits on a subdivision line), recursing
    depth-first into cells with nonzero (or unresolved) boundary winding;
    small cells seed Newton.  Returns converged fixed points (z, residual)
    sorted by residual.
    """
    if fld.regime == SINGULAR:
        box = (1e-3, max(2.0, radius), -radius, radius)
    else:
        box = (-radius, radius, -radius, radius)
    stack = [box]
    found: list[tuple[tuple[float, float], float]] = []
    visited = 0
    small = max(1e-6, 1e-3 * radius)
    while stack and visited < max_cells and len(found) < stop_after:
        x0, x1, y0, y1 = stack.pop()
        visited += 1
        if min(x1 - x0, y1 - y0) < small:
            try:
                z, res, _ = newton_fixed_point(
                    fld, (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
                    opts.newton_tol, opts)
                if not any(math.hypot(z[0] - f[0][0], z[1] - f[0][1])
                           < 1e-5 * max(1.0, radius) for f in found):
                    found.append((z, res))
            except (NewtonError, SingularJacobianError, BlowUpError,
                    DomainExitError, CenterHitError):
                pass
            continue
        w = _rect_winding(fld, x0, x1, y0, y1, n_side, opts)
        if w is None:
            w = _rect_winding(fld, x0, x1, y0, y1, 3 * n_side, opts)
        if w == 0:
            continue
        # jittered split keeps zeros off the subdivision lines
        px = x0 + (x1 - x0) * 0.5310
        py = y0 + (y1 - y0) * 0.4729
        for cell in ((x0, px, y0, py), (px, x1, y0, py),
                     (x0, px, py, y1), (px, x1, py, y1)):
            stack.append(cell)
    found.sort(key=lambda zr: zr[1])
    return found


def _initial_guesses(fld: HomotopyField):
    if fld.regime == FULL_LINE:
        yield (0.0, 0.0)
        for r in (0.5, 1.0, 2.0, 4.0):
            yield (r, 0.0)
            yield (0.0, r)
    else:
        for x0 in (1.0, 0.7, 1.5, 0.4, 2.5, 4.0):
            yield (x0, 0.0)
        yield (1.0, 1.0)
        yield (1.0, -1.0)


def _solve_at_lambda(model, lam, guesses, opts, mu=None):
    fld = HomotopyField(model, lam, mu=mu)
    last_err = None
    for g in guesses:
        try:
            z, res, _ = newton_fixed_point(fld, g, opts.newton_tol, opts)
            return z, res
        except (NewtonError, SingularJacobianError, BlowUpError,
                DomainExitError, CenterHitError) as e:
            last_err = e
    raise NewtonError(f"no fixed point found at lambda={lam}: {last_err}")


def homotopy_solve(model: NonlinearityModel, lambda_grid=None,
                   opts: SolveOpts = SolveOpts(), kit=None,
                   gate: Optional[Callable] = None,
                   compute_degree: bool = True,
                   certify_radius: Optional[float] = None,
                   mu: Optional[float] = None) -> PeriodicCertificate:
    """Transport a fixed point from the comparison field to the target one.

    gate, when given, is called with the model and must return a dict with
    a true "passed" entry before any integration starts.  Continuation
    runs Newton correctors over the lambda schedule with adaptive halving
    and a winding-guided cell search as fallback; on success the lam = 1
    fixed point is certified (residual, rotation count, boundary winding
    at the certifying radius).  A lost continuation returns the surviving
    path (status "lost") so blow-up families remain inspectable.
    """
    if gate is not None:
        report = gate(model)
        if not report.get("passed", False):
            raise ValueError(f"hypothesis gate refused the model: {report}")

    if lambda_grid is None:
        lambda_grid = np.linspace(0.0, 1.0, opts.lambda_points)
    lambda_grid = list(map(float, lambda_grid))
    io = opts.integrate
    period = model.period

    def path_point(lam, z, res):
        traj = integrate(HomotopyField(model, lam, mu=mu),
                         PhaseState(0.0, z[0], z[1]), period, io)
        return PathPoint(lam, z[0], z[1], res, traj.sup_norm(),
                         float(np.min(traj.x)))

    path = []
    z, res = _solve_at_lambda(model, lambda_grid[0], _initial_guesses(
        HomotopyField(model, lambda_grid[0], mu=mu)), opts, mu=mu)
    path.append(path_point(lambda_grid[0], z, res))

    lam_prev = lambda_grid[0]
    z_prev2 = None
    lam_target = lambda_grid[1] if len(lambda_grid) > 1 else lambda_grid[0]
    while lam_prev < lambda_grid[-1] - 1e-15:
        dlam = lam_target - lam_prev
        # secant predictor
        if z_prev2 is not None and lam_prev != z_prev2[0]:
            f = dlam / (lam_prev - z_prev2[0])
            guess = (z[0] + f * (z[0] - z_prev2[1]), z[1] + f * (z[1] - z_prev2[2]))
        else:
            guess = z
        try:
            fldn = HomotopyField(model, lam_target, mu=mu)
            zn, resn, _ = newton_fixed_point(fldn, guess, opts.newton_tol, opts)
            z_prev2 = (lam_prev, z[0], z[1])
            z, res, lam_prev = zn, resn, lam_target
            path.append(path_point(lam_prev, z, res))
            if path[-1].sup_norm > opts.max_sup_norm:
                return PeriodicCertificate(
                    status="lost", z_star=PhaseState(0.0, z[0], z[1]),
                    residual=res, rotation=None, degree=None,
                    radius_used=None, path=path,
                    diagnostics=dict(lost_at=lam_prev,
                                     error="amplitude grew past the cap"))
            nxt = [lv for lv in lambda_grid if lv > lam_prev + 1e-15]
            lam_target = nxt[0] if nxt else lambda_grid[-1]
        except (NewtonError, SingularJacobianError, BlowUpError,
                DomainExitError) as err:
            if dlam <= opts.lambda_floor:
                if math.hypot(*z) > 0.01 * opts.max_sup_norm:
                    return PeriodicCertificate(
                        status="lost", z_star=PhaseState(0.0, z[0], z[1]),
                        residual=res, rotation=None, degree=None,
                        radius_used=None, path=path,
                        diagnostics=dict(lost_at=lam_target, error=str(err)))
                # last resort: winding-guided search at the stalled level
                rad = certify_radius or (kit.R_elastic if kit is not None else
                                         8.0 * (1.0 + math.hypot(*z)))
                hits = degree_search(HomotopyField(model, lam_target, mu=mu),
                                     rad, opts)
                if hits:
                    z, res = hits[0]
                    z_prev2 = None
                    lam_prev = lam_target
                    path.append(path_point(lam_prev, z, res))
                    nxt = [lv for lv in lambda_grid if lv > lam_prev + 1e-15]
                    lam_target = nxt[0] if nxt else lambda_grid[-1]
                    continue
                return PeriodicCertificate(
                    status="lost", z_star=PhaseState(0.0, z[0], z[1]),
                    residual=res, rotation=None, degree=None,
                    radius_used=None, path=path,
                    diagnostics=dict(lost_at=lam_target, error=str(err)))
            lam_target = lam_prev + 0.5 * dlam

    fld1 = HomotopyField(model, lambda_grid[-1], mu=mu)
    traj = integrate(fld1, PhaseState(0.0, z[0], z[1]), period, io)
    try:
        rot = rotation_count(traj, io.center_tol)
    except CenterHitError:
        rot = None
    sup = traj.sup_norm()

    degree = None
    comparison_degree = None
    rad = None
    if compute_degree:
        rad = certify_radius or (kit.R_elastic if kit is not None else
                                 max(8.0 * (1.0 + math.hypot(*z)), 64.0))
        degree = boundary_degree(fld1, rad, opts=opts)
        # the comparison problem's degree is reported, never asserted
        try:
            comparison_degree = boundary_degree(
                HomotopyField(model, 0.0, mu=mu), rad, opts=opts)
        except (ValueError, RuntimeError):
            comparison_degree = None

    diagnostics = dict(min_x=float(np.min(traj.x)),
                       min_rho=traj.min_rho(), sup_norm=sup,
                       path_min_x=min(p.min_x for p in path),
                       comparison_degree=comparison_degree)
    return PeriodicCertificate(status="converged",
                               z_star=PhaseState(0.0, z[0], z[1]),
                               residual=res, rotation=rot, degree=degree,
                               radius_used=rad, path=path,
                               diagnostics=diagnostics)


def path_trajectories(model: NonlinearityModel, path: list[PathPoint],
                      mu: Optional[float] = None,
                      opts: SolveOpts = SolveOpts(),
                      min_sup: float = 0.0) -> list[Trajectory]:
    """Re-integrate the orbits along a continuation path (profile input)."""
    out = []
    for p in path:
        if p.sup_norm < min_sup:
            continue
        fld = HomotopyField(model, p.lam, mu=mu)
        out.append(integrate(fld, PhaseState(0.0, p.x, p.y), model.period,
                             opts.integrate))
    return out


def normalized_profile(trajs: list[Trajectory]) -> dict:
    """Arc diagnostics of a family of periodic orbits with growing norms.

    Rescales each orbit by its sup norm, slices it at its zeros into
    positive arcs, and fits each arc with amplitude (peak of the rescaled
    arc) and frequency pi / duration; the fitted frequencies of a family
    blowing up against a band edge settle on the square root of that
    eigenvalue.
    """
    if len(trajs) < 3:
        raise ValueError("need at least 3 orbits of increasing sup norm")
    sups = [tr.sup_norm() for tr in trajs]
    if not all(s2 > s1 for s1, s2 in zip(sups[:-1], sups[1:])):
        raise ValueError("orbits must come with increasing sup norms")
    out = []
    for tr, sup in zip(trajs, sups):
        zeros = [ev.t for ev in sorted(tr.events, key=lambda e: e.t)
                 if ev.kind == "cross_x_eq_0"]
        ups = [ev for ev in sorted(tr.events, key=lambda e: e.t)
               if ev.kind == "cross_x_eq_0"]
        arcs = []
        for e1, e2 in zip(ups[:-1], ups[1:]):
            if e1.y > 0 > e2.y:     # positive arc between up and down crossing
                t_mask = (tr.t >= e1.t) & (tr.t <= e2.t)
                if not np.any(t_mask):
                    continue
                peak = float(np.max(tr.x[t_mask])) / sup
                duration = e2.t - e1.t
                arcs.append(dict(start=e1.t, duration=duration,
                                 amplitude=peak,
                                 omega=math.pi / duration))
        out.append(dict(sup_norm=sup, zeros=zeros, arcs=arcs,
                        omega_fit=(float(np.median([a["omega"] for a in arcs]))
                                   if arcs else math.nan),
                        min_ratio=float(np.min(tr.x)) / sup))
    return dict(per_orbit=out,
                omega_trend=[o["omega_fit"] for o in out],
                sup_norms=sups)
