"""Reconstruction of the process bundle behind a solved field.

A solved field is re-read as the value process of a backward system:
per slice, the gradient process z = sigma * Du, the nondecreasing
compensator increments dA+ (pushing up at the lower obstacle) and dA-
(pushing down at the upper one), and a scenario-defect field certifying
the worst-case volatility property: stepping with any fixed variance
v in the band can never beat the envelope step, so the defect

    (step value under fixed v) - (actual step value)

is <= 0 at every interior node, with equality exactly at maximizing
scenarios.  The orthogonal-decrement part of the decomposition vanishes
along the worst-case scenario by construction and is never materialized.

All increments are reconstructed through the very arithmetic of the
stepping scheme (shared helpers), so the one-step identity

    Y_k = Y_{k+1} + dt*rhs + dA+_k - dA-_k

holds at interior nodes to rounding, for every solver mode: projection
lifts/clamps land in the increments, not in a residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gcalculus import g_eval, worst_case_vol
from .model import ProblemSpec, SpecError
from .scheme import Field, Grid, PenaltyParams, layer_rhs_parts, \
    resolve_penalties


@dataclass(eq=False)
class ProcessBundle:
    """Value, gradient, compensator increments and scenario defects.

    Arrays are slice-aligned with the field: da_plus[k], da_minus[k] are
    the increments created by the step that produced slice k (zero on
    the terminal row); defect[k, i] is the worst fixed-scenario defect
    at that node (zero on boundary columns and the terminal row).
    """

    y: Field
    z: Field
    da_plus: np.ndarray
    da_minus: np.ndarray
    defect: Field


def _check_v_grid(v_grid, spec):
    gp = spec.gparams
    if v_grid is None:
        v_grid = np.linspace(gp.vol_low_sq, gp.vol_high_sq, 5)
    v_grid = np.atleast_1d(np.asarray(v_grid, dtype=float))
    if v_grid.size == 0:
        raise SpecError("empty scenario grid")
    if (v_grid < gp.vol_low_sq).any() or (v_grid > gp.vol_high_sq).any():
        raise SpecError("scenario variances must lie inside the declared band")
    return v_grid


def _obstacle_rows(spec, t, x):
    ob = spec.obstacles
    low = np.broadcast_to(np.asarray(ob.lower(t, x), dtype=float),
                          np.shape(x)) if ob.lower_active else None
    up = np.broadcast_to(np.asarray(ob.upper(t, x), dtype=float),
                         np.shape(x)) if ob.upper_active else None
    return low, up


def _apply_mode(u, low, up, mode, ob):
    if mode == "project_lower":
        if ob.lower_active:
            u = np.maximum(u, low)
    elif mode == "project_both":
        if ob.lower_active:
            u = np.maximum(u, low)
        if ob.upper_active:
            u = np.minimum(u, up)
    return u


def reconstruct(field: Field, spec: ProblemSpec, pen: PenaltyParams,
                mode="penalized", v_grid=None,
                first_order="central") -> ProcessBundle:
    """Rebuild the process bundle from a solved field.

    The field must come from a solver run with the same (spec, pen,
    mode, first_order); increments are recovered by replaying each step
    with identical arithmetic and reading off the penalty and projection
    contributions.
    """
    grid = field.grid
    vals = field.values
    dt = grid.dt
    dx = grid.dx
    x_int = grid.x_nodes[1:-1]
    ob = spec.obstacles
    v_grid = _check_v_grid(v_grid, spec)

    z = np.empty_like(vals)
    da_plus = np.zeros_like(vals)
    da_minus = np.zeros_like(vals)
    defect = np.zeros_like(vals)

    for k in range(grid.nt + 1):
        t = grid.t_nodes[k]
        sig = np.broadcast_to(
            np.asarray(spec.coeffs.sigma(t, grid.x_nodes), dtype=float),
            vals[k].shape)
        z[k, 1:-1] = sig[1:-1] * (vals[k, 2:] - vals[k, :-2]) / (2.0 * dx)
        z[k, 0] = sig[0] * (vals[k, 1] - vals[k, 0]) / dx
        z[k, -1] = sig[-1] * (vals[k, -1] - vals[k, -2]) / dx

    for k in range(grid.nt - 1, -1, -1):
        t = grid.t_nodes[k]
        qv, rest = layer_rhs_parts(vals[k + 1], t, spec, grid, first_order)
        w = vals[k + 1, 1:-1] + dt * (g_eval(qv, spec.gparams) + rest)
        low, up = _obstacle_rows(spec, t, x_int)
        u_pen = resolve_penalties(w, low, up, pen, dt,
                                  ob.lower_active, ob.upper_active)

        dap = np.zeros_like(w)
        dam = np.zeros_like(w)
        if ob.lower_active and pen.m_lower > 0.0:
            dap += dt * pen.m_lower * np.maximum(low - u_pen, 0.0)
        if ob.upper_active and pen.n_upper > 0.0:
            dam += dt * pen.n_upper * np.maximum(u_pen - up, 0.0)
        # whatever the stored layer has beyond the penalty resolution is
        # the projection's doing; split it by sign into the increments
        lift = vals[k, 1:-1] - u_pen
        dap += np.maximum(lift, 0.0)
        dam += np.maximum(-lift, 0.0)
        da_plus[k, 1:-1] = dap
        da_minus[k, 1:-1] = dam

        # boundary columns: extrapolation then clamp; the clamp delta is
        # the boundary increment
        for idx in (0, -1):
            if idx == 0:
                e = 2.0 * vals[k, 1] - vals[k, 2]
            else:
                e = 2.0 * vals[k, -2] - vals[k, -3]
            delta = vals[k, idx] - e
            da_plus[k, idx] = max(delta, 0.0)
            da_minus[k, idx] = max(-delta, 0.0)

        worst = None
        for v in v_grid:
            w_v = vals[k + 1, 1:-1] + dt * (0.5 * (v * qv) + rest)
            u_v = resolve_penalties(w_v, low, up, pen, dt,
                                    ob.lower_active, ob.upper_active)
            u_v = _apply_mode(u_v, low, up, mode, ob)
            d = u_v - vals[k, 1:-1]
            worst = d if worst is None else np.maximum(worst, d)
        defect[k, 1:-1] = worst

    return ProcessBundle(y=field, z=Field(values=z, grid=grid),
                         da_plus=da_plus, da_minus=da_minus,
                         defect=Field(values=defect, grid=grid))


def one_step_residuals(bundle: ProcessBundle, spec: ProblemSpec,
                       first_order="central"):
    """Interior residual of Y_k - (Y_{k+1} + dt*rhs + dA+ - dA-) per step.

    Returns an (nt, nx-1) array; its sup is the identity defect of the
    reconstruction and should sit at rounding level.
    """
    grid = bundle.y.grid
    vals = bundle.y.values
    out = np.empty((grid.nt, grid.nx - 1))
    for k in range(grid.nt):
        t = grid.t_nodes[k]
        qv, rest = layer_rhs_parts(vals[k + 1], t, spec, grid, first_order)
        w = vals[k + 1, 1:-1] + grid.dt * (g_eval(qv, spec.gparams) + rest)
        out[k] = vals[k, 1:-1] - (w + bundle.da_plus[k, 1:-1]
                                  - bundle.da_minus[k, 1:-1])
    return out


def skorohod_residuals(bundle: ProcessBundle, spec: ProblemSpec):
    """Contact residuals of the compensators along grid paths.

    r_plus  = max over interior columns of sum_k (lower - Y)^+ * dA+
    r_minus = max over interior columns of sum_k (Y - upper)^+ * dA-

    Each summand is a product of nonnegative factors measuring how far
    from its contact set an increment acted, so both residuals are >= 0;
    they shrink like the inverse intensity along a penalty schedule and
    vanish (to step-size slack) for projection solves.  Inactive sides
    report 0.
    """
    grid = bundle.y.grid
    vals = bundle.y.values
    ob = spec.obstacles
    r_plus = 0.0
    r_minus = 0.0
    if ob.lower_active:
        acc = np.zeros(grid.nx - 1)
        for k in range(grid.nt):
            low = np.asarray(ob.lower(grid.t_nodes[k], grid.x_nodes[1:-1]),
                             dtype=float)
            acc += np.maximum(low - vals[k, 1:-1], 0.0) \
                * bundle.da_plus[k, 1:-1]
        r_plus = float(np.max(acc))
    if ob.upper_active:
        acc = np.zeros(grid.nx - 1)
        for k in range(grid.nt):
            up = np.asarray(ob.upper(grid.t_nodes[k], grid.x_nodes[1:-1]),
                            dtype=float)
            acc += np.maximum(vals[k, 1:-1] - up, 0.0) \
                * bundle.da_minus[k, 1:-1]
        r_minus = float(np.max(acc))
    return r_plus, r_minus


def martingale_defect_scan(field: Field, spec: ProblemSpec,
                           pen: PenaltyParams, v_grid=None, mode="penalized",
                           first_order="central") -> float:
    """Worst fixed-scenario defect over all interior nodes and scenarios.

    Certifies the envelope property of the scheme: a nonpositive return
    value (up to rounding) means no constant-variance step beats the
    actual step anywhere; values near zero are attained where the
    scanned grid contains the bang-bang maximizer.
    """
    bundle = reconstruct(field, spec, pen, mode=mode, v_grid=v_grid,
                         first_order=first_order)
    d = bundle.defect.values
    return float(np.max(d[:-1, 1:-1]))


def bmo_diagnostic(bundle: ProcessBundle, spec: ProblemSpec,
                   return_profile=False):
    """Worst tail energy of the gradient process along worst scenarios.

    For each interior column and each start slice tau, accumulates
    sum_{k >= tau} z_k^2 * v*_k * dt with v* the bang-bang scenario of
    the step at slice k, and returns the maximum (attained at tau = 0
    since summands are nonnegative; tails decrease as tau grows).
    Diagnostic only: reported, never asserted against model constants.
    """
    grid = bundle.y.grid
    vals = bundle.y.values
    energy = np.empty((grid.nt, grid.nx - 1))
    for k in range(grid.nt):
        t = grid.t_nodes[k]
        qv, _ = layer_rhs_parts(vals[k + 1], t, spec, grid)
        v_star = worst_case_vol(qv, spec.gparams)
        zk = bundle.z.values[k, 1:-1]
        energy[k] = zk * zk * v_star * grid.dt
    tails = np.cumsum(energy[::-1], axis=0)[::-1]
    worst = float(np.max(tails)) if tails.size else 0.0
    if return_profile:
        return worst, tails
    return worst
