"""Oracles, rate fits, the comparison harness, and the check batteries."""

from dataclasses import replace

import numpy as np
import pytest

from gobstacle.diagnostics import (
    classical_oracle,
    comparison_harness,
    inner_mask,
    rate_fit,
    run_comparison_suite,
    run_property_suite,
    sup_diff,
)
from gobstacle.model import FnSpec, GParams
from gobstacle.presets import get_preset
from gobstacle.scheme import Field, Grid, PenaltyParams, build_grid
from gobstacle.solvers import PenaltySchedule, solve_penalized


# ---------------------------------------------------------------------------
# masks, norms, rate fits
# ---------------------------------------------------------------------------

def test_inner_mask_selects_middle_half():
    g = Grid(-10.0, 10.0, 400, 10, 1.0)
    m = inner_mask(g)
    assert int(m.sum()) == 201
    assert g.x_nodes[m][0] == -5.0 and g.x_nodes[m][-1] == 5.0


def test_sup_diff_full_and_inner():
    g = Grid(-10.0, 10.0, 8, 2, 1.0)
    a = Field(values=np.zeros((3, 9)), grid=g)
    bvals = np.zeros((3, 9))
    bvals[1, 0] = 7.0   # boundary column only
    bvals[1, 4] = 1.0   # dead center
    b = Field(values=bvals, grid=g)
    assert sup_diff(a, b) == 7.0
    assert sup_diff(a, b, inner=True) == 1.0


def test_sup_diff_refuses_incompatible_grids():
    a = Field(values=np.zeros((3, 9)), grid=Grid(-10.0, 10.0, 8, 2, 1.0))
    b = Field(values=np.zeros((3, 9)), grid=Grid(-10.0, 10.0, 8, 2, 2.0))
    with pytest.raises(ValueError, match="incompatible grids"):
        sup_diff(a, b)


def test_rate_fit_recovers_exact_powers():
    pairs = [(n, 3.0 * n ** -1.0) for n in (4.0, 16.0, 64.0, 256.0)]
    fit = rate_fit(pairs)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.count == 4


def test_rate_fit_refusals():
    with pytest.raises(ValueError, match="three pairs"):
        rate_fit([(1.0, 1.0), (2.0, 0.5)])
    with pytest.raises(ValueError, match="positive"):
        rate_fit([(1.0, 1.0), (2.0, 0.5), (4.0, -0.1)])


# ---------------------------------------------------------------------------
# classical oracle
# ---------------------------------------------------------------------------

def test_oracle_matches_the_scheme_on_the_reducible_family():
    spec = get_preset("quadratic-gen-colehopf")
    grid = build_grid(spec, nx=100)
    rep = solve_penalized(spec, grid, PenaltyParams())
    oracle = classical_oracle(spec, grid)
    assert sup_diff(rep.field, oracle, inner=True) <= 5e-3


def test_oracle_terminal_row_is_exact():
    spec = get_preset("quadratic-gen-colehopf")
    grid = build_grid(spec, nx=50)
    oracle = classical_oracle(spec, grid)
    want = np.asarray(spec.terminal(spec.horizon, grid.x_nodes), dtype=float)
    assert np.array_equal(oracle.values[-1], want)


def test_oracle_small_gamma_approaches_the_linear_case():
    spec = get_preset("quadratic-gen-colehopf")
    grid = build_grid(spec, nx=50)
    linear = classical_oracle(
        replace(spec, gen=replace(spec.gen, g=FnSpec.constant(0.0),
                                  lipschitz_z=0.0)), grid)
    tiny = classical_oracle(
        replace(spec, gen=replace(spec.gen, g=FnSpec.quadratic_in_z(1e-6),
                                  lipschitz_z=1e-6)), grid)
    assert float(np.max(np.abs(linear.values - tiny.values))) <= 1e-6


def test_oracle_preconditions():
    spec = get_preset("quadratic-gen-colehopf")
    grid = build_grid(spec, nx=50)
    from gobstacle.model import CoefficientSet, ObstaclePair
    cases = [
        (replace(spec, gparams=GParams(1.0, 2.0)), "degenerate"),
        (replace(spec, coeffs=CoefficientSet(
            sigma=FnSpec.affine(0.01, 1.0), vol_floor=0.8, vol_cap=1.3)),
         "constant sigma"),
        (replace(spec, coeffs=CoefficientSet(drift=FnSpec.constant(0.1))),
         "zero drift"),
        (replace(spec, gen=replace(spec.gen, f=FnSpec.constant(0.1))),
         "f == 0"),
        (replace(spec, gen=replace(spec.gen, g=FnSpec.affine(1.0, 0.0))),
         "quadratic_in_z"),
        (replace(spec, obstacles=ObstaclePair.lower_only(
            FnSpec.constant(-5.0), level_bound=5.0)), "inactive obstacles"),
    ]
    for bad, msg in cases:
        with pytest.raises(ValueError, match=msg):
            classical_oracle(bad, grid)


# ---------------------------------------------------------------------------
# comparison harness
# ---------------------------------------------------------------------------

def test_ordered_pair_orders_the_outputs():
    hi, lo = get_preset("comparison-pair")
    grid = build_grid(hi, nx=100)
    rep = comparison_harness(hi, lo, grid)
    assert rep.passed
    assert rep.min_diff >= -1e-10
    assert rep.min_diff == pytest.approx(0.1, abs=1e-12)  # terminal gap


def test_swapped_pair_is_refused_with_the_offending_channel():
    hi, lo = get_preset("comparison-pair")
    grid = build_grid(hi, nx=100)
    with pytest.raises(ValueError, match="ordering precondition"):
        comparison_harness(lo, hi, grid)


def test_comparison_requires_matching_structure():
    hi, lo = get_preset("comparison-pair")
    grid = build_grid(hi, nx=50)
    with pytest.raises(ValueError, match="volatility bands"):
        comparison_harness(replace(hi, gparams=GParams(1.0, 3.0)), lo, grid)
    with pytest.raises(ValueError, match="horizons"):
        comparison_harness(replace(hi, horizon=2.0), lo, grid)
    from gobstacle.model import ObstaclePair
    stripped = replace(hi, obstacles=ObstaclePair.none())
    with pytest.raises(ValueError, match="activity flags"):
        comparison_harness(stripped, lo, grid)


def test_comparison_projection_mode():
    hi, lo = get_preset("comparison-pair")
    grid = build_grid(hi, nx=50)
    rep = comparison_harness(hi, lo, grid, mode="projection")
    assert rep.passed


# ---------------------------------------------------------------------------
# check batteries
# ---------------------------------------------------------------------------

def test_property_suite_full_battery_on_double_obstacles():
    spec = get_preset("double-active")
    grid = build_grid(spec, nx=100)
    res = run_property_suite(spec, grid, PenaltySchedule.diagonal())
    assert len(res.checks) == 17
    failed = [c.name for c in res.checks if not c.passed]
    assert failed == []
    assert res.final_report is not None
    assert res.trace.stages  # the walk is exposed for reporting


def test_property_suite_skips_inapplicable_checks():
    free = get_preset("gheat-quadratic")
    grid = build_grid(free, nx=64)
    res = run_property_suite(free, grid, PenaltySchedule.diagonal())
    names = {c.name for c in res.checks}
    assert len(res.checks) == 9
    assert "upper-penalty-boundedness" not in names
    assert "construction-agreement" not in names

    upper = get_preset("upper-active")
    grid = build_grid(upper, nx=64)
    res = run_property_suite(upper, grid, PenaltySchedule.diagonal())
    names = {c.name for c in res.checks}
    assert len(res.checks) == 14
    assert "upper-penalty-boundedness" in names
    assert "construction-agreement" not in names  # needs the lower side


def test_comparison_suite_reports_both_checks():
    hi, lo = get_preset("comparison-pair")
    grid = build_grid(hi, nx=100)
    res = run_comparison_suite(hi, lo, grid)
    assert [c.name for c in res.checks] \
        == ["ordering-preconditions", "comparison-order"]
    assert all(c.passed for c in res.checks)
    assert res.final_report is None and res.trace is None
