"""Problem data model: volatility band, coefficient/generator catalog, obstacles.

A problem instance describes the terminal-value problem

    max(u - upper, min(-du/dt - F(x, t, u, Du, D2u), u - lower)) = 0,
    u(T, x) = terminal(x),

on a strip [0, T] x [x_min, x_max], where F aggregates a sublinear
envelope over a volatility band [vol_low_sq, vol_high_sq] together with
drift and driver terms.  Every scalar field entering the problem (drift,
diffusion loading, drivers, obstacles, terminal data) is declared through
the closed `FnSpec` catalog so that problems are serializable, cheap to
probe, and carry explicit regularity declarations (Lipschitz constants,
sup bounds) instead of opaque callables.  Host code may still inject a
`custom` evaluator for library use; the command line rejects those.

Obstacles may be deactivated per side.  An inactive side is represented
by a large sentinel level plus an explicit flag; all arithmetic branches
on the flag, the sentinel never enters differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids a runtime cycle
    from .scheme import Grid

# Level used to encode a disabled obstacle side.  Guarded by activity
# flags everywhere; it must stay large against any sane solution scale
# but finite so that accidental arithmetic stays observable.
INACTIVE_LEVEL = 1.0e9

_DEFAULT_CLIP = 1.0e6


class EvaluationError(RuntimeError):
    """A catalog function returned a non-finite value during probing."""


class SpecError(ValueError):
    """A problem component is structurally malformed."""


# ---------------------------------------------------------------------------
# function catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FnSpec:
    """One scalar field from the closed function catalog.

    Kinds
    -----
    constant(value)
        value, everywhere.
    affine(slope, intercept)
        slope * x + intercept in the spatial coordinate.
    polynomial(coeffs, clip)
        sum coeffs[k] * x**k, hard-clipped to [-clip, clip].
    quadratic_in_z(gamma, clip)
        gamma * z**2, hard-clipped; the quadratic-driver shape.
    tabulated(xs, values)
        piecewise-linear interpolation in x; constant extension outside
        the table.
    custom(fn)
        arbitrary host evaluator fn(t, x, y, z); not serializable.

    Every spec carries declared constants: `lipschitz_y` and
    `lipschitz_z` (moduli in the value/gradient slots, 0 when the kind
    cannot depend on them) and `sup_bound` (absolute bound on the
    declared domain; derived automatically where the kind makes it
    obvious, otherwise left to the caller and checked by `validate`).
    """

    kind: str
    value: float = 0.0
    slope: float = 0.0
    intercept: float = 0.0
    coeffs: tuple = ()
    gamma: float = 0.0
    clip: float = _DEFAULT_CLIP
    xs: tuple = ()
    values: tuple = ()
    fn: Optional[Callable] = None
    lipschitz_y: float = 0.0
    lipschitz_z: float = 0.0
    sup_bound: Optional[float] = None

    _KINDS = ("constant", "affine", "polynomial", "quadratic_in_z",
              "tabulated", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise SpecError(f"unknown FnSpec kind {self.kind!r}")
        if self.kind == "tabulated":
            if len(self.xs) != len(self.values) or len(self.xs) < 2:
                raise SpecError("tabulated FnSpec needs matching xs/values, "
                                "at least two samples")
            if not all(b > a for a, b in zip(self.xs, self.xs[1:])):
                raise SpecError("tabulated xs must be strictly increasing")
        if self.kind == "custom" and self.fn is None:
            raise SpecError("custom FnSpec needs fn")
        if self.clip <= 0:
            raise SpecError("clip bound must be positive")
        if self.lipschitz_y < 0 or self.lipschitz_z < 0:
            raise SpecError("Lipschitz declarations must be nonnegative")
        if self.sup_bound is None:
            object.__setattr__(self, "sup_bound", self._derived_sup())

    def _derived_sup(self):
        if self.kind == "constant":
            return abs(self.value)
        if self.kind in ("polynomial", "quadratic_in_z"):
            return self.clip
        if self.kind == "tabulated":
            return float(np.max(np.abs(self.values)))
        return None  # affine / custom: unbounded without a domain

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value, **declared):
        return cls(kind="constant", value=float(value), **declared)

    @classmethod
    def affine(cls, slope, intercept, **declared):
        return cls(kind="affine", slope=float(slope),
                   intercept=float(intercept), **declared)

    @classmethod
    def polynomial(cls, coeffs, clip=_DEFAULT_CLIP, **declared):
        return cls(kind="polynomial", coeffs=tuple(float(c) for c in coeffs),
                   clip=float(clip), **declared)

    @classmethod
    def quadratic_in_z(cls, gamma, clip=_DEFAULT_CLIP, **declared):
        declared.setdefault("lipschitz_z", abs(float(gamma)))
        return cls(kind="quadratic_in_z", gamma=float(gamma),
                   clip=float(clip), **declared)

    @classmethod
    def tabulated(cls, xs, values, **declared):
        return cls(kind="tabulated", xs=tuple(float(v) for v in xs),
                   values=tuple(float(v) for v in values), **declared)

    @classmethod
    def custom(cls, fn, **declared):
        return cls(kind="custom", fn=fn, **declared)

    # -- evaluation ----------------------------------------------------

    def __call__(self, t, x, y=0.0, z=0.0):
        """Evaluate at (t, x, y, z); broadcasts over array arguments."""
        if self.kind == "constant":
            return self.value
        if self.kind == "affine":
            return self.slope * np.asarray(x, dtype=float) + self.intercept
        if self.kind == "polynomial":
            out = np.polynomial.polynomial.polyval(
                np.asarray(x, dtype=float), np.asarray(self.coeffs))
            return np.clip(out, -self.clip, self.clip)
        if self.kind == "quadratic_in_z":
            zz = np.asarray(z, dtype=float)
            return np.clip(self.gamma * zz * zz, -self.clip, self.clip)
        if self.kind == "tabulated":
            return np.interp(np.asarray(x, dtype=float), self.xs, self.values)
        return self.fn(t, x, y, z)

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        if self.kind == "custom":
            raise SpecError("custom FnSpec is not serializable")
        rec = {"kind": self.kind}
        if self.kind == "constant":
            rec["value"] = self.value
        elif self.kind == "affine":
            rec.update(slope=self.slope, intercept=self.intercept)
        elif self.kind == "polynomial":
            rec.update(coeffs=list(self.coeffs), clip=self.clip)
        elif self.kind == "quadratic_in_z":
            rec.update(gamma=self.gamma, clip=self.clip)
        elif self.kind == "tabulated":
            rec.update(xs=list(self.xs), values=list(self.values))
        if self.lipschitz_y:
            rec["lipschitz_y"] = self.lipschitz_y
        if self.lipschitz_z:
            rec["lipschitz_z"] = self.lipschitz_z
        if self.sup_bound is not None and self.sup_bound != self._derived_sup():
            rec["sup_bound"] = self.sup_bound
        return rec

    _FIELDS = {"constant": ("value",),
               "affine": ("slope", "intercept"),
               "polynomial": ("coeffs", "clip"),
               "quadratic_in_z": ("gamma", "clip"),
               "tabulated": ("xs", "values")}

    @classmethod
    def from_dict(cls, rec):
        rec = dict(rec)
        kind = rec.pop("kind", None)
        if kind not in cls._FIELDS:
            raise SpecError(f"config FnSpec kind {kind!r} not in the catalog")
        declared = {k: rec.pop(k) for k in
                    ("lipschitz_y", "lipschitz_z", "sup_bound") if k in rec}
        extra = sorted(set(rec) - set(cls._FIELDS[kind]))
        if extra:
            raise SpecError(f"FnSpec {kind!r} has unknown fields {extra}")
        try:
            if kind == "constant":
                return cls.constant(rec["value"], **declared)
            if kind == "affine":
                return cls.affine(rec["slope"], rec["intercept"], **declared)
            if kind == "polynomial":
                return cls.polynomial(rec["coeffs"],
                                      rec.get("clip", _DEFAULT_CLIP),
                                      **declared)
            if kind == "quadratic_in_z":
                return cls.quadratic_in_z(rec["gamma"],
                                          rec.get("clip", _DEFAULT_CLIP),
                                          **declared)
            return cls.tabulated(rec["xs"], rec["values"], **declared)
        except KeyError as miss:
            raise SpecError(f"FnSpec {kind!r} misses field {miss}") from None


ZERO = FnSpec.constant(0.0)


# ---------------------------------------------------------------------------
# problem components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GParams:
    """Volatility-uncertainty band [vol_low_sq, vol_high_sq].

    The sublinear envelope evaluated in `gcalculus` is
    0.5 * (vol_high_sq * a+ - vol_low_sq * a-).  The degenerate equal
    band is allowed; it makes the envelope linear (classical case).
    A misordered or nonpositive band is constructible on purpose so that
    `validate` can report it; numeric entry points refuse to run on it.
    """

    vol_low_sq: float
    vol_high_sq: float

    @property
    def well_ordered(self):
        return 0.0 < self.vol_low_sq <= self.vol_high_sq

    @property
    def degenerate(self):
        return self.vol_low_sq == self.vol_high_sq


@dataclass(frozen=True)
class CoefficientSet:
    """State-dynamics coefficients: drift b, cross loading l, diffusion sigma.

    `vol_floor` and `vol_cap` declare the uniform ellipticity band
    vol_floor <= sigma(t,x)^2 <= vol_cap; the CFL computation and the
    validator rely on them.
    """

    drift: FnSpec = ZERO
    cross: FnSpec = ZERO
    sigma: FnSpec = FnSpec.constant(1.0)
    vol_floor: float = 1.0
    vol_cap: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.vol_floor <= self.vol_cap):
            raise SpecError("need 0 < vol_floor <= vol_cap")


@dataclass(frozen=True)
class GeneratorSpec:
    """Drivers f (dt channel) and g (quadratic-variation channel).

    `lipschitz_y`/`lipschitz_z` are the declared joint moduli of the two
    drivers, `zero_bound` bounds |f(t,x,0,0)| + |g(t,x,0,0)|.
    """

    f: FnSpec = ZERO
    g: FnSpec = ZERO
    lipschitz_y: float = 0.0
    lipschitz_z: float = 0.0
    zero_bound: float = 1.0

    def __post_init__(self):
        if min(self.lipschitz_y, self.lipschitz_z, self.zero_bound) < 0:
            raise SpecError("generator constants must be nonnegative")


@dataclass(frozen=True)
class ObstaclePair:
    """Lower/upper barrier functions with activity flags.

    `level_bound` bounds lower <= level_bound and -upper <= level_bound
    on active sides.  Inactive sides keep a +-INACTIVE_LEVEL sentinel
    spec but are excluded from all arithmetic by the flags.
    """

    lower: FnSpec = FnSpec.constant(-INACTIVE_LEVEL)
    upper: FnSpec = FnSpec.constant(+INACTIVE_LEVEL)
    lower_active: bool = False
    upper_active: bool = False
    level_bound: float = 1.0

    @classmethod
    def both(cls, lower, upper, level_bound=1.0):
        return cls(lower=lower, upper=upper, lower_active=True,
                   upper_active=True, level_bound=level_bound)

    @classmethod
    def lower_only(cls, lower, level_bound=1.0):
        return cls(lower=lower, lower_active=True, level_bound=level_bound)

    @classmethod
    def upper_only(cls, upper, level_bound=1.0):
        return cls(upper=upper, upper_active=True, level_bound=level_bound)

    @classmethod
    def none(cls):
        return cls()


@dataclass(frozen=True)
class ProblemSpec:
    """Complete double-obstacle problem on [0, horizon]."""

    gparams: GParams
    coeffs: CoefficientSet
    gen: GeneratorSpec
    obstacles: ObstaclePair
    terminal: FnSpec
    horizon: float = 1.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise SpecError("horizon must be positive")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    constraint: str
    where: str
    worst: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "validation: clean"
        lines = ["validation: %d violation(s)" % len(self.violations)]
        for v in self.violations:
            lines.append(f"  [{v.constraint}] at {v.where}: {v.detail}")
        return "\n".join(lines)


def _probe_eval(fs: FnSpec, name, t, x, y=0.0, z=0.0):
    out = np.broadcast_to(np.asarray(fs(t, x, y, z), dtype=float),
                          np.shape(x)).copy()
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(
            f"{name} returned a non-finite value at t={t!r}, x={np.ravel(x)[i]!r}")
    return out


def validate(spec: ProblemSpec, probe: "Grid") -> ValidationReport:
    """Check the structural assumptions of a problem on a probe grid.

    Walks every declared field over the probe's (t, x) nodes and collects
    one entry per violated constraint, reporting the worst offending node.
    Non-finite evaluations are a hard failure (`EvaluationError`), not a
    report entry.  The function is pure: same spec and probe, same report.

    Checked constraints: positivity/order of the volatility band, the
    ellipticity band for sigma^2, the zero-point driver bound, the
    terminal bound, obstacle order, obstacle level bounds, and the
    terminal sandwich between active obstacles.
    """
    ts = np.asarray(probe.t_nodes, dtype=float)
    xs = np.asarray(probe.x_nodes, dtype=float)
    out = []

    def flag(constraint, where, worst, detail):
        out.append(Violation(constraint, where, float(worst), detail))

    gp = spec.gparams
    if not (0.0 < gp.vol_low_sq <= gp.vol_high_sq):
        flag("vol-band-order", "gparams", gp.vol_low_sq,
             f"need 0 < low <= high, got [{gp.vol_low_sq}, {gp.vol_high_sq}]")

    ob = spec.obstacles

    def scan(fn):
        # worst value of fn over all probe slices, with its node
        worst = None
        for t in ts:
            vals = fn(float(t))
            i = int(np.argmax(vals))
            if worst is None or vals[i] > worst[0]:
                worst = (float(vals[i]), float(t), float(xs[i]))
        return worst

    sig = lambda t: _probe_eval(spec.coeffs.sigma, "sigma", t, xs)

    w = scan(lambda t: spec.coeffs.vol_floor - sig(t) ** 2)
    if w[0] > 0:
        flag("ellipticity-floor", f"(t={w[1]:g}, x={w[2]:g})", w[0],
             f"sigma^2 dips {w[0]:.3g} below declared vol_floor")
    w = scan(lambda t: sig(t) ** 2 - spec.coeffs.vol_cap)
    if w[0] > 0:
        flag("ellipticity-cap", f"(t={w[1]:g}, x={w[2]:g})", w[0],
             f"sigma^2 exceeds declared vol_cap by {w[0]:.3g}")

    w = scan(lambda t: np.abs(_probe_eval(spec.gen.f, "f", t, xs))
             + np.abs(_probe_eval(spec.gen.g, "g", t, xs))
             - spec.gen.zero_bound)
    if w[0] > 0:
        flag("driver-zero-bound", f"(t={w[1]:g}, x={w[2]:g})", w[0],
             f"|f(.,0,0)|+|g(.,0,0)| exceeds zero_bound by {w[0]:.3g}")

    phi = _probe_eval(spec.terminal, "terminal", spec.horizon, xs)
    i = int(np.argmax(np.abs(phi)))
    if abs(phi[i]) > spec.gen.zero_bound:
        flag("terminal-bound", f"(x={xs[i]:g})", abs(phi[i]),
             f"|terminal| = {abs(phi[i]):.3g} exceeds zero_bound")

    low = lambda t: _probe_eval(ob.lower, "lower obstacle", t, xs)
    upp = lambda t: _probe_eval(ob.upper, "upper obstacle", t, xs)

    if ob.lower_active and ob.upper_active:
        w = scan(lambda t: low(t) - upp(t))
        if w[0] > 0:
            flag("obstacle-order", f"(t={w[1]:g}, x={w[2]:g})", w[0],
                 f"lower exceeds upper by {w[0]:.3g}")
    if ob.lower_active:
        w = scan(lambda t: low(t) - ob.level_bound)
        if w[0] > 0:
            flag("obstacle-level", f"(t={w[1]:g}, x={w[2]:g})", w[0],
                 "lower obstacle above level_bound")
        lT = low(float(spec.horizon))
        j = int(np.argmax(lT - phi))
        if lT[j] - phi[j] > 0:
            flag("terminal-sandwich", f"(x={xs[j]:g})", lT[j] - phi[j],
                 f"terminal dips {lT[j] - phi[j]:.3g} below lower obstacle")
    if ob.upper_active:
        w = scan(lambda t: -upp(t) - ob.level_bound)
        if w[0] > 0:
            flag("obstacle-level", f"(t={w[1]:g}, x={w[2]:g})", w[0],
                 "negated upper obstacle above level_bound")
        uT = upp(float(spec.horizon))
        j = int(np.argmax(phi - uT))
        if phi[j] - uT[j] > 0:
            flag("terminal-sandwich", f"(x={xs[j]:g})", phi[j] - uT[j],
                 f"terminal exceeds upper obstacle by {phi[j] - uT[j]:.3g}")

    # probe drift/cross and the drivers off the origin for finiteness only
    for name, fs in (("drift", spec.coeffs.drift),
                     ("cross", spec.coeffs.cross)):
        for t in (ts[0], ts[-1]):
            _probe_eval(fs, name, float(t), xs)
    for name, fs in (("f", spec.gen.f), ("g", spec.gen.g)):
        for yz in ((0.0, 0.0), (1.0, -1.0), (-1.0, 1.0)):
            _probe_eval(fs, name, float(ts[0]), xs, *yz)

    return ValidationReport(tuple(out))
