"""Hyperbolicity and linear-stability toolkit for the two-way models.

The two-way systems lose hyperbolicity where the discriminant

    Delta = (c_u+ - c_u-)^2 - 4 rho+ rho- c+- c-+

turns negative; there the linearized dynamics grows counter-flow
perturbations.  With a diffusivity delta added, only wave numbers below
sqrt(|Delta|)/(2 delta) grow; the fastest-growing one is
sqrt(|Delta|)/(4 delta) with rate |Delta|/(16 delta), which sets the
emergent cluster scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as md
from .errors import DomainError, NonHyperbolicError

#: Density tolerance used to locate the Delta = 0 level set.
BOUNDARY_TOL = 1e-6


@dataclass(frozen=True)
class SpeedSet:
    """Characteristic ingredients of a two-way pressure-coupled state.

    c_pp, c_pm are the own/other-density partials of the plus-species
    offset; c_mm, c_mp the same for the minus species.  c_u_plus and
    c_u_minus are the decoupled characteristic speeds of each species.
    """

    c_pp: float
    c_pm: float
    c_mp: float
    c_mm: float
    c_u_plus: float
    c_u_minus: float


def speed_set(model, rho_plus, rho_minus, w_plus=None, w_minus=None) -> SpeedSet:
    """Evaluate the SpeedSet of a two-way CAR/AR model at one state."""
    if model.kind not in (md.ModelKind.TWO_WAY_CAR, md.ModelKind.TWO_WAY_AR):
        raise DomainError("speed_set requires a two-way pressure-coupled model")
    spd = md._two_way_char_speeds(model, rho_plus, rho_minus, w_plus, w_minus)
    return SpeedSet(
        c_pp=float(spd["c_pp"]),
        c_pm=float(spd["c_pm"]),
        c_mp=float(spd["c_mp"]),
        c_mm=float(spd["c_mm"]),
        c_u_plus=float(spd["c_u_plus"]),
        c_u_minus=float(spd["c_u_minus"]),
    )


def ar_discriminant(speeds: SpeedSet, rho_plus, rho_minus):
    """Discriminant whose sign decides hyperbolicity of the two-way models."""
    diff = speeds.c_u_plus - speeds.c_u_minus
    return diff * diff - 4.0 * rho_plus * rho_minus * speeds.c_pm * speeds.c_mp


def ar_eigenvalues(speeds: SpeedSet, delta):
    """Coupled characteristic speeds (c_u+ + c_u- -+ sqrt(Delta)) / 2.

    Returns the ordered pair (lam_minus, lam_plus).  The dynamic
    desired-speed system has two further characteristic speeds, the
    actual speeds u+ and u- themselves.
    """
    if delta < 0:
        raise NonHyperbolicError(f"negative discriminant {delta}")
    sq = np.sqrt(delta)
    csum = speeds.c_u_plus + speeds.c_u_minus
    return 0.5 * (csum - sq), 0.5 * (csum + sq)


@dataclass(frozen=True)
class DiffusiveSpeeds:
    """Partial derivatives of the two-species flux pair.

    c_pp = d1 f(rho+,rho-), c_pm = d2 f(rho+,rho-), and the mirrored
    c_mm = d1 f(rho-,rho+), c_mp = d2 f(rho-,rho+) for the flux f of the
    plus species; the system flux is (f(rho+,rho-), -f(rho-,rho+)).
    at_kink is set when the state sits exactly on a slope kink of the
    flux profile, where only one-sided derivatives exist.
    """

    c_pp: float
    c_pm: float
    c_mp: float
    c_mm: float
    at_kink: bool = False

    @property
    def jacobian(self) -> np.ndarray:
        """Convection matrix of the system flux (f, -f mirrored)."""
        return np.array(
            [[self.c_pp, self.c_pm], [-self.c_mp, -self.c_mm]], dtype=float
        )


def diffusive_speeds(model, rho_plus, rho_minus) -> DiffusiveSpeeds:
    """Analytic flux partials of a two-species first-order model.

    Supported kinds: sim_flux (piecewise-quadratic profile) and
    two_way_car (assembled from the pressure partials).
    """
    rp = float(rho_plus)
    rm = float(rho_minus)
    if rp < 0 or rm < 0:
        raise DomainError("densities must be >= 0")
    if model.kind is md.ModelKind.SIM_FLUX:
        a = model.flux_shape.a
        rho = rp + rm
        h, hp = md._sim_h(model.flux_shape, np.asarray(rho))
        h, hp = float(h), float(hp)
        return DiffusiveSpeeds(
            c_pp=h + rp * hp,
            c_pm=rp * hp,
            c_mp=rm * hp,
            c_mm=h + rm * hp,
            at_kink=(rho == a or rho == 1.0),
        )
    if model.kind is md.ModelKind.TWO_WAY_CAR:
        spd = md._two_way_char_speeds(model, rp, rm)
        return DiffusiveSpeeds(
            c_pp=float(spd["c_u_plus"]),
            c_pm=float(-rp * spd["c_pm"]),
            c_mp=float(-rm * spd["c_mp"]),
            c_mm=float(-spd["c_u_minus"]),
        )
    raise DomainError("diffusive_speeds requires a two-species first-order model")


def diffusive_speeds_fd(flux_fn, rho_plus, rho_minus, step=1e-7) -> DiffusiveSpeeds:
    """Centered finite-difference fallback for a user-supplied flux
    f(rho_plus, rho_minus) of the plus species."""

    def d(fn, x, y, which):
        if which == 0:
            return (fn(x + step, y) - fn(x - step, y)) / (2.0 * step)
        return (fn(x, y + step) - fn(x, y - step)) / (2.0 * step)

    return DiffusiveSpeeds(
        c_pp=d(flux_fn, rho_plus, rho_minus, 0),
        c_pm=d(flux_fn, rho_plus, rho_minus, 1),
        c_mp=d(flux_fn, rho_minus, rho_plus, 1),
        c_mm=d(flux_fn, rho_minus, rho_plus, 0),
    )


def diffusive_discriminant(speeds: DiffusiveSpeeds):
    """Discriminant (c_pp + c_mm)^2 - 4 c_pm c_mp in flux-partial form.

    Identical to ar_discriminant under the identification
    c_pp ~ c_u+, c_pm ~ -rho+ c+-, c_mm ~ -c_u-, c_mp ~ -rho- c-+.
    """
    s = speeds.c_pp + speeds.c_mm
    return s * s - 4.0 * speeds.c_pm * speeds.c_mp


def dispersion(speeds: DiffusiveSpeeds, delta_diff, xi):
    """Phase velocities of Fourier modes of the linearized diffusive system.

    For a mode exp(i(xi x - s t)) the two phase velocities are

        lam_+-(xi) = ((c_pp - c_mm) - 2 i delta xi +- sqrt(Delta)) / 2

    with the principal complex square root (so sqrt(Delta) = i sqrt(|Delta|)
    when Delta < 0).  The mode frequency is s = xi * lam(xi) and the mode
    grows exactly when Im s > 0.
    """
    if delta_diff < 0:
        raise DomainError("diffusivity must be >= 0")
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 0
    delta = diffusive_discriminant(speeds)
    sq = np.sqrt(complex(delta))
    base = (speeds.c_pp - speeds.c_mm) - 2.0j * delta_diff * xi
    lam_plus = 0.5 * (base + sq)
    lam_minus = 0.5 * (base - sq)
    if scalar:
        return complex(lam_plus), complex(lam_minus)
    return lam_plus, lam_minus


def growth_rate(speeds: DiffusiveSpeeds, delta_diff, xi):
    """Largest Im(xi * lam(xi)) over the two modes."""
    lam_plus, lam_minus = dispersion(speeds, delta_diff, xi)
    xi = np.asarray(xi, dtype=float)
    out = np.maximum(np.imag(xi * lam_plus), np.imag(xi * lam_minus))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StabilityReport:
    """Linear-stability summary of one uniform two-species state.

    When hyperbolic (delta >= 0) the diffusion-free characteristic
    speeds are reported; otherwise the unstable band |xi| <
    unstable_xi_max, its fastest-growing wave number, the corresponding
    growth rate and the dominant length 1/dominant_xi.
    """

    delta: float
    hyperbolic: bool
    eigenvalues: tuple[float, float] | None = None
    unstable_xi_max: float | None = None
    dominant_xi: float | None = None
    max_growth_rate: float | None = None
    dominant_length: float | None = None


def instability_summary(speeds: DiffusiveSpeeds, delta_diff) -> StabilityReport:
    """Closed-form stability summary from the flux partials.

    Unstable band bound sqrt(|Delta|)/(2 delta), fastest-growing wave
    number sqrt(|Delta|)/(4 delta), maximal growth rate |Delta|/(16 delta).
    """
    delta = diffusive_discriminant(speeds)
    if delta >= 0:
        sq = np.sqrt(delta)
        tr = speeds.c_pp - speeds.c_mm
        return StabilityReport(
            delta=float(delta),
            hyperbolic=True,
            eigenvalues=(0.5 * (tr - sq), 0.5 * (tr + sq)),
        )
    if delta_diff <= 0:
        raise DomainError("unstable summary requires a positive diffusivity")
    root = np.sqrt(-delta)
    return StabilityReport(
        delta=float(delta),
        hyperbolic=False,
        unstable_xi_max=float(root / (2.0 * delta_diff)),
        dominant_xi=float(root / (4.0 * delta_diff)),
        max_growth_rate=float(-delta / (16.0 * delta_diff)),
        dominant_length=float(4.0 * delta_diff / root),
    )


def delta_field(model, rho_plus, rho_minus):
    """Vectorized discriminant over arrays of uniform states."""
    rp = np.asarray(rho_plus, dtype=float)
    rm = np.asarray(rho_minus, dtype=float)
    if model.kind is md.ModelKind.SIM_FLUX:
        h, hp = md._sim_h(model.flux_shape, rp + rm)
        s = 2.0 * h + (rp + rm) * hp
        return s * s - 4.0 * rp * rm * hp * hp
    if model.kind is md.ModelKind.TWO_WAY_CAR:
        spd = md._two_way_char_speeds(model, rp, rm)
        diff = spd["c_u_plus"] - spd["c_u_minus"]
        return diff * diff - 4.0 * rp * rm * spd["c_pm"] * spd["c_mp"]
    raise DomainError("delta_field requires a two-species first-order model")


@dataclass(frozen=True)
class HyperbolicityMap:
    """Raster classification of the admissible density square.

    hyperbolic[i, j] is the sign of Delta at (rho_plus[i], rho_minus[j]);
    boundary_points are Delta = 0 locations found by bisection along
    grid edges separating differently classified nodes.
    """

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    hyperbolic: np.ndarray
    boundary_points: np.ndarray

    def to_table_text(self) -> str:
        """Plain-text raster: one row per rho_plus, entries 1/0."""
        lines = []
        for row in self.hyperbolic.astype(int):
            lines.append(" ".join(str(v) for v in row))
        return "\n".join(lines) + "\n"


def hyperbolicity_map(model, grid_resolution: int) -> HyperbolicityMap:
    """Classify hyperbolicity on a uniform grid of the density square.

    For the sim_flux model the square is [0, 1]^2 (the flux vanishes
    beyond total density 1, where the system is degenerate hyperbolic);
    for pressure-coupled models the grid stays strictly inside the
    admissible triangle and the outside is reported as hyperbolic.
    """
    if grid_resolution < 2:
        raise DomainError("grid_resolution must be >= 2")
    if model.kind is md.ModelKind.SIM_FLUX:
        rho_max = 1.0
        admissible = None
    else:
        rho_max = model.pressure.rho_star * (1.0 - 1e-9)
        admissible = model.pressure.rho_star * (1.0 - 1e-9)
    axis = np.linspace(0.0, rho_max, grid_resolution)
    RP, RM = np.meshgrid(axis, axis, indexing="ij")
    if admissible is None:
        delta = delta_field(model, RP, RM)
    else:
        inside = RP + RM < admissible
        delta = np.ones_like(RP)
        rp_in = np.where(inside, RP, 0.0)
        rm_in = np.where(inside, RM, 0.0)
        delta = np.where(inside, delta_field(model, rp_in, rm_in), 1.0)
    hyp = delta >= 0.0

    def point_delta(rp, rm):
        if admissible is not None and rp + rm >= admissible:
            return 1.0
        return float(delta_field(model, rp, rm))

    points = []
    for axis_dir in (0, 1):
        flips = np.nonzero(np.diff(hyp, axis=axis_dir))
        for i, j in zip(*flips):
            if axis_dir == 0:
                p0 = (axis[i], axis[j])
                p1 = (axis[i + 1], axis[j])
            else:
                p0 = (axis[i], axis[j])
                p1 = (axis[i], axis[j + 1])
            points.append(_bisect_boundary(point_delta, p0, p1))
    boundary = np.array(points) if points else np.empty((0, 2))
    return HyperbolicityMap(
        rho_plus=axis, rho_minus=axis.copy(), hyperbolic=hyp, boundary_points=boundary
    )


def _bisect_boundary(point_delta, p0, p1, tol=BOUNDARY_TOL):
    """Locate the Delta = 0 crossing on the segment p0 -> p1."""
    f0 = point_delta(*p0)
    a, b = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    while np.max(np.abs(b - a)) > tol:
        mid = 0.5 * (a + b)
        fm = point_delta(*mid)
        if (fm >= 0) == (f0 >= 0):
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)
