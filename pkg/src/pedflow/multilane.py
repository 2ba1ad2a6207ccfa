"""Lane-coupled two-way traffic with congestion-aware lane changing.

K parallel two-way lanes advance independently by the transport-
diffusion scheme and then exchange walkers through explicit source
terms.  The transition rate out of a lane grows with the material
derivative of that lane's offset (walkers leave when their lane is
getting worse) and dies linearly as the target lane fills, reaching
exactly zero at the jam density, so congested lanes attract nobody.

Rates toward non-existent lanes (below lane 0, above lane K-1) are
zero, which closes the finite stack conservatively: summed over lanes,
the sources cancel and each walking direction conserves its total mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as md
from . import solver as sv
from .errors import DomainError, SourceStiffnessError


@dataclass(frozen=True)
class LaneChangeRates:
    """Base rate and the two swappable shape functions.

    ramp maps the offset material derivative to a non-negative,
    non-decreasing multiplier ('positive_part' or 'sigmoid'); cutoff
    shapes the vanishing toward a congested target lane ('linear' or
    'quadratic' power of (1 - rho_target/rho_star)+).

    The functional forms are modeling defaults, not measured quantities.
    """

    lambda0: float = 0.0
    ramp: str = "positive_part"
    cutoff: str = "linear"

    def __post_init__(self):
        if self.lambda0 < 0:
            raise DomainError("lambda0 must be >= 0")
        if self.ramp not in ("positive_part", "sigmoid"):
            raise DomainError("ramp must be 'positive_part' or 'sigmoid'")
        if self.cutoff not in ("linear", "quadratic"):
            raise DomainError("cutoff must be 'linear' or 'quadratic'")


def lane_change_rate(rates: LaneChangeRates, dpdt, rho_target, rho_star):
    """Transition rate lambda0 * ramp(dpdt) * cutoff(rho_target).

    Zero whenever the offset is not increasing along the walker's path
    (positive-part ramp) and exactly zero at rho_target = rho_star.
    """
    dpdt = np.asarray(dpdt, dtype=float)
    rt = np.asarray(rho_target, dtype=float)
    scalar = dpdt.ndim == 0 and rt.ndim == 0
    if np.any(rt > rho_star * (1.0 + 1e-12)):
        raise DomainError("rho_target must be <= rho_star")
    if rates.ramp == "positive_part":
        ramp = np.maximum(dpdt, 0.0)
    else:
        ramp = 1.0 / (1.0 + np.exp(-dpdt))
    cut = np.maximum(1.0 - rt / rho_star, 0.0)
    if rates.cutoff == "quadratic":
        cut = cut * cut
    out = rates.lambda0 * ramp * cut
    return float(out) if scalar else out


def density_sources(rho: np.ndarray, rates_up: np.ndarray, rates_down: np.ndarray):
    """Net lane-change gain of each lane and direction.

    rho, rates_up, rates_down share the shape (K, 2, ...): lane, then
    walking direction.  rates_up[k] moves walkers k -> k+1, rates_down[k]
    moves k -> k-1; the outward rates of the boundary lanes are forced
    to zero.  Summed over lanes the result cancels term by term.
    """
    rho = np.asarray(rho, dtype=float)
    K = rho.shape[0]
    up_flow = rates_up * rho
    down_flow = rates_down * rho
    if K > 0:
        up_flow[K - 1] = 0.0
        down_flow[0] = 0.0
    S = -up_flow - down_flow
    S[1:] += up_flow[:-1]
    S[:-1] += down_flow[1:]
    return S


def momentum_sources(
    rho: np.ndarray, w: np.ndarray, rates_up: np.ndarray, rates_down: np.ndarray
):
    """Lane-change gain of the desired-speed momentum rho*w.

    The momentum moves with the same rates as the walkers carrying it,
    so with a uniform w the result reduces to w times density_sources.
    """
    return density_sources(np.asarray(rho, dtype=float) * np.asarray(w, dtype=float),
                           rates_up, rates_down)


@dataclass
class LaneStack:
    """K two-way lanes sharing a grid and a jam density.

    Each lane carries its own two-way model (constant or dynamic desired
    speed) and conserved state.  prev_offsets holds the per-lane,
    per-direction offset fields of the previous step, used for the
    discrete material derivative that drives the rates.
    """

    models: list
    fields: list
    rates: LaneChangeRates
    rho_star: float
    prev_offsets: np.ndarray | None = None

    def __post_init__(self):
        if len(self.models) < 1 or len(self.models) != len(self.fields):
            raise DomainError("need one model and one state per lane")
        kinds = {m.kind for m in self.models}
        if not kinds <= {md.ModelKind.TWO_WAY_CAR, md.ModelKind.TWO_WAY_AR}:
            raise DomainError("lanes must be two-way pressure-coupled models")
        if len(kinds) != 1:
            raise DomainError("all lanes must share one model kind")
        for m in self.models:
            if abs(m.pressure.rho_star - self.rho_star) > 1e-12 * self.rho_star:
                raise DomainError("all lanes must share rho_star")
        n = {f.n_cells for f in self.fields}
        if len(n) != 1:
            raise DomainError("all lanes must share the grid")

    @property
    def n_lanes(self) -> int:
        return len(self.models)

    @property
    def kind(self):
        return self.models[0].kind

    def densities(self) -> np.ndarray:
        """(K, 2, n) array of per-lane, per-direction densities."""
        rows = self.models[0].density_rows
        return np.stack([f.values[list(rows)] for f in self.fields])

    def desired_speeds(self) -> np.ndarray:
        """(K, 2, n) array of w per lane/direction (V for CAR lanes)."""
        if self.kind is md.ModelKind.TWO_WAY_CAR:
            n = self.fields[0].n_cells
            return np.stack(
                [np.full((2, n), m.V, dtype=float) for m in self.models]
            )
        out = []
        for f in self.fields:
            rho_p, w_p, _ = md._species_primitives(f.values[0], f.values[1])
            rho_m, w_m, _ = md._species_primitives(f.values[2], f.values[3])
            out.append(np.stack([w_p, w_m]))
        return np.stack(out)

    def direction_mass(self, grid: sv.Grid1D) -> np.ndarray:
        """Total mass per walking direction, summed over lanes."""
        return self.densities().sum(axis=(0, 2)) * grid.dx


def _offsets_and_speeds(stack: LaneStack):
    """Per-lane offset and actual-speed fields on the current states."""
    rho = stack.densities()
    K, _, n = rho.shape
    p = np.empty_like(rho)
    u = np.empty_like(rho)
    for k, model in enumerate(stack.models):
        p_plus, p_minus = md.two_way_pressures(model, rho[k, 0], rho[k, 1])
        p[k, 0], p[k, 1] = p_plus, p_minus
        if model.kind is md.ModelKind.TWO_WAY_CAR:
            u[k, 0] = model.V - p_plus
            u[k, 1] = -model.V + p_minus
        else:
            f = stack.fields[k]
            _, w_p, _ = md._species_primitives(f.values[0], f.values[1])
            _, w_m, _ = md._species_primitives(f.values[2], f.values[3])
            u[k, 0] = w_p - p_plus
            u[k, 1] = -w_m + p_minus
    return rho, p, u


def _upwind_gradient(p: np.ndarray, u: np.ndarray, dx: float) -> np.ndarray:
    """Periodic one-sided gradient taken against the local flow direction."""
    backward = (p - np.roll(p, 1, axis=-1)) / dx
    forward = (np.roll(p, -1, axis=-1) - p) / dx
    return np.where(u >= 0.0, backward, forward)


def coupled_step(stack: LaneStack, grid: sv.Grid1D, params: sv.SchemeParams) -> LaneStack:
    """Advance the whole stack one step: transport, then lane exchange.

    Every lane is advanced by the conservative transport-diffusion step;
    the lane-change sources are then evaluated on the transported states
    (one common time level) and applied as explicit increments dt*S to
    the densities and dt*R to the desired-speed momenta of dynamic
    lanes.  The offset material derivative uses the offsets stored by
    the previous call; the first call uses the spatial term only.
    """
    if params.dt * stack.rates.lambda0 > 1.0 + 1e-12:
        raise SourceStiffnessError(
            f"lambda0 * dt = {params.dt * stack.rates.lambda0:.3g} exceeds 1"
        )
    new_fields = [
        sv.step(model, f, grid, params)
        for model, f in zip(stack.models, stack.fields)
    ]
    new_stack = LaneStack(
        models=stack.models,
        fields=new_fields,
        rates=stack.rates,
        rho_star=stack.rho_star,
        prev_offsets=stack.prev_offsets,
    )
    rho, p, u = _offsets_and_speeds(new_stack)
    dpdt = u * _upwind_gradient(p, u, grid.dx)
    if stack.prev_offsets is not None:
        dpdt = dpdt + (p - stack.prev_offsets) / params.dt

    K = new_stack.n_lanes
    total = rho.sum(axis=1)  # (K, n)
    rates_up = np.zeros_like(rho)
    rates_down = np.zeros_like(rho)
    for k in range(K):
        for alpha in range(2):
            if k + 1 < K:
                rates_up[k, alpha] = lane_change_rate(
                    stack.rates, dpdt[k, alpha], total[k + 1], stack.rho_star
                )
            if k - 1 >= 0:
                rates_down[k, alpha] = lane_change_rate(
                    stack.rates, dpdt[k, alpha], total[k - 1], stack.rho_star
                )

    S = density_sources(rho, rates_up, rates_down)
    if new_stack.kind is md.ModelKind.TWO_WAY_AR:
        w = new_stack.desired_speeds()
        R = momentum_sources(rho, w, rates_up, rates_down)
    dens_rows = list(new_stack.models[0].density_rows)
    for k, f in enumerate(new_fields):
        f.values[dens_rows] += params.dt * S[k]
        if new_stack.kind is md.ModelKind.TWO_WAY_AR:
            f.values[1] += params.dt * R[k, 0]
            f.values[3] += params.dt * R[k, 1]
    new_stack.prev_offsets = p
    return new_stack
