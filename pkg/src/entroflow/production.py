"""Relative-entropy production rates along continuity-equation flows.

For two positive families solving d rho/dt + div(f rho) = 0 with velocity
fields f and f~, and decaying boundary terms, the divergence evolves as

    d/dt D(rho~ || rho) = integral grad log(rho~/rho) . (f~ - f) rho~ dx.

Specializing rho to the Gibbs equilibrium and f~ to the controlled velocity
u - (sigma2/2) grad log(rho^u / rho_bar) splits the rate into

    d/dt D = -PEPR + EPuR,
    PEPR = (sigma2/2) integral |grad log(rho^u/rho_bar)|^2 rho^u  >= 0,
    EPuR = integral grad log(rho^u/rho_bar) . u rho^u,

an always-dissipative Fisher-information term and a pumping term carrying
the entire control dependence.  The free energy kT D(rho||rho_bar) decays at
rate -(sigma2 kT / 2) * Fisher = -integral J . Phi, and the equality of the
two forms is asserted on every call as a discretization self-check.

All integrands share the discrete gradient of `grids.gradient`, so the
cross-identities between this module, `thermo.flux_and_force` and the
finite-volume solver hold to roundoff rather than to discretization error.
Cells with density below 1e-300 are excluded from log-ratio integrands
(IEEE underflow guard; their weight is the density itself).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fokker_planck import BoundaryDecayReport, boundary_decay_report
from .grids import GridDensity, VectorFieldGrid, gradient, require_same_grid
from .thermo import HamiltonianSpec, gibbs_density, flux_and_force

DENSITY_FLOOR = 1e-300


class BoundaryLeakWarning(UserWarning):
    """Boundary-decay certificate failed: rate may carry boundary-term bias."""


def _safe_log(values: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(values, DENSITY_FLOOR))


def _support_mask(rho: GridDensity) -> np.ndarray:
    return rho.values >= DENSITY_FLOOR


def _require_positive_on(mask: np.ndarray, rho: GridDensity) -> None:
    if np.any(rho.values[mask] <= 0.0):
        raise ValueError("nonpositive density")


def log_ratio_gradient(rho: GridDensity, ref: GridDensity) -> np.ndarray:
    """grad log(rho/ref) with the shared discrete stencil; floored at 1e-300."""
    require_same_grid(rho, ref)
    return gradient(rho.grid, _safe_log(rho.values) - _safe_log(ref.values))


def relative_entropy_rate(rho_tilde: GridDensity, rho: GridDensity,
                          f_tilde: VectorFieldGrid, f: VectorFieldGrid,
                          check_boundary: bool = True) -> float:
    """d/dt D(rho~||rho) from the velocity fields of the two evolutions.

    Quadrature of grad log(rho~/rho) . (f~ - f) rho~.  Emits a
    :class:`BoundaryLeakWarning` when the boundary-decay certificate fails
    (the returned value is then boundary-suspect).
    """
    grid = require_same_grid(rho_tilde, rho, f_tilde, f)
    mask = _support_mask(rho_tilde)
    _require_positive_on(mask, rho)
    g = log_ratio_gradient(rho_tilde, rho)
    integrand = np.einsum("...i,...i->...", g, f_tilde.vectors - f.vectors)
    integrand = np.where(mask, integrand * rho_tilde.values, 0.0)
    if check_boundary:
        report = boundary_decay_report(rho_tilde, f_tilde, rho, f)
        if not report.passed:
            warnings.warn("boundary-suspect: decay certificate failed "
                          f"(max term {max(report.max_drift_rho_log, report.max_drift_rho, report.max_ref_drift_rho):.2e})",
                          BoundaryLeakWarning, stacklevel=2)
    return float(np.sum(integrand) * grid.cell_volume)


def entropy_rate(rho: GridDensity, f: VectorFieldGrid) -> float:
    """d/dt S(rho) = -integral grad log rho . f rho for a continuity flow."""
    grid = require_same_grid(rho, f)
    mask = _support_mask(rho)
    g = gradient(grid, _safe_log(rho.values))
    integrand = np.einsum("...i,...i->...", g, f.vectors)
    integrand = np.where(mask, integrand * rho.values, 0.0)
    return -float(np.sum(integrand) * grid.cell_volume)


@dataclass(frozen=True)
class ProductionReport:
    """Rate decomposition d/dt D(rho^u||rho_bar) = -pepr + epur.

    pepr >= 0 is the Fisher-information production term, epur the pumping
    term carried by the control.  ``entropy_production`` = -total exposes
    the opposite sign convention used when quoting production rather than
    divergence decay.
    """

    total: float
    pepr: float
    epur: float
    boundary: BoundaryDecayReport

    @property
    def entropy_production(self) -> float:
        return -self.total

    def __post_init__(self):
        if not np.isclose(self.total, -self.pepr + self.epur, rtol=0.0, atol=1e-12):
            raise ValueError("decomposition identity violated")


def production_decomposition(rho_u: GridDensity, equilibrium: GridDensity,
                             u: VectorFieldGrid, sigma2: float) -> ProductionReport:
    """Split d/dt D(rho^u||equilibrium) into -PEPR + EPuR.

    ``equilibrium`` must be the Gibbs density of the Hamiltonian that
    generates the uncontrolled drift (caller's responsibility: it enters
    only through log ratios, so this cannot be verified here).
    """
    grid = require_same_grid(rho_u, equilibrium, u)
    mask = _support_mask(rho_u)
    _require_positive_on(mask, equilibrium)
    g = log_ratio_gradient(rho_u, equilibrium)
    w = np.where(mask, rho_u.values, 0.0)
    fisher = np.sum(np.einsum("...i,...i->...", g, g) * w) * grid.cell_volume
    pepr = 0.5 * sigma2 * float(fisher)
    epur = float(np.sum(np.einsum("...i,...i->...", g, u.vectors) * w) * grid.cell_volume)
    # velocity of the controlled flow relative to equilibrium (the reference
    # flow is stationary with velocity 0)
    f_tilde = VectorFieldGrid(grid, u.vectors - 0.5 * sigma2 * g)
    report = boundary_decay_report(rho_u, f_tilde, equilibrium,
                                   VectorFieldGrid.zero(grid))
    return ProductionReport(total=-pepr + epur, pepr=pepr, epur=epur,
                            boundary=report)


def free_energy_decay_rate(rho: GridDensity, ham: HamiltonianSpec) -> float:
    """d/dt F(rho) = -(sigma2 kT / 2) integral |grad log(rho/rho_bar)|^2 rho.

    Also evaluates the flux-force form -integral J . Phi and raises if the
    two disagree beyond 1e-6 relative (a discretization inconsistency).
    """
    equilibrium = gibbs_density(ham, rho.grid)
    decomposition = production_decomposition(
        rho, equilibrium, VectorFieldGrid.zero(rho.grid), ham.sigma2)
    form1 = ham.kT * decomposition.total
    J, Phi = flux_and_force(rho, ham)
    form2 = -float(np.sum(np.einsum("...i,...i->...", J.vectors, Phi.vectors))
                   * rho.grid.cell_volume)
    scale = max(abs(form1), abs(form2))
    if scale > 1e-12 and abs(form1 - form2) > 1e-6 * scale:
        raise ValueError("FE identity violated: "
                         f"{form1!r} (Fisher form) vs {form2!r} (flux-force form)")
    return form1
