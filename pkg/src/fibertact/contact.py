"""Hertz normal contact, Mindlin tangential contact, and composite bump contact.

All operations are pure closed forms. Units are SI throughout (meters,
newtons, pascals); the CLI layer converts to mm / mN for display.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from fibertact.errors import DomainError
from fibertact.materials import Material, effective_modulus

DEFAULT_FRICTION = 1.2  # silicone-on-metal regime, configurable per scene

# Bonded compliant layer stiffens against a half-space solution as the
# contact radius approaches the layer thickness; fourth-order correction
# polynomial in chi = sqrt(Re * depth) / thickness.
_LAYER_POLY = (1.133, 1.283, 0.769, 0.0975)


@dataclass(frozen=True)
class Indenter:
    """Probe or sample body touching the sensor tip."""

    kind: str  # "sphere" or "flat"
    material: Material
    radius_m: float | None = None

    def __post_init__(self):
        if self.kind not in ("sphere", "flat"):
            raise DomainError(f"indenter kind must be 'sphere' or 'flat', got {self.kind!r}")
        if self.kind == "sphere":
            if self.radius_m is None or not self.radius_m > 0:
                raise DomainError("sphere indenter needs radius > 0")

    @property
    def curvature_radius(self) -> float:
        return math.inf if self.kind == "flat" else self.radius_m


@dataclass
class ContactState:
    """Resolved quasi-static contact at one instant."""

    normal_force: float  # N
    shear_force: tuple[float, float] = (0.0, 0.0)  # N
    patch_radius: float = 0.0  # m
    indent_depth: float = 0.0  # m, contact approach = patch_radius^2 / Re
    tangential_disp: tuple[float, float] = (0.0, 0.0)  # m
    center: tuple[float, float] = (0.0, 0.0)  # m, local tip coordinates
    slipping: bool = False

    def __post_init__(self):
        if self.normal_force < 0:
            raise DomainError("normal_force must be >= 0")
        if self.patch_radius < 0:
            raise DomainError("patch_radius must be >= 0")


@dataclass
class PressureProfile:
    """Hertz pressure distribution p(r) = p0 sqrt(1 - r^2/a^2) on r <= a."""

    peak_pressure: float  # Pa
    patch_radius: float  # m

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        arg = 1.0 - (r / self.patch_radius) ** 2
        return self.peak_pressure * np.sqrt(np.clip(arg, 0.0, None))

    def integrated_force(self, n_samples: int = 10_000) -> float:
        """Numeric check: 2 pi int p(r) r dr over the patch."""
        r = np.linspace(0.0, self.patch_radius, n_samples)
        return float(np.trapezoid(self(r) * 2.0 * np.pi * r, r))


def effective_radius(r1_m: float, r2_m: float) -> float:
    """Composite curvature radius: 1/Re = 1/R1 + 1/R2 (flat body -> inf)."""
    if math.isinf(r1_m) and math.isinf(r2_m):
        raise DomainError("two flat bodies form no point contact")
    for r in (r1_m, r2_m):
        if not r > 0:
            raise DomainError(f"radii must be > 0, got {r}")
    inv = (0.0 if math.isinf(r1_m) else 1.0 / r1_m) + (0.0 if math.isinf(r2_m) else 1.0 / r2_m)
    return 1.0 / inv


def hertz_radius(force_n: float, re_m: float, eprime_pa: float) -> float:
    """Contact patch radius a = (3 F Re / (4 E'))^(1/3)."""
    if force_n < 0:
        raise DomainError("force must be >= 0")
    if not re_m > 0 or not eprime_pa > 0:
        raise DomainError("Re and E' must be > 0")
    return (3.0 * force_n * re_m / (4.0 * eprime_pa)) ** (1.0 / 3.0)


def hertz_depth_force(a_m: float, re_m: float, eprime_pa: float) -> tuple[float, float]:
    """Closure for a given patch radius: depth = a^2/Re, F = 4 E' a^3 / (3 Re).

    Exact round trip with :func:`hertz_radius`.
    """
    if a_m < 0:
        raise DomainError("patch radius must be >= 0")
    depth = a_m**2 / re_m
    force = 4.0 * eprime_pa * a_m**3 / (3.0 * re_m)
    return depth, force


def pressure_profile(force_n: float, a_m: float) -> PressureProfile:
    """Hertz pressure profile carrying the full load: p0 = 3F / (2 pi a^2)."""
    if a_m <= 0:
        if force_n > 0:
            raise DomainError("finite force on a zero-radius patch is singular")
        raise DomainError("patch radius must be > 0")
    if force_n <= 0:
        raise DomainError("force must be > 0")
    p0 = 3.0 * force_n / (2.0 * math.pi * a_m**2)
    return PressureProfile(peak_pressure=p0, patch_radius=a_m)


def tangential_stiffness(a_m: float, m1: Material, m2: Material) -> float:
    """Stick-regime shear stiffness 8 G* a with 1/G* = sum (2 - nu_i)/G_i."""
    inv_gstar = 0.0
    for m in (m1, m2):
        if math.isinf(m.youngs_modulus):
            continue
        inv_gstar += (2.0 - m.poisson_ratio) / m.shear_modulus
    if inv_gstar <= 0:
        raise DomainError("at least one body must be compliant")
    return 8.0 * a_m / inv_gstar


def mindlin_tangential(fs_n: float, fn_n: float, a_m: float, m1: Material, m2: Material,
                       mu: float = DEFAULT_FRICTION) -> tuple[float, bool]:
    """Tangential displacement under shear load.

    Linear stick compliance d = Fs / (8 G* a) while |Fs| <= mu Fn; beyond
    that the pair slips and the displacement is capped at slip onset.
    """
    if a_m <= 0:
        raise DomainError("no contact patch (a = 0)")
    if mu <= 0:
        raise DomainError("friction coefficient must be > 0")
    k = tangential_stiffness(a_m, m1, m2)
    fs_mag = abs(fs_n)
    slip_limit = mu * fn_n
    if fs_mag > slip_limit:
        return slip_limit / k, True
    return fs_mag / k, False


def compliance_share(body: Material, other: Material) -> float:
    """Fraction of the contact approach carried by ``body``."""
    total = body.compliance + other.compliance
    if total <= 0:
        raise DomainError("at least one body must be compliant")
    return body.compliance / total


def hertz_surface_shape(rho):
    """Normalized surface normal-displacement u(r)/depth for sphere contact.

    rho = r / a. Parabolic conforming region inside the patch, the standard
    half-space solution outside; continuous with value 1/2 at the edge.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    inside = rho <= 1.0
    out[inside] = 1.0 - 0.5 * rho[inside] ** 2
    ro = rho[~inside]
    with np.errstate(invalid="ignore"):
        out[~inside] = ((2.0 - ro**2) * np.arcsin(1.0 / ro) + np.sqrt(ro**2 - 1.0)) / math.pi
    return out


@dataclass
class BumpContactResult:
    """Composite contact of the sensor tip against a raised surface feature."""

    contact: ContactState
    pressure: PressureProfile | None
    bump_apex_radius_m: float
    effective_radius_m: float
    effective_modulus_pa: float
    squash_fraction: float  # bump-side depth over bump height
    peak_amplification: float
    substrate_extra_depth_m: float
    tip_side_depth_m: float  # share of the approach carried by the sensor gel


def spherical_cap_apex_radius(diameter_m: float, height_m: float) -> float:
    """Apex curvature radius of a spherical cap: (h^2 + (d/2)^2) / (2h)."""
    if diameter_m <= 0 or height_m <= 0:
        raise DomainError("cap diameter and height must be > 0")
    if height_m > diameter_m / 2.0 + 1e-12:
        raise DomainError("cap height may not exceed half the diameter")
    return (height_m**2 + (diameter_m / 2.0) ** 2) / (2.0 * height_m)


def bump_contact(tip_radius_m: float, tip_material: Material, bump_diameter_m: float,
                 bump_height_m: float, bump_material: Material, substrate: Material,
                 force_n: float, substrate_depth_coeff: float = 1.0) -> BumpContactResult:
    """Sensor tip pressing a spherical-cap bump on a substrate.

    The cap is treated as a sphere of its apex radius for the patch size.
    When the bump-side indentation becomes comparable to the cap height the
    thin squashed layer concentrates the transmitted pressure: the profile
    keeps the Hertz form but over a reduced concentration radius, raising
    the peak while still integrating to the applied force. Substrate
    compliance adds a flat-punch series term to the reported total depth.
    """
    if force_n < 0:
        raise DomainError("force must be >= 0")
    r_bump = spherical_cap_apex_radius(bump_diameter_m, bump_height_m)
    re = effective_radius(tip_radius_m, r_bump)
    eprime = effective_modulus(tip_material, bump_material)
    a = hertz_radius(force_n, re, eprime)
    depth = a**2 / re

    w_bump = compliance_share(bump_material, tip_material)
    squash = min(w_bump * depth / bump_height_m, 0.95)
    amplification = 1.0 / (1.0 - squash**2)

    pressure = None
    if force_n > 0:
        a_conc = a / math.sqrt(amplification)
        p0 = 3.0 * force_n / (2.0 * math.pi * a_conc**2)
        pressure = PressureProfile(peak_pressure=p0, patch_radius=a_conc)

    substrate_extra = 0.0
    if force_n > 0 and substrate.compliance > 0:
        substrate_extra = substrate_depth_coeff * force_n * substrate.compliance / (2.0 * a)

    state = ContactState(normal_force=force_n, patch_radius=a, indent_depth=depth)
    return BumpContactResult(
        contact=state,
        pressure=pressure,
        bump_apex_radius_m=r_bump,
        effective_radius_m=re,
        effective_modulus_pa=eprime,
        squash_fraction=squash,
        peak_amplification=amplification,
        substrate_extra_depth_m=substrate_extra,
        tip_side_depth_m=(1.0 - w_bump) * depth,
    )


def _layer_factor(chi: float) -> float:
    c1, c2, c3, c4 = _LAYER_POLY
    return 1.0 + c1 * chi + c2 * chi**2 + c3 * chi**3 + c4 * chi**4


def solve_depth_on_layer(force_n: float, re_m: float, eprime_pa: float,
                         thickness_m: float) -> float:
    """Contact approach for a sphere on a bonded compliant layer.

    Solves F = (4/3) E' sqrt(Re) depth^{3/2} * layer_factor(chi) for depth,
    with chi = sqrt(Re * depth) / thickness. Reduces to plain Hertz as the
    layer becomes thick.
    """
    if force_n <= 0:
        return 0.0

    def resid(depth):
        chi = math.sqrt(re_m * depth) / thickness_m
        return (4.0 / 3.0) * eprime_pa * math.sqrt(re_m) * depth**1.5 * _layer_factor(chi) - force_n

    d_half = (3.0 * force_n / (4.0 * eprime_pa * math.sqrt(re_m))) ** (2.0 / 3.0)
    return brentq(resid, 0.0, d_half * 1.01, xtol=1e-15, rtol=1e-13)


@dataclass
class DisplacementRow:
    force_n: float
    total_depth_m: float
    sample_displacement_m: float
    indenter_displacement_m: float
    patch_radius_m: float


def displacement_study(indenter_material: Material, sample_material: Material,
                       force_grid_n, tip_radius_m: float = 7.5e-3,
                       sample_thickness_m: float = 7e-3) -> list[DisplacementRow]:
    """Surface-displacement table for a dome-tipped indenter on a flat sample.

    For each force the total approach is computed (with the bonded-layer
    stiffening of the finite-thickness sample) and partitioned between the
    bodies in proportion to their (1 - nu^2)/E compliance terms; the sample
    row share is what a displacement probe at the sample surface reads, the
    indenter share is what the sensor itself images.
    """
    forces = np.asarray(force_grid_n, dtype=float)
    if np.any(forces < 0):
        raise DomainError("forces must be >= 0")
    if np.any(np.diff(forces) < 0):
        raise DomainError("force grid must be sorted ascending")
    eprime = effective_modulus(indenter_material, sample_material)
    w_sample = compliance_share(sample_material, indenter_material)
    rows = []
    for f in forces:
        depth = solve_depth_on_layer(float(f), tip_radius_m, eprime, sample_thickness_m)
        a = math.sqrt(depth * tip_radius_m)
        rows.append(
            DisplacementRow(
                force_n=float(f),
                total_depth_m=depth,
                sample_displacement_m=w_sample * depth,
                indenter_displacement_m=(1.0 - w_sample) * depth,
                patch_radius_m=a,
            )
        )
    return rows


def contact_sweep(force_grid_n, re_m: float, eprime_pa: float) -> list[dict]:
    """Hertz sweep rows for CSV export."""
    rows = []
    for f in np.asarray(force_grid_n, dtype=float):
        a = hertz_radius(float(f), re_m, eprime_pa)
        depth = a**2 / re_m if a > 0 else 0.0
        peak = 3.0 * f / (2.0 * math.pi * a**2) if a > 0 else 0.0
        rows.append(
            {"force_n": float(f), "radius_m": a, "depth_m": depth, "peak_pressure_pa": peak}
        )
    return rows
