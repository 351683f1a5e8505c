"""Illumination-path modeling: coupling loss, attenuation, and irradiance maps.

Each illumination bundle is treated as a point-like emitter on the gel base
plane pointing along +z, with either a Lambertian or a Gaussian-cone angular
profile. The gel is lossless and index matched, so the flux a surface cell
receives is just the emitted intensity at the cell's direction divided by
distance squared, projected on the membrane.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from fibertact.errors import DomainError
from fibertact.geometry import SurfaceGrid

DEFAULT_CHANNEL_CYCLE = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class FiberBundleSpec:
    """Optical parameters of one fiber bundle conduit."""

    n_cores: int
    core_diameter_m: float
    numerical_aperture: float
    length_m: float
    attenuation_db_per_m: float
    bundle_diameter_m: float

    def __post_init__(self):
        if not 0.0 < self.numerical_aperture <= 1.0:
            raise DomainError(f"NA must be in (0, 1], got {self.numerical_aperture}")
        for name in ("core_diameter_m", "length_m", "bundle_diameter_m"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")


#: 48-core incoherent illumination conduit defaults.
ILLUMINATION_BUNDLE = FiberBundleSpec(
    n_cores=48,
    core_diameter_m=0.25e-3,
    numerical_aperture=0.5,
    length_m=0.4,
    attenuation_db_per_m=0.65,
    bundle_diameter_m=3e-3,
)

#: 7400-core imaging conduit defaults.
IMAGING_BUNDLE = FiberBundleSpec(
    n_cores=7400,
    core_diameter_m=18e-6,
    numerical_aperture=0.5,
    length_m=0.4,
    attenuation_db_per_m=0.65,
    bundle_diameter_m=2e-3,
)


@dataclass(frozen=True)
class IlluminationLayout:
    """Ring of illumination bundles on the gel base plane.

    ``r_f_m`` is the bundle radius (jacket included), ``r_b_m`` the ring
    radius of the bundle centers, ``alpha_b_deg`` the angular spacing.
    """

    n_b: int = 6
    r_f_m: float = 1.5e-3
    r_b_m: float = 5.75e-3
    alpha_b_deg: float = 60.0
    channel_colors: tuple = field(
        default_factory=lambda: tuple(DEFAULT_CHANNEL_CYCLE[i % 3] for i in range(6))
    )

    def __post_init__(self):
        if self.n_b < 1:
            raise DomainError("need at least one bundle")
        if len(self.channel_colors) != self.n_b:
            raise DomainError("channel_colors must list one RGB triple per bundle")
        if abs(self.n_b * self.alpha_b_deg - 360.0) > 1e-9:
            raise DomainError("symmetric layout requires n_b * alpha_b = 360 deg")

    def positions(self) -> np.ndarray:
        """(n_b, 3) bundle exit centers on the base plane."""
        angles = np.radians(self.alpha_b_deg) * np.arange(self.n_b)
        return np.stack(
            [self.r_b_m * np.cos(angles), self.r_b_m * np.sin(angles), np.zeros(self.n_b)],
            axis=-1,
        )


def acceptance_angle(na: float) -> float:
    """Fiber acceptance half-angle arcsin(NA), in degrees."""
    if not 0.0 <= na <= 1.0:
        raise DomainError(f"NA must be in [0, 1], got {na}")
    return math.degrees(math.asin(na))


def coupling_fraction(na: float) -> tuple[float, float]:
    """(coupled, loss) power fractions for a Lambertian source into a fiber.

    coupled = sin^2(acceptance angle) = NA^2.
    """
    if not 0.0 <= na <= 1.0:
        raise DomainError(f"NA must be in [0, 1], got {na}")
    coupled = na * na
    return coupled, 1.0 - coupled


def attenuation_transmission(length_m: float, rate_db_per_m: float) -> float:
    """Power transmission 10^(-rate * length / 10)."""
    if length_m < 0:
        raise DomainError("length must be >= 0")
    return 10.0 ** (-rate_db_per_m * length_m / 10.0)


def _beam_intensity(beam: str, theta: np.ndarray, na: float) -> np.ndarray:
    """Unnormalized radiant intensity at angle theta from the bundle axis."""
    if beam == "lambertian":
        return np.clip(np.cos(theta), 0.0, None)
    if beam == "gaussian_cone":
        theta_w = math.asin(na)  # 1/e^2 half-angle
        return np.exp(-2.0 * (theta / theta_w) ** 2)
    raise DomainError(f"unknown beam model {beam!r}")


def _beam_norm(beam: str, na: float, n: int = 4096) -> float:
    """Hemisphere integral of the unnormalized intensity (for power scaling)."""
    theta = np.linspace(0.0, math.pi / 2.0, n)
    return float(np.trapezoid(_beam_intensity(beam, theta, na) * 2.0 * math.pi * np.sin(theta), theta))


def beam_angular_spread(beam: str, na: float) -> float:
    """RMS angle (radians) of the emitted intensity about the bundle axis."""
    theta = np.linspace(0.0, math.pi / 2.0, 4096)
    w = _beam_intensity(beam, theta, na) * np.sin(theta)
    return float(math.sqrt(np.trapezoid(theta**2 * w, theta) / np.trapezoid(w, theta)))


@dataclass
class IrradianceMap:
    """Per-bundle flux on the dome surface grid.

    ``flux`` is the beam-normal flux density (W/m^2) of each bundle at each
    cell; ``directions`` the unit propagation vectors from bundle to cell.
    The 3-channel map contract is the projection onto the undeformed
    membrane, summed per color channel.
    """

    grid: SurfaceGrid
    layout: IlluminationLayout
    bundle: FiberBundleSpec
    beam: str
    flux: np.ndarray  # (n_b, n_alpha, n_phi)
    directions: np.ndarray  # (n_b, n_alpha, n_phi, 3)
    exit_power_w: float  # per bundle, after coupling and attenuation
    axial_intensity: float = 0.0  # I0 of the beam profile, W/sr

    def point_flux(self, points: np.ndarray, bundle_index: int):
        """Beam-normal flux density and propagation unit vectors at 3D points.

        Used to re-evaluate the lighting on a displaced membrane; on the
        undeformed surface this reproduces the stored map exactly.
        """
        source = self.layout.positions()[bundle_index]
        d = points - source
        dist = np.linalg.norm(d, axis=-1)
        unit = d / dist[..., None]
        theta = np.arccos(np.clip(unit[..., -1], -1.0, 1.0))
        flux = (
            self.axial_intensity
            * _beam_intensity(self.beam, theta, self.bundle.numerical_aperture)
            / dist**2
        )
        return flux, unit

    def channel_irradiance(self) -> np.ndarray:
        """(n_alpha, n_phi, 3) irradiance on the undeformed surface."""
        out = np.zeros((*self.grid.shape, 3))
        for b in range(self.layout.n_b):
            proj = np.clip(
                np.einsum("ijk,ijk->ij", self.directions[b], self.grid.normals), 0.0, None
            )
            color = np.asarray(self.layout.channel_colors[b])
            out += (self.flux[b] * proj)[..., None] * color
        return out

    def received_power_w(self) -> float:
        """Quadrature of the total received power over the dome."""
        total = 0.0
        for b in range(self.layout.n_b):
            proj = np.clip(
                np.einsum("ijk,ijk->ij", self.directions[b], self.grid.normals), 0.0, None
            )
            total += self.grid.integrate(self.flux[b] * proj)
        return total

    def save(self, path_prefix: str) -> None:
        """Write the 3-channel grid (binary .npy) plus a JSON header."""
        np.save(path_prefix + ".npy", self.channel_irradiance().astype(np.float32))
        header = {
            "grid": {"n_alpha": self.grid.n_alpha, "n_phi": self.grid.n_phi,
                     "alpha_max_rad": self.grid.alpha_max},
            "gel_radius_m": self.grid.dome.radius_m,
            "layout": {"n_b": self.layout.n_b, "r_f_m": self.layout.r_f_m,
                       "r_b_m": self.layout.r_b_m, "alpha_b_deg": self.layout.alpha_b_deg,
                       "channel_colors": [list(c) for c in self.layout.channel_colors]},
            "beam": self.beam,
            "exit_power_w": self.exit_power_w,
        }
        with open(path_prefix + ".json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)


def irradiance_map(layout: IlluminationLayout, bundle: FiberBundleSpec, grid: SurfaceGrid,
                   beam: str = "gaussian_cone", emitted_power_w: float = 1.0) -> IrradianceMap:
    """Build the irradiance map the illumination ring casts on the dome.

    The per-bundle exit power is emitted power times the angular coupling
    fraction times the fiber transmission; occlusion is ignored.
    """
    radius = grid.dome.radius_m
    if layout.r_b_m + layout.r_f_m > radius + 1e-12:
        raise DomainError("illumination layout does not fit on the gel base")
    coupled, _ = coupling_fraction(bundle.numerical_aperture)
    exit_power = (
        emitted_power_w
        * coupled
        * attenuation_transmission(bundle.length_m, bundle.attenuation_db_per_m)
    )
    i0 = exit_power / _beam_norm(beam, bundle.numerical_aperture)

    positions = layout.positions()
    n_b = layout.n_b
    flux = np.empty((n_b, *grid.shape))
    directions = np.empty((n_b, *grid.shape, 3))
    for b in range(n_b):
        d = grid.positions - positions[b]
        dist = np.linalg.norm(d, axis=-1)
        unit = d / dist[..., None]
        theta = np.arccos(np.clip(unit[..., 2], -1.0, 1.0))
        flux[b] = i0 * _beam_intensity(beam, theta, bundle.numerical_aperture) / dist**2
        directions[b] = unit
    return IrradianceMap(
        grid=grid, layout=layout, bundle=bundle, beam=beam,
        flux=flux, directions=directions, exit_power_w=exit_power,
        axial_intensity=i0,
    )
