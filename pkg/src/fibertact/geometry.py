"""Gel dome geometry and the polar surface grid shared by optics and rendering.

The sensing element is a hemispherical dome; the dome sphere center sits at
the origin with the apex on +z and the base plane at z = 0. Illumination
bundles and the imaging lens nodal point live on the base plane. Local
contact coordinates are azimuthal-equidistant millimeters around the apex:
a point (x, y) maps to polar angle alpha = |xy| / R along the meridian
at azimuth atan2(y, x).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GelDome:
    """Hemispherical sensing dome of radius ``radius_m``."""

    radius_m: float = 7.5e-3

    def surface_point(self, alpha, phi):
        """Cartesian point(s) on the dome at polar angle alpha, azimuth phi."""
        sa = np.sin(alpha)
        return self.radius_m * np.stack(
            [sa * np.cos(phi), sa * np.sin(phi), np.cos(alpha) * np.ones_like(phi)], axis=-1
        )

    def local_to_angles(self, xy_m):
        """Map local tangent coordinates (meters) to (alpha, phi)."""
        xy_m = np.asarray(xy_m, dtype=float)
        r = np.hypot(xy_m[..., 0], xy_m[..., 1])
        alpha = r / self.radius_m
        phi = np.arctan2(xy_m[..., 1], xy_m[..., 0])
        return alpha, phi

    def cap_area(self, alpha_max: float) -> float:
        """Spherical-cap area up to polar angle ``alpha_max`` (radians)."""
        return 2.0 * np.pi * self.radius_m**2 * (1.0 - np.cos(alpha_max))


@dataclass
class SurfaceGrid:
    """Cell-centered (alpha, phi) grid over the dome.

    Rows are polar angle (0 .. alpha_max), columns azimuth (0 .. 2 pi).
    Cell centers avoid the exact pole so per-cell quantities stay finite.
    """

    dome: GelDome
    n_alpha: int = 240
    n_phi: int = 480
    alpha_max: float = np.pi / 2

    alphas: np.ndarray = field(init=False, repr=False)
    phis: np.ndarray = field(init=False, repr=False)
    positions: np.ndarray = field(init=False, repr=False)  # (n_alpha, n_phi, 3)
    normals: np.ndarray = field(init=False, repr=False)
    cell_area: np.ndarray = field(init=False, repr=False)  # (n_alpha, n_phi)

    def __post_init__(self):
        d_alpha = self.alpha_max / self.n_alpha
        d_phi = 2.0 * np.pi / self.n_phi
        self.alphas = (np.arange(self.n_alpha) + 0.5) * d_alpha
        self.phis = np.arange(self.n_phi) * d_phi
        aa, pp = np.meshgrid(self.alphas, self.phis, indexing="ij")
        self.normals = np.stack(
            [np.sin(aa) * np.cos(pp), np.sin(aa) * np.sin(pp), np.cos(aa)], axis=-1
        )
        self.positions = self.dome.radius_m * self.normals
        self.cell_area = (self.dome.radius_m**2 * np.sin(aa) * d_alpha * d_phi)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_alpha, self.n_phi)

    def geodesic_distance(self, center_xy_m) -> np.ndarray:
        """Geodesic distance (m) from every grid cell to a local-xy point."""
        alpha_c, phi_c = self.dome.local_to_angles(np.asarray(center_xy_m, dtype=float))
        nc = np.array(
            [np.sin(alpha_c) * np.cos(phi_c), np.sin(alpha_c) * np.sin(phi_c), np.cos(alpha_c)]
        )
        cosd = np.clip(self.normals @ nc, -1.0, 1.0)
        return self.dome.radius_m * np.arccos(cosd)

    def away_direction(self, center_xy_m) -> np.ndarray:
        """Unit surface tangents pointing away from a local-xy point.

        Zero vector at the point itself (distance 0) to avoid 0/0.
        """
        alpha_c, phi_c = self.dome.local_to_angles(np.asarray(center_xy_m, dtype=float))
        nc = np.array(
            [np.sin(alpha_c) * np.cos(phi_c), np.sin(alpha_c) * np.sin(phi_c), np.cos(alpha_c)]
        )
        cosd = np.clip(self.normals @ nc, -1.0, 1.0)
        tangent = self.normals * cosd[..., None] - nc  # points away from center
        norm = np.linalg.norm(tangent, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(norm > 1e-15, tangent / norm, 0.0)
        return unit

    def interpolator_weights(self, alpha, phi):
        """Bilinear interpolation indices/weights for points on the grid.

        Azimuth wraps; polar angle is clamped to the grid interior. Returns
        (rows0, rows1, cols0, cols1, wa, wp) so that a field F is sampled as
        (1-wa)(1-wp) F[r0,c0] + ... + wa wp F[r1,c1].
        """
        d_alpha = self.alpha_max / self.n_alpha
        d_phi = 2.0 * np.pi / self.n_phi
        fa = np.clip(alpha / d_alpha - 0.5, 0.0, self.n_alpha - 1.0 - 1e-9)
        r0 = np.floor(fa).astype(np.intp)
        wa = fa - r0
        r1 = np.minimum(r0 + 1, self.n_alpha - 1)
        fp = (np.mod(phi, 2.0 * np.pi)) / d_phi
        c0 = np.floor(fp).astype(np.intp) % self.n_phi
        wp = fp - np.floor(fp)
        c1 = (c0 + 1) % self.n_phi
        return r0, r1, c0, c1, wa, wp

    def sample(self, f: np.ndarray, alpha, phi) -> np.ndarray:
        """Bilinearly sample field ``f`` (shape grid or grid+channels)."""
        r0, r1, c0, c1, wa, wp = self.interpolator_weights(alpha, phi)
        if f.ndim == 3:
            wa = wa[..., None]
            wp = wp[..., None]
        return (
            f[r0, c0] * (1 - wa) * (1 - wp)
            + f[r1, c0] * wa * (1 - wp)
            + f[r0, c1] * (1 - wa) * wp
            + f[r1, c1] * wa * wp
        )

    def integrate(self, f: np.ndarray) -> float:
        """Surface integral of a scalar field over the grid."""
        return float(np.sum(f * self.cell_area))
