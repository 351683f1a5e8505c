"""Scene assembly: one place that wires gel, lights, bundle, lens, and detector.

A Scene precomputes everything static (irradiance map, sampling pipeline,
baseline shading, exposure gain) so that per-frame rendering reduces to a
local re-shade plus two sparse gathers.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from fibertact import contact as contact_mod
from fibertact import render as render_mod
from fibertact.contact import ContactState, Indenter, effective_radius, hertz_radius, mindlin_tangential
from fibertact.errors import DomainError
from fibertact.fiberimaging import BundleSampler, DetectorSpec, LensModel, build_hex_grid
from fibertact.geometry import GelDome, SurfaceGrid
from fibertact.materials import Material, default_catalog, lookup_or_convert
from fibertact.photonics import FiberBundleSpec, IlluminationLayout, irradiance_map
from fibertact.render import DetectionParams, FrameRGB, GelSurface
from fibertact.seeding import derive_rng

PROBE_SPECS = {
    "4mm": ("sphere", 2e-3),
    "12mm": ("sphere", 6e-3),
    "flat": ("flat", None),
}


@dataclass
class SceneParams:
    """JSON-friendly scene description with desk-scale defaults."""

    gel_radius_mm: float = 7.5
    gel_material: str = "gel-sectionIV"
    grid_n_alpha: int = 240
    grid_n_phi: int = 480

    illum_beam: str = "gaussian_cone"
    illum_na: float = 0.866
    illum_power_w: float = 1.0
    illum_n_b: int = 6
    illum_r_f_mm: float = 1.5
    illum_r_b_mm: float = 5.75
    illum_length_m: float = 0.4
    illum_attenuation_db_per_m: float = 0.65

    imaging_n_cores: int = 7400
    imaging_bundle_diameter_mm: float = 2.0
    lens_fov_deg: float = 120.0
    lens_edge_rolloff: float = 0.0
    core_fill_factor: float = 0.8

    detector_width_px: int = 640
    detector_height_px: int = 480
    exposure_target: float = 0.85  # auto-gain target at the bright percentile

    noise_sigma: float = 2.0  # detector noise std, 8-bit counts
    ambient_frac: float = 0.05
    diffuse_frac: float = 0.85  # diffusely scattered share of the reflectance
    pressure_reflectance_gain: float = 0.35
    friction_mu: float = 1.2

    detect_blur_sigma_px: float = 2.2
    detect_rel_threshold: float = 0.5
    detect_radius_scale: float = 1.2363

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown scene parameters: {sorted(unknown)}")
        return cls(**d)


class Scene:
    """Fully assembled sensor scene with cached static pipeline stages."""

    def __init__(self, params: SceneParams):
        self.params = params
        self.dome = GelDome(radius_m=params.gel_radius_mm * 1e-3)
        self.grid = SurfaceGrid(self.dome, params.grid_n_alpha, params.grid_n_phi)
        self.gel_material: Material = lookup_or_convert(params.gel_material)

        colors = tuple(
            ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))[i % 3]
            for i in range(params.illum_n_b)
        )
        self.layout = IlluminationLayout(
            n_b=params.illum_n_b,
            r_f_m=params.illum_r_f_mm * 1e-3,
            r_b_m=params.illum_r_b_mm * 1e-3,
            alpha_b_deg=360.0 / params.illum_n_b,
            channel_colors=colors,
        )
        self.illum_bundle = FiberBundleSpec(
            n_cores=48,
            core_diameter_m=0.25e-3,
            numerical_aperture=params.illum_na,
            length_m=params.illum_length_m,
            attenuation_db_per_m=params.illum_attenuation_db_per_m,
            bundle_diameter_m=2.0 * params.illum_r_f_mm * 1e-3,
        )
        self.light = irradiance_map(
            self.layout, self.illum_bundle, self.grid,
            beam=params.illum_beam, emitted_power_w=params.illum_power_w,
        )

        self.hexgrid = build_hex_grid(
            params.imaging_n_cores, params.imaging_bundle_diameter_mm * 1e-3
        )
        self.lens = LensModel(fov_full_angle_deg=params.lens_fov_deg)
        self.detector = DetectorSpec(params.detector_width_px, params.detector_height_px)
        self.sampler = BundleSampler(
            self.grid, self.hexgrid, self.lens, self.detector,
            bundle_diameter_m=params.imaging_bundle_diameter_mm * 1e-3,
            fill_factor=params.core_fill_factor,
            edge_rolloff=params.lens_edge_rolloff,
        )

        # Static baseline shading and exposure calibration.
        channel = self.light.channel_irradiance()
        self.ambient_rgb = params.ambient_frac * channel.reshape(-1, 3).max(axis=0)
        undeformed = GelSurface.undeformed(self.grid)
        self.baseline_field = render_mod.shade(
            undeformed, self.light, self.ambient_rgb,
            diffuse_frac=params.diffuse_frac,
            pressure_gain=params.pressure_reflectance_gain,
        )
        det = self.sampler.render(self.baseline_field)
        bright = np.percentile(det[self.sampler.coverage_mask], 99.5)
        self.exposure_gain = params.exposure_target / max(float(bright), 1e-30)
        self.baseline_detector_float = det
        self._baseline_sum_cache: float | None = None

        self.detection = DetectionParams(
            blur_sigma_px=params.detect_blur_sigma_px,
            rel_threshold=params.detect_rel_threshold,
            radius_scale=params.detect_radius_scale,
        )
        self.fast_detection = DetectionParams(
            blur_sigma_px=params.detect_blur_sigma_px,
            rel_threshold=params.detect_rel_threshold,
            radius_scale=params.detect_radius_scale,
            downsample=2,
        )

    # ---------------------------------------------------------------- scale
    @property
    def px_per_mm(self) -> float:
        """Detector pixels per millimeter of gel surface at the tip."""
        return self.sampler.px_per_object_m / 1000.0

    @property
    def imaged_cap_alpha(self) -> float:
        return self.lens.half_angle_rad

    # ------------------------------------------------------------- contacts
    def probe(self, name: str, material: str | Material = "rigid") -> Indenter:
        try:
            kind, radius = PROBE_SPECS[name]
        except KeyError:
            raise DomainError(f"unknown probe {name!r}; choose from {sorted(PROBE_SPECS)}")
        return Indenter(kind=kind, material=lookup_or_convert(material), radius_m=radius)

    def contact_eprime(self, indenter: Indenter) -> float:
        from fibertact.materials import effective_modulus

        return effective_modulus(self.gel_material, indenter.material)

    def contact_re(self, indenter: Indenter) -> float:
        return effective_radius(self.dome.radius_m, indenter.curvature_radius)

    def resolve_contact(self, force_n: float, indenter: Indenter,
                        center_mm=(0.0, 0.0), shear_n=(0.0, 0.0)) -> ContactState:
        """Quasi-static contact state for a probe press at a tip location."""
        re = self.contact_re(indenter)
        eprime = self.contact_eprime(indenter)
        a = hertz_radius(force_n, re, eprime)
        depth = a**2 / re if a > 0 else 0.0
        shear_mag = math.hypot(*shear_n)
        disp = (0.0, 0.0)
        slipping = False
        if shear_mag > 0 and a > 0:
            d, slipping = mindlin_tangential(
                shear_mag, force_n, a, self.gel_material, indenter.material,
                mu=self.params.friction_mu,
            )
            disp = (d * shear_n[0] / shear_mag, d * shear_n[1] / shear_mag)
        return ContactState(
            normal_force=force_n,
            shear_force=tuple(shear_n),
            patch_radius=a,
            indent_depth=depth,
            tangential_disp=disp,
            center=(center_mm[0] * 1e-3, center_mm[1] * 1e-3),
            slipping=slipping,
        )

    # ------------------------------------------------------------ rendering
    def render_frame(self, contact: ContactState | None, indenter: Indenter | None,
                     seed: int, frame_index: int, timestamp_s: float = 0.0,
                     noise_sigma: float | None = None, meta: dict | None = None,
                     keep_float: bool | None = None) -> FrameRGB:
        """Deterministic frame render; rng derived from (seed, frame index).

        ``keep_float`` attaches the pre-quantization image for quantization-
        free feature extraction; defaults to on for noiseless renders.
        """
        sigma = self.params.noise_sigma if noise_sigma is None else noise_sigma
        if keep_float is None:
            keep_float = sigma == 0.0
        if contact is None or contact.patch_radius <= 0.0:
            det = self.baseline_detector_float
        else:
            surface = render_mod.deform(self.grid, contact, indenter, self.gel_material)
            if surface.row_span is None:
                det = self.baseline_detector_float
            else:
                field = render_mod.shade(surface, self.light, self.ambient_rgb,
                                         baseline_field=self.baseline_field,
                                         diffuse_frac=self.params.diffuse_frac,
                                         pressure_gain=self.params.pressure_reflectance_gain)
                det = self.sampler.render_update(field, surface.row_span,
                                                 self.baseline_detector_float)
        rng = derive_rng(seed, "frame", frame_index) if sigma > 0 else None
        if keep_float:
            pixels, float_img = render_mod.quantize_frame(
                det, self.exposure_gain, sigma, rng, keep_float=True)
        else:
            pixels = render_mod.quantize_frame(det, self.exposure_gain, sigma, rng)
            float_img = None
        return FrameRGB(pixels=pixels, timestamp_s=timestamp_s, meta=meta or {},
                        float_pixels=float_img)

    def baseline_frame(self, seed: int, noise_sigma: float | None = None,
                       keep_float: bool | None = None) -> FrameRGB:
        """No-contact reference frame (manifest index -1)."""
        return self.render_frame(None, None, seed, -1, 0.0, noise_sigma,
                                 meta={"baseline": True}, keep_float=keep_float)

    def baseline_pixel_sum(self, baseline: FrameRGB) -> float:
        return float(baseline.pixels.astype(np.float64).sum())


def build_scene(params: SceneParams | dict | None = None) -> Scene:
    if params is None:
        params = SceneParams()
    elif isinstance(params, dict):
        params = SceneParams.from_dict(params)
    return Scene(params)
