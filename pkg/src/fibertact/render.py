"""Tactile frame synthesis and image-side analysis.

Deformation fields are analytic (sphere-contact surface profiles with a
smooth far-field taper), shading is Lambertian against the per-bundle
irradiance, and the image side provides contact-patch detection on
difference images plus delta-frame utilities.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage import measure

from fibertact.contact import ContactState, Indenter, compliance_share, hertz_surface_shape
from fibertact.errors import DomainError
from fibertact.geometry import SurfaceGrid
from fibertact.materials import Material
from fibertact.photonics import IrradianceMap

# Far-field taper: the exterior displacement is faded out between these
# multiples of the patch radius so frames are strictly static beyond 3a.
TAPER_START = 2.0
TAPER_END = 3.0


@dataclass
class GelSurface:
    """Deformation heightfield over the dome (depth into the gel, meters)."""

    grid: SurfaceGrid
    depth: np.ndarray  # (n_alpha, n_phi)
    gradient: np.ndarray  # (n_alpha, n_phi, 3) surface gradient of depth
    row_span: tuple[int, int] | None = None  # rows touched by the deformation
    pressure_norm: np.ndarray | None = None  # p(r)/p0 inside the patch

    @classmethod
    def undeformed(cls, grid: SurfaceGrid) -> "GelSurface":
        return cls(grid, np.zeros(grid.shape), np.zeros((*grid.shape, 3)), None)


@dataclass
class FrameRGB:
    pixels: np.ndarray  # (H, W, 3) uint8
    timestamp_s: float = 0.0
    meta: dict = field(default_factory=dict)
    float_pixels: np.ndarray | None = None  # pre-quantization image, 0..255 scale


@dataclass
class DeltaFrame:
    data: np.ndarray  # (H, W, 3) int16, signed frame difference
    index_pair: tuple[int, int]


def _shape_derivative(rho: np.ndarray) -> np.ndarray:
    """d/d(rho) of :func:`hertz_surface_shape` (continuous at the edge)."""
    out = np.empty_like(rho)
    inside = rho <= 1.0
    out[inside] = -rho[inside]
    ro = rho[~inside]
    with np.errstate(invalid="ignore"):
        out[~inside] = (-2.0 * ro * np.arcsin(1.0 / ro) + 2.0 * np.sqrt(ro**2 - 1.0) / ro) / math.pi
    return out


def _taper(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine fade-out window on [TAPER_START, TAPER_END] and its derivative."""
    w = np.ones_like(rho)
    dw = np.zeros_like(rho)
    ramp = (rho > TAPER_START) & (rho < TAPER_END)
    t = (rho[ramp] - TAPER_START) / (TAPER_END - TAPER_START)
    w[ramp] = 0.5 * (1.0 + np.cos(math.pi * t))
    dw[ramp] = -0.5 * math.pi * np.sin(math.pi * t) / (TAPER_END - TAPER_START)
    w[rho >= TAPER_END] = 0.0
    return w, dw


def deform(grid: SurfaceGrid, contact: ContactState, indenter: Indenter,
           gel_material: Material) -> GelSurface:
    """Deformed gel surface for a resolved contact.

    Inside the patch the surface conforms to the indenter at the gel's
    compliance share of the approach; outside, the half-space surface
    displacement decays and is tapered to exactly zero beyond 3a. The
    conformed region is shifted laterally by the tangential displacement.
    """
    a = contact.patch_radius
    if a <= 0.0:
        return GelSurface.undeformed(grid)
    center = (
        contact.center[0] + contact.tangential_disp[0],
        contact.center[1] + contact.tangential_disp[1],
    )
    alpha_c = math.hypot(*center) / grid.dome.radius_m
    if alpha_c > grid.alpha_max:
        raise DomainError("contact center lies outside the modeled cap")

    w_gel = compliance_share(gel_material, indenter.material)
    amplitude = w_gel * contact.indent_depth

    radius = grid.dome.radius_m
    phi_c = math.atan2(center[1], center[0])
    nc = np.array(
        [math.sin(alpha_c) * math.cos(phi_c), math.sin(alpha_c) * math.sin(phi_c),
         math.cos(alpha_c)]
    )
    # Row band first (cheap cosine compare), then the full math on the band.
    cos_cut = math.cos(min(TAPER_END * a / radius, math.pi))
    cosd_full = grid.normals @ nc
    rows = np.flatnonzero((cosd_full >= cos_cut).any(axis=1))
    depth = np.zeros(grid.shape)
    gradient = np.zeros((*grid.shape, 3))
    if len(rows) == 0:
        return GelSurface(grid, depth, gradient, None)
    r0, r1 = int(rows[0]), int(rows[-1] + 1)

    cosd = np.clip(cosd_full[r0:r1], -1.0, 1.0)
    rho_s = radius * np.arccos(cosd) / a
    shape = hertz_surface_shape(rho_s)
    window, d_window = _taper(rho_s)
    depth[r0:r1] = amplitude * shape * window
    slope = amplitude * (_shape_derivative(rho_s) * window + shape * d_window) / a
    tangent = grid.normals[r0:r1] * cosd[..., None] - nc
    norm = np.linalg.norm(tangent, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        away = np.where(norm > 1e-15, tangent / norm, 0.0)
    gradient[r0:r1] = slope[..., None] * away
    pressure = np.zeros(grid.shape)
    pressure[r0:r1] = np.sqrt(np.clip(1.0 - rho_s**2, 0.0, None))
    return GelSurface(grid, depth, gradient, (r0, r1), pressure)


# Fraction of the membrane reflectance that scatters diffusely (multiple
# bounces inside the dome); the remainder responds to the surface tilt.
DIFFUSE_FRACTION = 0.6
# Reflectance gain of the coating under contact pressure, at the pressure
# peak. The squeezed coating scatters more strongly where it is pressed.
PRESSURE_REFLECTANCE_GAIN = 0.35


def shade(surface: GelSurface, light: IrradianceMap, ambient_rgb=None,
          baseline_field: np.ndarray | None = None,
          diffuse_frac: float = DIFFUSE_FRACTION,
          pressure_gain: float = PRESSURE_REFLECTANCE_GAIN) -> np.ndarray:
    """Object-space RGB field of the (possibly deformed) membrane.

    Per channel: bundle flux evaluated at the displaced membrane position
    (proximity brightening), split into a diffuse part and a directional
    Lambertian part against the deformed normal, all scaled by the
    pressure-coupled coating reflectance, plus a constant ambient floor.
    When a precomputed baseline field is supplied only the deformed rows
    are recomputed.
    """
    grid = surface.grid
    if ambient_rgb is None:
        ambient_rgb = np.zeros(3)
    if baseline_field is not None and surface.row_span is not None:
        out = baseline_field.copy()
        r0, r1 = surface.row_span
        out[r0:r1] = _shade_rows(surface, light, ambient_rgb, r0, r1,
                                 diffuse_frac, pressure_gain)
        return out
    if baseline_field is not None and surface.row_span is None:
        return baseline_field.copy()
    return _shade_rows(surface, light, ambient_rgb, 0, grid.n_alpha,
                       diffuse_frac, pressure_gain)


def _shade_rows(surface: GelSurface, light: IrradianceMap, ambient_rgb,
                r0: int, r1: int, diffuse_frac: float, pressure_gain: float) -> np.ndarray:
    grid = surface.grid
    n_raw = grid.normals[r0:r1] + surface.gradient[r0:r1]
    n_hat = n_raw / np.linalg.norm(n_raw, axis=-1, keepdims=True)
    view = np.clip(np.einsum("ijk,ijk->ij", n_hat, grid.normals[r0:r1]), 0.0, None)
    out = np.zeros((r1 - r0, grid.n_phi, 3))
    depth = surface.depth[r0:r1]
    deformed = depth.max() > 0.0
    if deformed:
        # Displaced membrane: flux re-evaluated at the indented positions
        # (proximity brightening and beam-profile migration).
        points = (grid.dome.radius_m - depth)[..., None] * grid.normals[r0:r1]
    for b in range(light.layout.n_b):
        if deformed:
            flux, direction = light.point_flux(points, b)
        else:
            flux, direction = light.flux[b, r0:r1], light.directions[b, r0:r1]
        lam = np.clip(np.einsum("ijk,ijk->ij", direction, n_hat), 0.0, None)
        contrib = flux * (diffuse_frac + (1.0 - diffuse_frac) * lam * view)
        out += contrib[..., None] * np.asarray(light.layout.channel_colors[b])
    if deformed and surface.pressure_norm is not None and pressure_gain != 0.0:
        out *= (1.0 + pressure_gain * surface.pressure_norm[r0:r1])[..., None]
    return out + np.asarray(ambient_rgb)


def quantize_frame(detector_float: np.ndarray, exposure_scale: float,
                   noise_sigma: float = 0.0,
                   rng: np.random.Generator | None = None,
                   keep_float: bool = False):
    """Exposure gain, additive detector noise, and 8-bit quantization.

    ``noise_sigma`` is in 8-bit counts. With ``keep_float`` the clipped
    pre-quantization image (0..255 scale) is returned alongside.
    """
    img = detector_float.astype(np.float32) * np.float32(exposure_scale * 255.0)
    if noise_sigma > 0.0:
        if rng is None:
            raise DomainError("noise requires an rng")
        noise = rng.standard_normal(img.shape, dtype=np.float32)
        noise *= np.float32(noise_sigma)
        img += noise
    np.clip(img, 0.0, 255.0, out=img)
    float_img = img.copy() if keep_float else None
    np.rint(img, out=img)
    pixels = img.astype(np.uint8)
    if keep_float:
        return pixels, float_img
    return pixels


def delta_frames(frames: list[FrameRGB]) -> list[DeltaFrame]:
    """Signed consecutive differences; telescopes exactly to last - first."""
    if len(frames) < 2:
        raise DomainError("need at least two frames for delta frames")
    out = []
    for i in range(len(frames) - 1):
        a = frames[i].pixels.astype(np.int16)
        b = frames[i + 1].pixels.astype(np.int16)
        out.append(DeltaFrame(data=b - a, index_pair=(i, i + 1)))
    return out


@dataclass(frozen=True)
class DetectionParams:
    """Contact-patch detector tuning.

    The detector thresholds the honeycomb-filtered difference image at a
    fraction of its peak. The contact signal is dominated by the
    pressure-coupled reflectance term, whose profile crosses half of its
    peak close to the contact edge, so ``rel_threshold`` = 0.5 plus the
    fixed ``radius_scale`` correction (calibrated once against the
    closed-form contact model) recovers the patch radius. A second pass
    with a radius-proportional filter width keeps the blur bias constant
    across patch sizes.
    """

    blur_sigma_px: float = 2.2
    rel_threshold: float = 0.5
    radius_scale: float = 1.0
    noise_floor_scale: float = 6.0  # absolute floor = scale * noise sigma
    downsample: int = 1
    adaptive: bool = True
    sigma_radius_frac: float = 1.0 / 12.0
    sigma_bounds_px: tuple[float, float] = (1.5, 3.5)


@dataclass
class PatchDetection:
    center_px: tuple[float, float]  # (x, y) detector coordinates
    radius_px: float
    peak_diff: float
    n_contour_points: int


def fit_circle(xs: np.ndarray, ys: np.ndarray,
               weights: np.ndarray | None = None) -> tuple[float, float, float]:
    """Algebraic least-squares circle fit (Kasa form)."""
    w = np.ones_like(xs) if weights is None else weights
    a_mat = np.stack([2.0 * xs, 2.0 * ys, np.ones_like(xs)], axis=-1)
    b_vec = xs**2 + ys**2
    sw = np.sqrt(w)
    sol, *_ = np.linalg.lstsq(a_mat * sw[:, None], b_vec * sw, rcond=None)
    cx, cy, c = sol
    r = math.sqrt(max(c + cx**2 + cy**2, 0.0))
    return float(cx), float(cy), float(r)


def fit_circle_refined(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    """Kasa fit with one robust reweighting pass."""
    cx, cy, r = fit_circle(xs, ys)
    res = np.abs(np.hypot(xs - cx, ys - cy) - r)
    scale = max(float(np.median(res)) * 1.4826, 1e-9)
    weights = 1.0 / (1.0 + (res / (3.0 * scale)) ** 2)
    return fit_circle(xs, ys, weights)


def signed_difference(frame: FrameRGB, baseline: FrameRGB) -> np.ndarray:
    """Signed frame difference; float path used when both frames carry it."""
    if frame.pixels.shape != baseline.pixels.shape:
        raise DomainError("frame and baseline dimensions differ")
    if frame.float_pixels is not None and baseline.float_pixels is not None:
        return frame.float_pixels - baseline.float_pixels
    return frame.pixels.astype(np.int16) - baseline.pixels.astype(np.int16)


def abs_difference(frame: FrameRGB, baseline: FrameRGB) -> np.ndarray:
    """Channel-summed absolute difference, float."""
    return np.abs(signed_difference(frame, baseline)).sum(axis=2).astype(np.float64)


def coverage_mask_from(baseline: FrameRGB) -> np.ndarray:
    """Core-coverage mask (1 on lit core disks, 0 in honeycomb gaps)."""
    return (baseline.pixels.astype(np.int16).sum(axis=2) > 3).astype(np.float32)


def _downsample(img: np.ndarray, step: int) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % step, : w - w % step]
    return img.reshape(h // step, step, w // step, step).mean(axis=(1, 3))


def _blur_diff(diff: np.ndarray, params: DetectionParams,
               mask: np.ndarray | None = None,
               sigma_px: float | None = None) -> tuple[np.ndarray, int]:
    """Honeycomb-removing low-pass: mask-normalized Gaussian filtering."""
    step = max(int(params.downsample), 1)
    sigma = (params.blur_sigma_px if sigma_px is None else sigma_px) / step
    diff = diff.astype(np.float32)
    if mask is None:
        if step > 1:
            diff = _downsample(diff, step)
        return ndimage.gaussian_filter(diff, sigma), step
    if step > 1:
        weighted = _downsample(diff * mask, step)
        weights = _downsample(mask, step)
    else:
        weighted = diff * mask
        weights = mask
    wd = ndimage.gaussian_filter(weighted, sigma)
    wm = ndimage.gaussian_filter(weights, sigma)
    out = np.where(wm > 0.05, wd / np.maximum(wm, np.float32(1e-6)), np.float32(0.0))
    return out, step


def _detect_on_diff(diff: np.ndarray, params: DetectionParams,
                    mask: np.ndarray | None, threshold: float | None,
                    noise_sigma: float, blurred: np.ndarray | None = None,
                    step: int = 1):
    """Shared detection core; returns (cx, cy, radius, peak, n_points, step)."""
    if blurred is None:
        blurred, step = _blur_diff(diff, params, mask)
    peak = float(blurred.max())
    if threshold is None:
        floor = params.noise_floor_scale * noise_sigma * math.sqrt(2.0)
        thr = max(params.rel_threshold * peak, floor)
    else:
        thr = threshold
    if peak <= thr or thr <= 0.0:
        return None
    best = _largest_contour(blurred, thr)
    if best is None or len(best) < 6:
        return None
    cx, cy, r = fit_circle_refined(best[:, 1], best[:, 0])
    if params.adaptive and step == 1:
        # Re-filter at a width proportional to the found radius so the blur
        # bias stays a fixed fraction of the patch size.
        lo, hi = params.sigma_bounds_px
        sigma2 = float(np.clip(r * params.sigma_radius_frac, lo, hi))
        blurred2, _ = _blur_diff(diff, params, mask, sigma_px=sigma2)
        peak2 = float(blurred2.max())
        thr2 = thr if threshold is not None else max(params.rel_threshold * peak2,
                                                     params.noise_floor_scale
                                                     * noise_sigma * math.sqrt(2.0))
        if peak2 > thr2 > 0.0:
            best2 = _largest_contour(blurred2, thr2)
            if best2 is not None and len(best2) >= 6:
                cx, cy, r = fit_circle_refined(best2[:, 1], best2[:, 0])
                best = best2
    return cx, cy, r, peak, len(best), step


def detect_contact_patch(frame: FrameRGB, baseline: FrameRGB,
                         threshold: float | None = None,
                         params: DetectionParams = DetectionParams(),
                         noise_sigma: float = 0.0) -> PatchDetection | None:
    """Locate the contact patch in a frame against the no-contact baseline.

    Pipeline: channel-summed absolute difference, honeycomb-removing blur,
    threshold, largest closed contour, least-squares circle fit. Returns
    None when nothing exceeds the threshold.
    """
    diff = abs_difference(frame, baseline)
    mask = coverage_mask_from(baseline)
    hit = _detect_on_diff(diff, params, mask, threshold, noise_sigma)
    if hit is None:
        return None
    cx, cy, r, peak, n_pts, step = hit
    return PatchDetection(
        center_px=((cx + 0.5) * step - 0.5, (cy + 0.5) * step - 0.5),
        radius_px=r * step * params.radius_scale,
        peak_diff=peak,
        n_contour_points=n_pts,
    )


@dataclass
class FrameFeatures:
    """Per-frame image features used by regression and classification."""

    detected: bool
    radius_px: float
    center_px: tuple[float, float]
    intensity_ratio: float  # sum |diff| / sum baseline, gain invariant
    intensity_rgb: tuple[float, float, float]  # per-channel ratios
    centroid_px: tuple[float, float]  # intensity-weighted, soft-thresholded

    def as_array(self, px_per_mm: float) -> np.ndarray:
        r_mm = self.radius_px / px_per_mm
        return np.array(
            [
                1.0 if self.detected else 0.0,
                r_mm,
                r_mm**2,
                self.intensity_ratio,
                self.intensity_rgb[0],
                self.intensity_rgb[1],
                self.intensity_rgb[2],
                self.centroid_px[0] / px_per_mm,
                self.centroid_px[1] / px_per_mm,
                self.center_px[0] / px_per_mm,
                self.center_px[1] / px_per_mm,
            ]
        )


FRAME_FEATURE_DIM = 11


def _largest_contour(blurred: np.ndarray, threshold: float):
    contours = measure.find_contours(blurred, threshold)
    best, best_area = None, 0.0
    for contour in contours:
        ys, xs = contour[:, 0], contour[:, 1]
        area = abs(float(np.trapezoid(xs, ys)))
        if area > best_area:
            best, best_area = contour, area
    return best


def diff_features(diff_int: np.ndarray, baseline_sum: float,
                  params: DetectionParams = DetectionParams(),
                  noise_sigma: float = 0.0,
                  mask: np.ndarray | None = None) -> FrameFeatures:
    """Features of a signed difference image (frame-baseline or delta)."""
    abs_d = np.abs(diff_int).astype(np.float32)
    rgb_sums = abs_d.sum(axis=(0, 1))
    diff = abs_d.sum(axis=2)
    baseline_sum = max(baseline_sum, 1.0)
    intensity_ratio = float(rgb_sums.sum()) / baseline_sum
    intensity_rgb = tuple(float(s) * 3.0 / baseline_sum for s in rgb_sums)

    blurred, step = _blur_diff(diff, params, mask)
    hit = _detect_on_diff(diff, params, mask, None, noise_sigma,
                          blurred=blurred, step=step)
    if hit is not None:
        cx, cy, r, _, _, step_d = hit
        detection = ((cx + 0.5) * step_d - 0.5, (cy + 0.5) * step_d - 0.5,
                     r * step_d * params.radius_scale)
    else:
        detection = None

    # Soft-thresholded intensity centroid (smooth in the underlying force);
    # separable moments via row/column marginals.
    peak = float(blurred.max())
    weights = np.clip(blurred - np.float32(0.3 * peak), 0.0, None)
    col_w = weights.sum(axis=0)
    row_w = weights.sum(axis=1)
    total = float(col_w.sum())
    if total > 0.0:
        cx_w = float(col_w @ np.arange(len(col_w))) / total
        cy_w = float(row_w @ np.arange(len(row_w))) / total
        centroid = ((cx_w + 0.5) * step - 0.5, (cy_w + 0.5) * step - 0.5)
    else:
        centroid = (0.0, 0.0)

    if detection is None:
        return FrameFeatures(False, 0.0, (0.0, 0.0), intensity_ratio, intensity_rgb, centroid)
    return FrameFeatures(True, detection[2], (detection[0], detection[1]),
                         intensity_ratio, intensity_rgb, centroid)


def frame_features(frame: FrameRGB, baseline: FrameRGB,
                   params: DetectionParams = DetectionParams(),
                   noise_sigma: float = 0.0,
                   baseline_sum: float | None = None,
                   mask: np.ndarray | None = None) -> FrameFeatures:
    """Detection plus intensity/centroid features for one frame pair."""
    if baseline_sum is None:
        baseline_sum = float(baseline.pixels.astype(np.float64).sum())
    if mask is None:
        mask = coverage_mask_from(baseline)
    return diff_features(signed_difference(frame, baseline), baseline_sum,
                         params, noise_sigma, mask)
