"""Force-calibration protocol: stream pairing, dataset synthesis, regression.

The normal protocol presses probes into the tip until a 1 N threshold; the
shear protocol preloads 0.5 N and ramps a tangential force to 80 mN in a
seeded random direction, discarding sessions that slip. Image features are
paired with nearest-in-time force records and fed to simple deterministic
regressors evaluated with the RMSE / MedAE / force-angle metrics.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from fibertact.contact import hertz_radius
from fibertact.errors import DomainError
from fibertact.render import FRAME_FEATURE_DIM, coverage_mask_from, frame_features
from fibertact.scene import Scene
from fibertact.seeding import derive_rng

MAX_PAIR_SKEW_S = 0.015
IMAGE_RATE_HZ = 10.0
FORCE_RATE_HZ = 50.0
NORMAL_PEAK_N = 1.0
SHEAR_PRELOAD_N = 0.5
SHEAR_PEAK_N = 0.08
FORCE_NOISE_N = 2e-3

# Held-out indentation locations (mm) per probe for the spatial split, and
# the training sweep along the x axis.
SPATIAL_SPLIT_POINTS = {
    "4mm": {"val": (-1.0, 0.0), "test": (-1.0, 1.0)},
    "12mm": {"val": (-3.3, 0.2), "test": (-2.3, 0.2)},
    "flat": {"val": (1.2, -1.3), "test": (-1.0, 0.0)},
}
SPATIAL_TRAIN_SWEEP = [(round(-0.9 + 0.1 * i, 1), 0.0) for i in range(20)]


def pair_streams(image_times_s, force_times_s, max_skew_s: float = MAX_PAIR_SKEW_S):
    """Pair each image with its nearest-in-time force record.

    Returns a list of (image_index, force_index, skew_s); images whose
    nearest record is further than ``max_skew_s`` are dropped. Empty
    streams produce an empty result.
    """
    image_times = np.asarray(image_times_s, dtype=float)
    force_times = np.asarray(force_times_s, dtype=float)
    if len(image_times) == 0 or len(force_times) == 0:
        return []
    if np.any(np.diff(image_times) < 0) or np.any(np.diff(force_times) < 0):
        raise DomainError("streams must be time sorted")
    pos = np.searchsorted(force_times, image_times)
    pairs = []
    for i, t in enumerate(image_times):
        candidates = []
        if pos[i] > 0:
            candidates.append(pos[i] - 1)
        if pos[i] < len(force_times):
            candidates.append(pos[i])
        j = min(candidates, key=lambda k: abs(force_times[k] - t))
        skew = abs(float(force_times[j] - t))
        if skew <= max_skew_s:
            pairs.append((i, int(j), skew))
    return pairs


@dataclass
class ForceDataset:
    """Feature/force pairs with split bookkeeping."""

    protocol: str  # "normal" or "shear"
    features: np.ndarray  # (N, FRAME_FEATURE_DIM)
    forces: np.ndarray  # (N, 3): fn, fsx, fsy (paired, noise included)
    times_s: np.ndarray  # (N,)
    points_mm: np.ndarray  # (N, 2)
    probes: list[str]
    split: np.ndarray  # (N,) strings: train/val/test/(unassigned)
    px_per_mm: float
    probe_re_m: dict[str, float]
    split_mode: str = "none"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.features)

    def subset(self, name: str) -> "ForceDataset":
        idx = np.flatnonzero(self.split == name)
        return ForceDataset(
            protocol=self.protocol,
            features=self.features[idx],
            forces=self.forces[idx],
            times_s=self.times_s[idx],
            points_mm=self.points_mm[idx],
            probes=[self.probes[i] for i in idx],
            split=self.split[idx],
            px_per_mm=self.px_per_mm,
            probe_re_m=self.probe_re_m,
            split_mode=self.split_mode,
            meta=self.meta,
        )

    def save(self, out_dir: Path) -> None:
        """Manifest CSV plus the feature/force arrays."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "manifest.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "t_s", "fn_n", "fsx_n", "fsy_n",
                             "point_x_mm", "point_y_mm", "probe", "split"])
            for i in range(len(self)):
                writer.writerow([
                    f"frames/{i:06d}.png",
                    f"{self.times_s[i]:.6f}",
                    f"{self.forces[i, 0]:.9f}",
                    f"{self.forces[i, 1]:.9f}",
                    f"{self.forces[i, 2]:.9f}",
                    f"{self.points_mm[i, 0]:.3f}",
                    f"{self.points_mm[i, 1]:.3f}",
                    self.probes[i],
                    self.split[i],
                ])
        np.savez_compressed(
            out_dir / "features.npz",
            features=self.features, forces=self.forces, times_s=self.times_s,
            points_mm=self.points_mm, split=self.split,
        )


def _normal_force_profile(t: np.ndarray, duration_s: float, peak_n: float) -> np.ndarray:
    """Smooth press-to-threshold ramp (half-cosine up)."""
    x = np.clip(t / duration_s, 0.0, 1.0)
    return peak_n * 0.5 * (1.0 - np.cos(math.pi * x))


def _session_features(scene: Scene, probe, point_mm, image_times,
                      fn_of_t, fs_of_t, seed, session_ordinal, baseline, mask,
                      baseline_sum, noise_sigma):
    rows = []
    for i, t in enumerate(image_times):
        fn = float(fn_of_t(t))
        fs = fs_of_t(t)
        contact = scene.resolve_contact(fn, probe, center_mm=point_mm, shear_n=fs)
        frame = scene.render_frame(
            contact, probe, seed=seed,
            frame_index=session_ordinal * 1_000_000 + i,
            timestamp_s=float(t), noise_sigma=noise_sigma,
        )
        feats = frame_features(frame, baseline, scene.detection, noise_sigma,
                               baseline_sum, mask)
        rows.append(feats.as_array(scene.px_per_mm))
    return np.asarray(rows)


@dataclass
class DatasetConfig:
    n_points: int = 6
    region_mm: float = 5.0
    frames_per_point: int = 70
    probes: tuple = ("4mm",)
    noise_sigma: float | None = None  # None -> scene default
    force_noise_n: float = FORCE_NOISE_N
    points_mm: list | None = None  # explicit points override (spatial mode)


def _random_points(rng: np.random.Generator, n: int, region_mm: float) -> list:
    half = region_mm / 2.0
    return [tuple(rng.uniform(-half, half, size=2)) for _ in range(n)]


def generate_normal_dataset(scene: Scene, cfg: DatasetConfig, seed: int) -> ForceDataset:
    """Synthesize the press-to-1N dataset over random (or given) tip points."""
    noise_sigma = scene.params.noise_sigma if cfg.noise_sigma is None else cfg.noise_sigma
    rng = derive_rng(seed, "normal-dataset")
    baseline = scene.baseline_frame(seed, noise_sigma=noise_sigma)
    mask = coverage_mask_from(baseline)
    baseline_sum = scene.baseline_pixel_sum(baseline)

    feats, forces, times, points, probes = [], [], [], [], []
    duration = cfg.frames_per_point / IMAGE_RATE_HZ
    session_ordinal = 0
    for probe_name in cfg.probes:
        probe = scene.probe(probe_name)
        pts = cfg.points_mm or _random_points(rng, cfg.n_points, cfg.region_mm)
        for p_idx, point in enumerate(pts):
            session_ordinal += 1
            alpha = math.hypot(*point) * 1e-3 / scene.dome.radius_m
            if alpha > scene.imaged_cap_alpha:
                print(f"point {point} outside imaged cap; skipped")
                continue
            image_times = np.arange(cfg.frames_per_point) / IMAGE_RATE_HZ
            force_times = np.arange(int(duration * FORCE_RATE_HZ)) / FORCE_RATE_HZ
            truth = _normal_force_profile(force_times, duration, NORMAL_PEAK_N)
            noise = derive_rng(seed, "force-noise", probe_name, p_idx).normal(
                0.0, cfg.force_noise_n, size=len(force_times))
            records = truth + noise
            pairs = pair_streams(image_times, force_times)
            rows = _session_features(
                scene, probe, point, image_times,
                lambda t: _normal_force_profile(np.asarray(t), duration, NORMAL_PEAK_N),
                lambda t: (0.0, 0.0),
                seed, session_ordinal, baseline, mask, baseline_sum, noise_sigma,
            )
            for (img_i, rec_j, _skew) in pairs:
                feats.append(rows[img_i])
                forces.append([records[rec_j], 0.0, 0.0])
                times.append(image_times[img_i])
                points.append(point)
                probes.append(probe_name)
    return ForceDataset(
        protocol="normal",
        features=np.asarray(feats),
        forces=np.asarray(forces),
        times_s=np.asarray(times),
        points_mm=np.asarray(points),
        probes=probes,
        split=np.array(["unassigned"] * len(feats), dtype=object),
        px_per_mm=scene.px_per_mm,
        probe_re_m={p: scene.contact_re(scene.probe(p)) for p in cfg.probes},
        meta={"seed": seed, "noise_sigma": noise_sigma},
    )


def generate_shear_dataset(scene: Scene, cfg: DatasetConfig, seed: int) -> ForceDataset:
    """Preload 0.5 N, ramp shear to 80 mN in a seeded direction, unload.

    Sessions whose peak shear exceeds the friction limit are discarded (the
    unload would leave a residual, flagging possible slip).
    """
    noise_sigma = scene.params.noise_sigma if cfg.noise_sigma is None else cfg.noise_sigma
    rng = derive_rng(seed, "shear-dataset")
    baseline = scene.baseline_frame(seed, noise_sigma=noise_sigma)
    mask = coverage_mask_from(baseline)
    baseline_sum = scene.baseline_pixel_sum(baseline)

    feats, forces, times, points, probes = [], [], [], [], []
    n_frames = cfg.frames_per_point
    duration = n_frames / IMAGE_RATE_HZ
    # Phase fractions: preload ramp, shear ramp, unload.
    t1, t2 = 0.3 * duration, 0.85 * duration
    discarded = 0
    session_ordinal = 10_000  # distinct frame-seed range from the normal sets
    for probe_name in cfg.probes:
        probe = scene.probe(probe_name)
        pts = cfg.points_mm or _random_points(rng, cfg.n_points, cfg.region_mm)
        for p_idx, point in enumerate(pts):
            session_ordinal += 1
            alpha = math.hypot(*point) * 1e-3 / scene.dome.radius_m
            if alpha > scene.imaged_cap_alpha:
                print(f"point {point} outside imaged cap; skipped")
                continue
            direction = derive_rng(seed, "shear-dir", probe_name, p_idx).uniform(
                0.0, 2.0 * math.pi)
            ux, uy = math.cos(direction), math.sin(direction)

            def fn_of_t(t):
                t = np.asarray(t, dtype=float)
                return np.where(
                    t < t1, _normal_force_profile(t, t1, SHEAR_PRELOAD_N), SHEAR_PRELOAD_N
                )

            def fs_mag(t):
                t = np.asarray(t, dtype=float)
                up = np.clip((t - t1) / (t2 - t1), 0.0, 1.0)
                down = np.clip((duration - t) / (duration - t2), 0.0, 1.0)
                return SHEAR_PEAK_N * np.minimum(up, down)

            # Slip check at peak shear: discard the whole session.
            peak_contact = scene.resolve_contact(
                SHEAR_PRELOAD_N, probe, center_mm=point,
                shear_n=(SHEAR_PEAK_N * ux, SHEAR_PEAK_N * uy))
            if peak_contact.slipping:
                discarded += 1
                continue

            image_times = np.arange(n_frames) / IMAGE_RATE_HZ
            force_times = np.arange(int(duration * FORCE_RATE_HZ)) / FORCE_RATE_HZ
            truth_n = fn_of_t(force_times)
            truth_s = fs_mag(force_times)
            noise_rng = derive_rng(seed, "force-noise", probe_name, p_idx)
            rec = np.stack(
                [
                    truth_n + noise_rng.normal(0, cfg.force_noise_n, len(force_times)),
                    truth_s * ux + noise_rng.normal(0, cfg.force_noise_n, len(force_times)),
                    truth_s * uy + noise_rng.normal(0, cfg.force_noise_n, len(force_times)),
                ],
                axis=-1,
            )
            pairs = pair_streams(image_times, force_times)
            rows = _session_features(
                scene, probe, point, image_times,
                lambda t: float(fn_of_t(t)),
                lambda t: (float(fs_mag(t)) * ux, float(fs_mag(t)) * uy),
                seed, session_ordinal, baseline, mask, baseline_sum, noise_sigma,
            )
            for (img_i, rec_j, _skew) in pairs:
                feats.append(rows[img_i])
                forces.append(rec[rec_j])
                times.append(image_times[img_i])
                points.append(point)
                probes.append(probe_name)
    return ForceDataset(
        protocol="shear",
        features=np.asarray(feats),
        forces=np.asarray(forces),
        times_s=np.asarray(times),
        points_mm=np.asarray(points),
        probes=probes,
        split=np.array(["unassigned"] * len(feats), dtype=object),
        px_per_mm=scene.px_per_mm,
        probe_re_m={p: scene.contact_re(scene.probe(p)) for p in cfg.probes},
        meta={"seed": seed, "noise_sigma": noise_sigma, "discarded_sessions": discarded},
    )


def split_dataset(dataset: ForceDataset, mode: str = "random",
                  fractions: tuple = (0.8, 0.1, 0.1), seed: int = 0,
                  val_points: dict | None = None,
                  test_points: dict | None = None) -> ForceDataset:
    """Assign train/val/test labels.

    random: seeded shuffle by fractions. spatial: pairs at designated
    per-probe validation/test points go to val/test, everything else to
    train (defaults follow the held-out location study).
    """
    n = len(dataset)
    split = np.array(["train"] * n, dtype=object)
    if mode == "random":
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise DomainError("split fractions must sum to 1")
        order = derive_rng(seed, "split").permutation(n)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        split[order[n_train : n_train + n_val]] = "val"
        split[order[n_train + n_val :]] = "test"
    elif mode == "spatial":
        unique_pts = {tuple(np.round(p, 6)) for p in dataset.points_mm}
        if len(unique_pts) < 3:
            raise DomainError("spatial split needs at least 3 distinct points")
        val_points = val_points or {
            p: SPATIAL_SPLIT_POINTS[p]["val"] for p in set(dataset.probes)
        }
        test_points = test_points or {
            p: SPATIAL_SPLIT_POINTS[p]["test"] for p in set(dataset.probes)
        }
        for i in range(n):
            point = tuple(dataset.points_mm[i])
            probe = dataset.probes[i]
            if _close(point, val_points.get(probe)):
                split[i] = "val"
            elif _close(point, test_points.get(probe)):
                split[i] = "test"
    else:
        raise DomainError(f"unknown split mode {mode!r}")
    out = dataset
    out.split = split
    out.split_mode = mode
    return out


def _close(p, q, tol=1e-6):
    return q is not None and abs(p[0] - q[0]) < tol and abs(p[1] - q[1]) < tol


# ------------------------------------------------------------------ models
class HertzInverseRegressor:
    """F = k a^3 from the detected patch radius, k fitted by least squares."""

    def __init__(self):
        self.k = 0.0

    def fit(self, dataset: ForceDataset) -> "HertzInverseRegressor":
        detected = dataset.features[:, 0] > 0.5
        if detected.sum() < 2:
            raise DomainError("not enough detections to fit")
        a_m = dataset.features[detected, 1] * 1e-3  # radius feature is in mm
        f_n = dataset.forces[detected, 0]
        x = a_m**3
        denom = float(x @ x)
        if denom <= 0:
            raise DomainError("degenerate radius features")
        self.k = float(x @ f_n) / denom
        return self

    def eprime_estimate(self, re_m: float) -> float:
        """Implied contact modulus from the fitted gain."""
        return self.k * 3.0 * re_m / 4.0

    def predict(self, features: np.ndarray) -> np.ndarray:
        a_m = features[:, 1] * 1e-3
        fn = self.k * a_m**3
        out = np.zeros((len(features), 3))
        out[:, 0] = fn
        return out


class PolyRegressor:
    """Ridge-damped polynomial least squares on frame features.

    Base features: patch radius, per-channel intensity ratios, centroid.
    Monomials up to total degree 3, solved by normal equations with a
    trace-scaled ridge term.
    """

    # r_mm, m_r, m_g, m_b, intensity centroid, fitted circle center
    BASE_COLUMNS = (1, 4, 5, 6, 7, 8, 9, 10)
    DEGREE = 3
    RIDGE = 1e-8

    def __init__(self):
        self.mean = None
        self.scale = None
        self.coef = None
        self.terms = None

    def _expand(self, base: np.ndarray) -> np.ndarray:
        z = (base - self.mean) / self.scale
        cols = [np.ones(len(z))]
        for deg in range(1, self.DEGREE + 1):
            for combo in combinations_with_replacement(range(z.shape[1]), deg):
                col = np.ones(len(z))
                for j in combo:
                    col = col * z[:, j]
                cols.append(col)
        return np.stack(cols, axis=-1)

    def fit(self, dataset: ForceDataset) -> "PolyRegressor":
        base = dataset.features[:, self.BASE_COLUMNS]
        if len(base) == 0:
            raise DomainError("empty training set")
        self.mean = base.mean(axis=0)
        self.scale = base.std(axis=0)
        self.scale[self.scale < 1e-12] = 1.0
        phi = self._expand(base)
        y = dataset.forces
        gram = phi.T @ phi
        lam = self.RIDGE * np.trace(gram) / gram.shape[0]
        gram += lam * np.eye(gram.shape[0])
        try:
            self.coef = np.linalg.solve(gram, phi.T @ y)
        except np.linalg.LinAlgError as exc:
            raise DomainError("degenerate feature matrix") from exc
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        phi = self._expand(features[:, self.BASE_COLUMNS])
        return phi @ self.coef


def fit_regressor(train: ForceDataset, kind: str = "poly_features"):
    if len(train) == 0:
        raise DomainError("empty training set")
    if kind == "hertz_inverse":
        return HertzInverseRegressor().fit(train)
    if kind == "poly_features":
        return PolyRegressor().fit(train)
    raise DomainError(f"unknown regressor kind {kind!r}")


# ----------------------------------------------------------------- metrics
MIN_ANGLE_SHEAR_N = 0.02  # angle metric restricted to |Fs| above this


@dataclass
class Metrics:
    rmse_mn: float
    rmse_std_mn: float
    medae_mn: float
    angle_deg: float | None = None
    n_samples: int = 0

    def to_json(self) -> str:
        payload = {
            "rmse_mn": round(self.rmse_mn, 6),
            "rmse_std_mn": round(self.rmse_std_mn, 6),
            "medae_mn": round(self.medae_mn, 6),
            "angle_deg": None if self.angle_deg is None else round(self.angle_deg, 6),
            "n_samples": self.n_samples,
        }
        return json.dumps(payload, sort_keys=True)


def evaluate(model, test: ForceDataset) -> Metrics:
    """RMSE with per-sample-error spread, median absolute error, and (for
    shear) the mean absolute angular error of the tangential prediction."""
    if len(test) == 0:
        raise DomainError("empty test set")
    pred = model.predict(test.features)
    if test.protocol == "normal":
        err = np.abs(pred[:, 0] - test.forces[:, 0])
    else:
        err = np.linalg.norm(pred[:, 1:3] - test.forces[:, 1:3], axis=1)
    rmse = float(np.sqrt(np.mean(err**2)))
    angle = None
    if test.protocol == "shear":
        mag = np.linalg.norm(test.forces[:, 1:3], axis=1)
        sel = mag >= MIN_ANGLE_SHEAR_N
        if sel.any():
            ang_true = np.arctan2(test.forces[sel, 2], test.forces[sel, 1])
            ang_pred = np.arctan2(pred[sel, 2], pred[sel, 1])
            d = np.angle(np.exp(1j * (ang_pred - ang_true)))
            angle = float(np.degrees(np.mean(np.abs(d))))
    return Metrics(
        rmse_mn=rmse * 1e3,
        rmse_std_mn=float(np.std(err)) * 1e3,
        medae_mn=float(np.median(err)) * 1e3,
        angle_deg=angle,
        n_samples=len(test),
    )
