"""Material catalog, Shore-hardness conversion, and silicone mixing model.

Every elastic parameter used by the contact and rendering code is grounded
here: measured catalog values take precedence, and mixed or otherwise
uncharacterized silicones fall back to the Gent relation between Shore A
hardness and Young's modulus.
"""

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from fibertact.errors import DomainError, NotFoundError

# Poisson ratio assigned to silicones whose modulus comes from the Shore
# conversion (matches the measured Ecoflex 00-50 value).
CONVERTED_POISSON_RATIO = 0.36

# Shore OO -> Shore A crosswalk anchor points (durometer readings of the
# same materials on both scales), linearly interpolated between anchors and
# clamped outside.
SHORE_OO_TO_A_TABLE = ((50.0, 0.5), (60.0, 10.0), (86.0, 40.0))

# Mixing table for Ecoflex 00-50 / Smooth-Sil 945 blends:
# (shore A equivalent, ecoflex grams, smoothsil grams). The first row is the
# pure-Ecoflex batch, read as 0.5 on the Shore A durometer.
MIX_TABLE = (
    (0.5, 16.0, 0.0),
    (1.5, 14.0, 2.0),
    (5.0, 12.0, 4.0),
    (6.5, 11.5, 4.5),
    (11.0, 10.0, 6.0),
    (16.0, 8.0, 8.0),
    (20.0, 7.0, 9.0),
    (25.0, 6.0, 10.0),
    (30.0, 5.0, 11.0),
    (35.0, 4.0, 12.0),
    (42.0, 2.0, 14.0),
    (45.0, 0.0, 16.0),
)


@dataclass(frozen=True)
class Material:
    """Elastic description of a gel, silicone, or indenter body."""

    name: str
    shore_scale: str | None  # "A", "OO", or None when no durometer datum
    shore_value: float | None
    youngs_modulus: float  # Pa
    poisson_ratio: float
    source: str  # "catalog" or "converted"

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise DomainError(f"youngs_modulus must be > 0, got {self.youngs_modulus}")
        if not 0.0 <= self.poisson_ratio <= 0.5:
            raise DomainError(f"poisson_ratio must be in [0, 0.5], got {self.poisson_ratio}")
        if self.shore_scale is not None and self.shore_scale not in ("A", "OO"):
            raise DomainError(f"shore_scale must be 'A' or 'OO', got {self.shore_scale!r}")
        if self.shore_value is not None and not 0.0 <= self.shore_value <= 100.0:
            raise DomainError(f"shore_value must be in [0, 100], got {self.shore_value}")

    @property
    def compliance(self) -> float:
        """Plane-contact compliance term (1 - nu^2) / E in 1/Pa."""
        if math.isinf(self.youngs_modulus):
            return 0.0
        return (1.0 - self.poisson_ratio**2) / self.youngs_modulus

    @property
    def shear_modulus(self) -> float:
        """G = E / (2 (1 + nu)) in Pa."""
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))


#: Idealized rigid body (zero compliance) for metal probes and fixtures.
RIGID = Material("rigid", None, None, math.inf, 0.0, "catalog")


@dataclass(frozen=True)
class MixRatio:
    """One silicone batch: component masses and its durometer equivalent."""

    ecoflex_0050_g: float
    smoothsil_945_g: float
    shore_a_equivalent: float

    def __post_init__(self):
        if self.ecoflex_0050_g < 0 or self.smoothsil_945_g < 0:
            raise DomainError("component masses must be >= 0")
        if self.ecoflex_0050_g + self.smoothsil_945_g <= 0:
            raise DomainError("total mass must be > 0")


def gent_modulus_pa(shore_a: float) -> float:
    """Young's modulus from Shore A hardness via the Gent relation.

    E(MPa) = 0.0981 (56 + 7.62336 S) / (0.137505 (254 - 2.54 S)),
    monotone increasing and finite for S < 100.
    """
    if not 0.0 <= shore_a < 100.0:
        raise DomainError(f"Shore A value must be in [0, 100), got {shore_a}")
    e_mpa = 0.0981 * (56.0 + 7.62336 * shore_a) / (0.137505 * (254.0 - 2.54 * shore_a))
    return e_mpa * 1e6


def shore_oo_to_a(shore_oo: float) -> float:
    """Map a Shore OO reading to its Shore A equivalent (piecewise linear)."""
    if not 0.0 <= shore_oo <= 100.0:
        raise DomainError(f"Shore OO value must be in [0, 100], got {shore_oo}")
    oo = np.array([row[0] for row in SHORE_OO_TO_A_TABLE])
    a = np.array([row[1] for row in SHORE_OO_TO_A_TABLE])
    return float(np.interp(shore_oo, oo, a))


def material_from_shore(scale: str, value: float, name: str | None = None) -> Material:
    """Build a converted Material from a durometer reading."""
    if scale == "OO":
        shore_a = shore_oo_to_a(value)
    elif scale == "A":
        shore_a = float(value)
    else:
        raise DomainError(f"unknown shore scale {scale!r}")
    return Material(
        name=name or f"shore-{scale}-{value:g}",
        shore_scale=scale,
        shore_value=float(value),
        youngs_modulus=gent_modulus_pa(shore_a),
        poisson_ratio=CONVERTED_POISSON_RATIO,
        source="converted",
    )


class MaterialCatalog:
    """Named catalog backed by the packaged JSON file."""

    def __init__(self, entries: list[dict] | None = None):
        if entries is None:
            payload = json.loads(
                resources.files("fibertact.data").joinpath("materials_catalog.json").read_text()
            )
            self.version = payload["catalog_version"]
            entries = payload["materials"]
        else:
            self.version = "inline"
        self._by_key: dict[str, Material] = {}
        for entry in entries:
            mat = Material(
                name=entry["name"],
                shore_scale=entry["shore_scale"],
                shore_value=entry["shore_value"],
                youngs_modulus=entry["youngs_modulus_pa"],
                poisson_ratio=entry["poisson_ratio"],
                source=entry["source"],
            )
            for key in [entry["name"], *entry.get("aliases", [])]:
                self._by_key[key.strip().lower()] = mat

    def names(self) -> list[str]:
        return sorted({m.name for m in self._by_key.values()})

    def get(self, name: str) -> Material:
        key = name.strip().lower()
        if key == "rigid":
            return RIGID
        try:
            return self._by_key[key]
        except KeyError:
            raise NotFoundError(f"no catalog material named {name!r}") from None


_DEFAULT_CATALOG: MaterialCatalog | None = None


def default_catalog() -> MaterialCatalog:
    global _DEFAULT_CATALOG
    if _DEFAULT_CATALOG is None:
        _DEFAULT_CATALOG = MaterialCatalog()
    return _DEFAULT_CATALOG


def lookup_or_convert(query, catalog: MaterialCatalog | None = None) -> Material:
    """Resolve a material query to a Material.

    Accepts a catalog name (string), a Material (returned as-is), or a
    (scale, shore_value) pair for conversion. Catalog entries are returned
    verbatim; conversion goes through the Shore OO -> A crosswalk and the
    Gent relation.
    """
    catalog = catalog or default_catalog()
    if isinstance(query, Material):
        return query
    if isinstance(query, str):
        return catalog.get(query)
    if isinstance(query, (tuple, list)) and len(query) == 2:
        scale, value = query
        return material_from_shore(str(scale), float(value))
    if isinstance(query, dict):
        return material_from_shore(query["shore_scale"], query["shore_value"], query.get("name"))
    raise DomainError(f"cannot interpret material query {query!r}")


def mix_to_shore(ecoflex_g: float, smoothsil_g: float) -> float:
    """Shore A equivalent of an Ecoflex 00-50 / Smooth-Sil 945 blend.

    Piecewise-linear interpolation over the mixing table keyed by the
    Smooth-Sil mass fraction; exact at the tabulated rows.
    """
    if ecoflex_g < 0 or smoothsil_g < 0:
        raise DomainError("component masses must be >= 0")
    total = ecoflex_g + smoothsil_g
    if total <= 0:
        raise DomainError("total mass must be > 0")
    frac = smoothsil_g / total
    fracs = np.array([row[2] / (row[1] + row[2]) for row in MIX_TABLE])
    shores = np.array([row[0] for row in MIX_TABLE])
    return float(np.interp(frac, fracs, shores))


def material_for_mix(ecoflex_g: float, smoothsil_g: float,
                     catalog: MaterialCatalog | None = None) -> Material:
    """Material for a silicone blend; pure-component rows hit the catalog."""
    catalog = catalog or default_catalog()
    if smoothsil_g == 0:
        return catalog.get("Ecoflex 00-50")
    if ecoflex_g == 0:
        return catalog.get("Smooth-Sil 945")
    shore_a = mix_to_shore(ecoflex_g, smoothsil_g)
    return material_from_shore("A", shore_a, name=f"mix-{shore_a:g}A")


def effective_modulus(m1: Material, m2: Material) -> float:
    """Contact modulus E' with 1/E' = (1-nu1^2)/E1 + (1-nu2^2)/E2 in Pa.

    A rigid body contributes a zero term; the softer body dominates.
    """
    total = m1.compliance + m2.compliance
    if total <= 0:
        raise DomainError("at least one body must be compliant")
    return 1.0 / total
