"""Synthetic case generation: seeded, watermarked, mix-controlled.

Generated corpora are for pipeline exercise and regression testing, not
clinical realism. Every generated case is flagged synthetic both in its
own file and in the corpus name.
"""

from __future__ import annotations

import math
import random
from typing import Mapping

from .defaults import DISEASE_ROUTES, default_route_aliases, make_case
from .domain import KNOWN_DISEASES, DiseaseLabel, MriReport
from .errors import InvalidMix
from .records import CaseFile, Corpus

GENERATOR_TAG = "synthetic/1"

_DURATIONS = (
    "six weeks",
    "three months",
    "five months",
    "eight months",
    "over a year",
)

_SYMPTOMS: dict[str, tuple[str, ...]] = {
    "D1": (
        "progressive bitemporal visual field loss",
        "worsening frontal headache",
        "declining visual acuity in dim light",
    ),
    "D2": (
        "new blurring after earlier pituitary surgery",
        "slow regrowth found on surveillance imaging",
        "recurring pressure headaches",
    ),
    "D3": (
        "rapidly progressive vision loss with diplopia",
        "third nerve palsy and retro-orbital pain",
        "accelerating headaches with field cuts",
    ),
    "D4": (
        "centripetal weight gain and proximal weakness",
        "refractory hypertension with easy bruising",
        "new diabetes with facial plethora",
    ),
    "D5": (
        "recurrent cortisol excess after prior resection",
        "returning weight gain and mood change",
        "relapsed hypertension despite medication",
    ),
}

_MRI_TEMPLATES: dict[str, tuple[str, str, int]] = {
    "D1": (
        "Sellar mass {size} mm with suprasellar extension abutting the optic chiasm.",
        "Macroadenoma without cavernous invasion.",
        21,
    ),
    "D2": (
        "Recurrent {size} mm enhancing tissue along the sellar margin with "
        "postsurgical distortion of midline landmarks.",
        "Recurrent adenoma in a scarred field.",
        14,
    ),
    "D3": (
        "{size} mm sellar mass invading the cavernous sinus and encasing the "
        "carotid, elevating the chiasm.",
        "Invasive macroadenoma, Knosp grade 4.",
        28,
    ),
    "D4": (
        "{size} mm hypoenhancing microadenoma within the gland; cavernous "
        "sinuses clear.",
        "Microadenoma consistent with corticotroph source.",
        6,
    ),
    "D5": (
        "Equivocal {size} mm hypointensity near the prior resection bed with "
        "asymmetric dynamic enhancement.",
        "Possible recurrent microadenoma in the operative bed.",
        5,
    ),
}


def apportion(total: int, weights: Mapping[str, float]) -> dict[str, int]:
    """Largest-remainder split of `total` across weighted categories.

    The result always sums to total, and each share differs from the exact
    proportional quota by less than one case.
    """
    if total < 0:
        raise InvalidMix("total must be non-negative")
    if any(w < 0 for w in weights.values()):
        raise InvalidMix("negative weights are not allowed")
    mass = sum(weights.values())
    if mass <= 0:
        raise InvalidMix("weights sum to zero")
    quotas = {k: total * w / mass for k, w in weights.items()}
    shares = {k: math.floor(q) for k, q in quotas.items()}
    leftover = total - sum(shares.values())
    by_remainder = sorted(
        weights, key=lambda k: (-(quotas[k] - shares[k]), k)
    )
    for k in by_remainder[:leftover]:
        shares[k] += 1
    return shares


def _disease_by_code(code: str) -> DiseaseLabel:
    for d in KNOWN_DISEASES:
        if d.code == code:
            return d
    raise InvalidMix(f"unknown disease code {code!r}")


def generate_case(case_id: str, disease: DiseaseLabel, rng: random.Random) -> CaseFile:
    age = rng.randrange(28, 75)
    sex = rng.choice(("F", "M"))
    duration = rng.choice(_DURATIONS)
    symptom = rng.choice(_SYMPTOMS[disease.code])
    history = (
        f"{duration.capitalize()} of {symptom}. "
        f"Workup is consistent with {disease.name.lower()}."
    )
    findings_tpl, impression, base_size = _MRI_TEMPLATES[disease.code]
    size = max(3, base_size + rng.randrange(-3, 4))
    mri = MriReport(
        findings=findings_tpl.format(size=size),
        impression=impression,
        lesion_attributes={"size_mm": str(size)},
    )
    return make_case(
        case_id,
        disease,
        demographics={"age": str(age), "sex": sex},
        history=history,
        mri=mri,
        synthetic=True,
        extra={"generator": GENERATOR_TAG},
    )


def generate_corpus(
    count: int,
    seed: int,
    weights: Mapping[str, float] | None = None,
    name: str = "synthetic",
) -> Corpus:
    """A seeded corpus with a controlled disease mix.

    The same (count, seed, weights) always yields the same corpus. Weights
    default to uniform over the built-in conditions.
    """
    if weights is None:
        weights = {d.code: 1.0 for d in KNOWN_DISEASES}
    for code in weights:
        if code not in DISEASE_ROUTES:
            raise InvalidMix(f"unknown disease code {code!r}")
    shares = apportion(count, weights)
    rng = random.Random(seed)
    bundles: list[CaseFile] = []
    index = 0
    for code in sorted(shares):
        disease = _disease_by_code(code)
        for _ in range(shares[code]):
            bundles.append(generate_case(f"{name}-{index:03d}", disease, rng))
            index += 1
    return Corpus(
        name=f"{name} (generated, seed={seed})",
        bundles=tuple(bundles),
        route_aliases=default_route_aliases(),
    )
