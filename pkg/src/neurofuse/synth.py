"""Seeded synthetic cohorts with planted joint sources, group effects,
subtypes, clinical couplings, and cross-tissue network testbeds.

Every random draw comes from a counter-based (Philox) stream keyed by
``(seed, stream id, index)``, so sub-streams do not depend on the order in
which they are consumed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .ingest import ClinicalRecord, VoxelFeatureMatrix
from .netbuild import RegionalVolumeTable, aggregate_regional_volumes

# stream ids
_SOURCES, _LOADINGS, _NOISE, _CLINICAL, _SUBTYPES, _MISSING, _BASELINE, _NETWORK, _REGIONAL = range(9)

SUBTYPE_ORDER = ("A", "B", "AB")


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass
class SynthConfig:
    n_hc: int = 70
    n_pd: int = 180
    gm_voxels: int = 5000
    wm_voxels: int = 5000
    n_sources: int = 3
    # planted Hedges' g (HC minus PD) of each source's whole-PD shift
    effect_sizes: tuple = (3.5, 3.5, 0.0)
    noise_sd: float = 0.005
    # per-subject offset shared by all voxels of a region (anatomical variability)
    regional_sd: float = 0.003
    n_regions: int = 56
    clinical_coupling: dict = field(default_factory=lambda: {"updrs_off": 0.5, "updrs_on": 0.3, "hy": 0.3})
    # fractions of PD in subtypes A, B, AB; None disables subtype planting
    subtype_fractions: Optional[tuple] = (0.3, 0.3, 0.2)
    subtype_shift: float = 6.0
    source_fraction: float = 0.04
    source_amplitude: float = 0.02
    missing_fraction: float = 0.05
    age_effect: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_hc", "n_pd", "gm_voxels", "wm_voxels", "n_sources", "n_regions"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive", code="bad_config")
        if self.noise_sd < 0 or self.regional_sd < 0:
            raise ValidationError("noise_sd and regional_sd must be >= 0", code="bad_config")
        if len(self.effect_sizes) != self.n_sources:
            raise ValidationError(
                f"{len(self.effect_sizes)} effect sizes for {self.n_sources} sources", code="bad_config"
            )
        n = self.n_hc + self.n_pd
        if self.n_sources > n - 1:
            raise ValidationError(f"{self.n_sources} sources need more than {n} subjects", code="infeasible")
        for width in (self.gm_voxels, self.wm_voxels):
            block = self._block(width)
            if block * self.n_sources > width:
                raise ValidationError("source blocks do not fit in the voxel segment", code="infeasible")
            if self.n_regions > width:
                raise ValidationError("more regions than voxels in a segment", code="infeasible")
        if self.subtype_fractions is not None:
            if self.n_sources < 2:
                raise ValidationError("subtype planting needs at least 2 sources", code="infeasible")
            if len(self.subtype_fractions) != 3 or sum(self.subtype_fractions) > 1 or min(self.subtype_fractions) < 0:
                raise ValidationError("subtype_fractions must be 3 non-negative values summing to <= 1", code="bad_config")
        if not 0 <= self.missing_fraction < 1:
            raise ValidationError("missing_fraction must lie in [0, 1)", code="bad_config")

    def _block(self, width: int) -> int:
        return max(1, int(round(self.source_fraction * width)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effect_sizes"] = list(self.effect_sizes)
        d["subtype_fractions"] = None if self.subtype_fractions is None else list(self.subtype_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "effect_sizes" in d:
            d["effect_sizes"] = tuple(d["effect_sizes"])
        if d.get("subtype_fractions") is not None:
            d["subtype_fractions"] = tuple(d["subtype_fractions"])
        return cls(**d)


@dataclass
class GroundTruth:
    subject_ids: list[str]
    groups: list[str]
    sources: np.ndarray  # n_sources x voxels
    loadings: np.ndarray  # subjects x n_sources
    group_shifts: np.ndarray  # PD mean shift per source
    subtype_labels: dict[str, str]  # PD subject -> A/B/AB/Unassigned
    clinical_coupling: dict[str, float]
    snr: float
    gm_blocks: list[tuple[int, int]]
    wm_blocks: list[tuple[int, int]]

    def to_json(self) -> str:
        payload = {
            "subject_ids": self.subject_ids,
            "groups": self.groups,
            "sources": self.sources.tolist(),
            "loadings": self.loadings.tolist(),
            "group_shifts": self.group_shifts.tolist(),
            "subtype_labels": self.subtype_labels,
            "clinical_coupling": self.clinical_coupling,
            "snr": self.snr,
            "gm_blocks": [list(b) for b in self.gm_blocks],
            "wm_blocks": [list(b) for b in self.wm_blocks],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        return cls(
            subject_ids=d["subject_ids"],
            groups=d["groups"],
            sources=np.array(d["sources"], dtype=float),
            loadings=np.array(d["loadings"], dtype=float),
            group_shifts=np.array(d["group_shifts"], dtype=float),
            subtype_labels=d["subtype_labels"],
            clinical_coupling=d["clinical_coupling"],
            snr=d["snr"],
            gm_blocks=[tuple(b) for b in d["gm_blocks"]],
            wm_blocks=[tuple(b) for b in d["wm_blocks"]],
        )


@dataclass
class SyntheticCohort:
    matrix: VoxelFeatureMatrix
    gm_table: RegionalVolumeTable
    wm_table: RegionalVolumeTable
    clinical: list[ClinicalRecord]
    truth: GroundTruth
    gm_labels: np.ndarray
    wm_labels: np.ndarray
    region_names: list[str]
    hemispheres: list[str]
    config: SynthConfig


def region_naming(n_regions: int) -> tuple[list[str], list[str]]:
    names, hemi = [], []
    for r in range(n_regions):
        side = "L" if r % 2 == 0 else "R"
        names.append(f"{side}_region_{r // 2 + 1:02d}")
        hemi.append(side)
    return names, hemi


def contiguous_labels(n_voxels: int, n_regions: int) -> np.ndarray:
    """Region id (1-based) for each voxel, in equal contiguous runs."""
    return 1 + (np.arange(n_voxels) * n_regions) // n_voxels


def _place_blocks(rng: np.random.Generator, width: int, block: int, n: int) -> list[tuple[int, int]]:
    slots = width // block
    chosen = np.sort(rng.choice(slots, size=n, replace=False))
    return [(int(s * block), int(s * block + block)) for s in chosen]


def generate_cohort(config: SynthConfig) -> SyntheticCohort:
    """Draw a cohort: voxel data = baseline + loadings @ sources + noise.

    Noise has a per-voxel part (``noise_sd``) and a per-region part
    (``regional_sd``) that gives each subject its own regional volume
    profile; the reported SNR counts both.

    Sources are sparse blocks covering part of the GM segment and part of
    the WM segment (opposite signs in the two tissues). Source k's PD
    loadings are shifted by ``-effect_sizes[k] / J`` (J the small-sample
    correction), so the HC-minus-PD Hedges' g is near ``effect_sizes[k]``.
    When subtypes are planted, members of A/AB (source 0) and B/AB
    (source 1) are pushed a further ``subtype_shift`` in the disease
    direction.
    """
    config.validate()
    seed = config.seed
    n_hc, n_pd = config.n_hc, config.n_pd
    n = n_hc + n_pd
    K = config.n_sources
    gmv, wmv = config.gm_voxels, config.wm_voxels
    V = gmv + wmv

    ids = [f"HC{i + 1:03d}" for i in range(n_hc)] + [f"PD{i + 1:03d}" for i in range(n_pd)]
    groups = ["HC"] * n_hc + ["PD"] * n_pd
    is_pd = np.array(groups) == "PD"

    # sources
    rng = substream(seed, _SOURCES)
    gm_blocks = _place_blocks(rng, gmv, config._block(gmv), K)
    wm_blocks = _place_blocks(rng, wmv, config._block(wmv), K)
    wm_order = rng.permutation(K)
    sources = np.zeros((K, V))
    for k in range(K):
        g0, g1 = gm_blocks[k]
        w0, w1 = wm_blocks[wm_order[k]]
        sources[k, g0:g1] = 1.0 + 0.25 * rng.standard_normal(g1 - g0)
        sources[k, gmv + w0 : gmv + w1] = -(1.0 + 0.25 * rng.standard_normal(w1 - w0))
    sources *= config.source_amplitude
    wm_blocks = [wm_blocks[wm_order[k]] for k in range(K)]

    # subtypes
    labels = np.array(["HC"] * n_hc + ["Unassigned"] * n_pd, dtype=object)
    if config.subtype_fractions is not None:
        rng = substream(seed, _SUBTYPES)
        perm = rng.permutation(n_pd)
        counts = [int(round(f * n_pd)) for f in config.subtype_fractions]
        start = 0
        for lab, c in zip(SUBTYPE_ORDER, counts):
            labels[n_hc + perm[start : start + c]] = lab
            start += c

    # loadings
    rng = substream(seed, _LOADINGS)
    J = 1.0 - 3.0 / (4.0 * n - 9.0)
    loadings = rng.standard_normal((n, K))
    shifts = np.array([-g / J for g in config.effect_sizes], dtype=float)
    loadings[is_pd] += shifts
    if config.subtype_fractions is not None:
        for k, members in ((0, ("A", "AB")), (1, ("B", "AB"))):
            direction = np.sign(shifts[k]) if shifts[k] != 0 else 1.0
            hit = np.isin(labels, members)
            loadings[hit, k] += direction * config.subtype_shift

    # clinical
    clinical = _clinical_records(config, ids, groups, loadings)
    ages = np.array([r.age for r in clinical])

    # voxel data
    rng = substream(seed, _BASELINE)
    baseline = np.concatenate([0.6 + 0.1 * rng.random(gmv), 0.5 + 0.1 * rng.random(wmv)])
    age_map = 0.02 * rng.random(V)
    signal = loadings @ sources
    gm_labels = contiguous_labels(gmv, config.n_regions)
    wm_labels = contiguous_labels(wmv, config.n_regions)
    voxel_region = np.concatenate([gm_labels - 1, wm_labels - 1 + config.n_regions])
    values = np.empty((n, V))
    age_z = (ages - ages.mean()) / (ages.std() or 1.0)
    for s in range(n):
        noise = substream(seed, _NOISE, s).standard_normal(V) * config.noise_sd
        regional = substream(seed, _REGIONAL, s).standard_normal(2 * config.n_regions) * config.regional_sd
        values[s] = baseline + signal[s] + noise + regional[voxel_region] + config.age_effect * age_z[s] * age_map
    signal_var = float(signal.var(axis=0, ddof=1).mean())
    noise_var = config.noise_sd**2 + config.regional_sd**2
    snr = signal_var / noise_var if noise_var > 0 else float("inf")

    matrix = VoxelFeatureMatrix(values, gmv, wmv, ids)
    names, hemi = region_naming(config.n_regions)
    region_ids = np.arange(1, config.n_regions + 1)
    # regional volumes in cm^3 for 1 mm^3 voxels
    gm_vol = aggregate_regional_volumes(matrix.gm, gm_labels, region_ids) * 1e-3
    wm_vol = aggregate_regional_volumes(matrix.wm, wm_labels, region_ids) * 1e-3
    gm_table = RegionalVolumeTable(gm_vol, names, "GM", ids)
    wm_table = RegionalVolumeTable(wm_vol, names, "WM", ids)

    truth = GroundTruth(
        subject_ids=ids,
        groups=groups,
        sources=sources,
        loadings=loadings,
        group_shifts=shifts,
        subtype_labels={s: str(labels[i]) for i, s in enumerate(ids) if is_pd[i]},
        clinical_coupling=dict(config.clinical_coupling),
        snr=snr,
        gm_blocks=gm_blocks,
        wm_blocks=wm_blocks,
    )
    return SyntheticCohort(matrix, gm_table, wm_table, clinical, truth, gm_labels, wm_labels, names, hemi, config)


_CLINICAL_SCALE = {
    "updrs_off": (33.26, 8.92, 0.0, 108.0),
    "updrs_on": (17.85, 6.27, 0.0, 108.0),
    "hy": (2.07, 1.46, 1.0, 5.0),
}


def _clinical_records(config: SynthConfig, ids, groups, loadings) -> list[ClinicalRecord]:
    rng = substream(config.seed, _CLINICAL)
    n = len(ids)
    is_pd = np.array(groups) == "PD"
    age = np.where(
        is_pd, np.clip(rng.normal(54.84, 9.78, n), 22, 72), np.clip(rng.normal(49.24, 10.99, n), 20, 73)
    )
    gender = np.where(rng.random(n) < 0.75, "M", "F")
    pd_idx = np.nonzero(is_pd)[0]
    z0 = loadings[pd_idx, 0]
    z0 = (z0 - z0.mean()) / (z0.std() or 1.0)
    scores: dict[str, np.ndarray] = {}
    for var, (mu, sd, lo, hi) in _CLINICAL_SCALE.items():
        c = float(config.clinical_coupling.get(var, 0.0))
        e = rng.standard_normal(pd_idx.size)
        scores[var] = np.clip(mu + sd * (c * z0 + np.sqrt(max(0.0, 1 - c * c)) * e), lo, hi)
    duration = rng.uniform(1.0, 1.0 + np.minimum(15.0, age[pd_idx] - 20.0))
    scores["age_at_onset"] = age[pd_idx] - duration

    miss = substream(config.seed, _MISSING)
    missing = {var: miss.random(pd_idx.size) < config.missing_fraction for var in scores}
    for var in missing:
        if missing[var].all():
            missing[var][0] = False

    records = []
    pos = {int(i): k for k, i in enumerate(pd_idx)}
    for i in range(n):
        kw = {}
        if i in pos:
            k = pos[i]
            kw = {var: None if missing[var][k] else round(float(scores[var][k]), 4) for var in scores}
        records.append(ClinicalRecord(ids[i], groups[i], round(float(age[i]), 2), str(gender[i]), **kw))
    return records


@dataclass
class NetworkTruth:
    planted_pairs: set[tuple[int, int]]
    coupling: float
    seed: int


def generate_network_testbed(
    n_regions: int,
    n_subjects: int,
    planted_edges: Sequence[tuple[int, int]],
    seed: int = 0,
    coupling: float = 0.95,
) -> tuple[RegionalVolumeTable, RegionalVolumeTable, NetworkTruth]:
    """GM/WM regional tables in which planted (gm i, wm j) pairs correlate at ``coupling``.

    Planted pairs must form a matching: each GM and each WM region appears
    in at most one pair. Unplanted pairs are independent.
    """
    pairs = [(int(i), int(j)) for i, j in planted_edges]
    if n_regions < 2 or n_subjects < 3:
        raise ValidationError("need >= 2 regions and >= 3 subjects", code="infeasible")
    if not 0 <= coupling <= 1:
        raise ValidationError("coupling must lie in [0, 1]", code="bad_config")
    for i, j in pairs:
        if not (0 <= i < n_regions and 0 <= j < n_regions):
            raise ValidationError(f"planted pair {(i, j)} outside {n_regions} regions", code="bad_pair")
    gms = [i for i, _ in pairs]
    wms = [j for _, j in pairs]
    if len(set(gms)) != len(gms) or len(set(wms)) != len(wms):
        raise ValidationError("planted pairs must form a matching (one partner per region)", code="infeasible")
    rng = substream(seed, _NETWORK)
    gm = rng.standard_normal((n_subjects, n_regions))
    wm = rng.standard_normal((n_subjects, n_regions))
    latent = rng.standard_normal((n_subjects, len(pairs)))
    a, b = np.sqrt(coupling), np.sqrt(1.0 - coupling)
    for p, (i, j) in enumerate(pairs):
        gm[:, i] = a * latent[:, p] + b * gm[:, i]
        wm[:, j] = a * latent[:, p] + b * wm[:, j]
    names, _ = region_naming(n_regions)
    sids = [f"S{s + 1:04d}" for s in range(n_subjects)]
    # volume-like positive scale
    gm_t = RegionalVolumeTable(10.0 + gm, names, "GM", sids)
    wm_t = RegionalVolumeTable(8.0 + wm, names, "WM", sids)
    return gm_t, wm_t, NetworkTruth(set(pairs), coupling, seed)
