"""Command-line pipeline: every analysis stage as a subcommand with file handoff.

Each stage reads its inputs from directories written by earlier stages
and writes its outputs, plus a ``run_config.txt`` provenance file, into
its own output directory. Reruns with the same inputs and configuration
produce byte-identical files.

Exit codes: 0 success, 2 usage or configuration error, 3 data validation
error, 4 numerical failure.

Configuration files use one ``key = value`` pair per line; ``#`` starts a
comment. Keys are the :class:`RunConfig` field names; synthetic-cohort
settings use a ``synth.`` prefix (for example ``synth.n_pd = 120``).
Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as nio
from .errors import NeurofuseError, NumericalError, ValidationError
from .ingest import (
    CovariateDesign,
    drop_subjects,
    impute_clinical,
    regress_covariates,
    screen_outliers,
)
from .jica import decompose_joint, split_sources, zmap_threshold
from .netbuild import (
    RegionGraph,
    RegionalVolumeTable,
    build_association_matrix,
    collapse_region_graph,
    default_k,
    edge_rows,
    mknn_threshold,
)
from .netmetrics import NODAL_FIELDS, compute_metrics
from .stats import chi_square_2x2, permutation_test, student_t
from .subtype import (
    ComponentRanking,
    correlate_loadings_clinical,
    rank_components,
    subtype_anova,
    subtype_from_loadings,
)
from .synth import SynthConfig, generate_cohort
from .ubnin import subject_ubnin

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4

PROVENANCE_FILE = "run_config.txt"
GROUP_LABELS = ("HC", "PD", "A", "B", "AB", "Unassigned")


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 2."""


@dataclass
class RunConfig:
    seed: int = 0
    components: int = 30
    k: Optional[int] = None  # None means floor(sqrt(R))
    fdr_q: float = 0.05
    n_perm: int = 9999
    n_null: int = 100
    hub_mode: str = "either"
    partition: str = "modularity"
    drop_outliers: bool = False
    outlier_sd: float = 3.0
    rank_by: str = "signed"
    mean_population: str = "pd"
    winsor_fraction: float = 0.05
    synth: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.components < 1:
            raise UsageError("components must be >= 1")
        if self.k is not None and self.k < 1:
            raise UsageError("k must be >= 1")
        if not 0 < self.fdr_q < 1:
            raise UsageError("fdr_q must lie in (0, 1)")
        if self.n_perm < 1 or self.n_null < 1:
            raise UsageError("n_perm and n_null must be >= 1")
        choices = {
            "hub_mode": ("either", "both"),
            "partition": ("modularity", "hemisphere"),
            "rank_by": ("signed", "abs"),
            "mean_population": ("pd", "all"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise UsageError(f"{name} must be one of {', '.join(allowed)}")
        if self.outlier_sd <= 0:
            raise UsageError("outlier_sd must be positive")
        if not 0 <= self.winsor_fraction < 0.5:
            raise UsageError("winsor_fraction must lie in [0, 0.5)")
        try:
            self.synth_config().validate()
        except (TypeError, ValidationError) as exc:
            raise UsageError(f"synth settings: {exc}") from None

    def synth_config(self) -> SynthConfig:
        return SynthConfig.from_dict({**self.synth, "seed": self.seed})

    def lines(self) -> list[str]:
        out = []
        for f in fields(self):
            if f.name == "synth":
                continue
            value = getattr(self, f.name)
            out.append(f"{f.name} = {'auto' if value is None else _format_value(value)}")
        for key in sorted(self.synth):
            out.append(f"synth.{key} = {_format_value(self.synth[key])}")
        return out


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, dict):
        return ",".join(f"{k}:{v}" for k, v in sorted(value.items()))
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_synth_value(key: str, text: str, default):
    if key == "clinical_coupling":
        out = {}
        for item in filter(None, (t.strip() for t in text.split(","))):
            name, _, val = item.partition(":")
            out[name.strip()] = float(val)
        return out
    if key == "subtype_fractions" and text.lower() in ("none", ""):
        return None
    if isinstance(default, tuple) or key == "subtype_fractions":
        return tuple(float(t) for t in text.split(","))
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    return float(text)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into typed overrides for :class:`RunConfig`."""
    defaults = RunConfig()
    synth_defaults = SynthConfig()
    synth_keys = {f.name for f in fields(SynthConfig)} - {"seed"}
    top = {f.name for f in fields(RunConfig)} - {"synth"}
    out: dict = {}
    synth: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        try:
            if key.startswith("synth."):
                name = key[len("synth.") :]
                if name not in synth_keys:
                    raise UsageError(f"{source}:{lineno}: unknown synth key {name!r}")
                synth[name] = _parse_synth_value(name, value, getattr(synth_defaults, name))
            elif key in top:
                default = getattr(defaults, key)
                if key == "k":
                    out[key] = None if value.lower() == "auto" else int(value)
                elif isinstance(default, bool):
                    out[key] = _parse_bool(value)
                elif isinstance(default, int):
                    out[key] = int(value)
                elif isinstance(default, float):
                    out[key] = float(value)
                else:
                    out[key] = value
            else:
                raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise UsageError(f"{source}:{lineno}: {exc}") from None
    if synth:
        out["synth"] = synth
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text(), str(path)))
    flag_map = {
        "seed": "seed",
        "components": "components",
        "k": "k",
        "fdr_q": "fdr_q",
        "n_perm": "n_perm",
        "n_null": "n_null",
        "hub_mode": "hub_mode",
        "partition": "partition",
    }
    for attr, key in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    if getattr(args, "drop_outliers", False):
        values["drop_outliers"] = True
    if getattr(args, "abs_rank", False):
        values["rank_by"] = "abs"
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_provenance(out_dir: Path, stage: str, cfg: RunConfig, inputs: dict[str, str]) -> None:
    lines = [f"stage = {stage}", f"version = {_version()}"]
    lines += [f"input.{k} = {v}" for k, v in sorted(inputs.items())]
    lines += cfg.lines()
    (out_dir / PROVENANCE_FILE).write_text("\n".join(lines) + "\n")


def read_provenance(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _clean(v: float):
    v = float(v)
    return v if np.isfinite(v) else None


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ValidationError(f"{what} not found: {path}", code="missing_input")
    return path


# --------------------------------------------------------------------------
# dataset layout

CLINICAL_CSV = "clinical.csv"
VOXELS = "voxels.nfvx"
GM_TABLE = "gm_regions.csv"
WM_TABLE = "wm_regions.csv"
ATLAS_CSV = "atlas.csv"
TRUTH_JSON = "ground_truth.json"


def _records_in_order(records, order: Sequence[str]):
    by_id = {r.subject_id: r for r in records}
    missing = [s for s in order if s not in by_id]
    if missing:
        raise ValidationError(f"no clinical record for {missing[:5]}", code="missing_record")
    return [by_id[s] for s in order]


def _read_region_tables(data: Path) -> tuple[RegionalVolumeTable, RegionalVolumeTable]:
    gids, gnames, gvals = nio.read_region_table(_require(data / GM_TABLE, "GM region table"))
    wids, wnames, wvals = nio.read_region_table(_require(data / WM_TABLE, "WM region table"))
    if gnames != wnames:
        raise ValidationError("GM and WM region tables list different regions", code="region_mismatch")
    if gids != wids:
        raise ValidationError("GM and WM region tables list different subjects", code="subject_mismatch")
    return RegionalVolumeTable(gvals, gnames, "GM", gids), RegionalVolumeTable(wvals, wnames, "WM", wids)


def _read_subtypes(path: Path) -> dict[str, str]:
    header, rows = nio.read_table(_require(path, "subtype table"))
    if header != ["subject_id", "label", "selected_by"]:
        raise ValidationError(f"{path}: header must be subject_id,label,selected_by", code="bad_header")
    return {r[0]: r[1] for r in rows}


# --------------------------------------------------------------------------
# stages


def cmd_synth(out: Path, cfg: RunConfig) -> None:
    cohort = generate_cohort(cfg.synth_config())
    out.mkdir(parents=True, exist_ok=True)
    nio.write_clinical_csv(out / CLINICAL_CSV, cohort.clinical)
    nio.write_voxel_matrix(out / VOXELS, cohort.matrix)
    nio.write_region_table(out / GM_TABLE, cohort.gm_table.subject_ids, cohort.region_names, cohort.gm_table.values)
    nio.write_region_table(out / WM_TABLE, cohort.wm_table.subject_ids, cohort.region_names, cohort.wm_table.values)
    nio.write_atlas_csv(out / ATLAS_CSV, range(1, len(cohort.region_names) + 1), cohort.region_names, cohort.hemispheres)
    (out / TRUTH_JSON).write_text(cohort.truth.to_json() + "\n")
    write_provenance(out, "synth", cfg, {})


def cmd_stats(data: Path, out: Path, cfg: RunConfig) -> None:
    """Group summary table: age t-test, gender chi-square, clinical means."""
    records = impute_clinical(nio.read_clinical_csv(_require(data / CLINICAL_CSV, "clinical CSV")), cfg.winsor_fraction)
    hc = [r for r in records if r.group == "HC"]
    pd = [r for r in records if r.group == "PD"]
    if not hc or not pd:
        raise ValidationError("both HC and PD groups must be non-empty", code="empty_group")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    age = student_t([r.age for r in hc], [r.age for r in pd])
    rows.append(["age", "student_t", age.statistic, age.df, age.p_value])
    table = [[sum(r.gender == g for r in grp) for g in ("M", "F")] for grp in (hc, pd)]
    chi = chi_square_2x2(table)
    rows.append(["gender", "chi_square", chi.statistic, chi.df, chi.p_value])
    nio.write_table(out / "group_tests.csv", ["variable", "test", "statistic", "df", "p"], rows)
    summary = []
    for var in ("age", "updrs_off", "updrs_on", "hy", "age_at_onset"):
        for label, grp in (("HC", hc), ("PD", pd)):
            vals = np.array([getattr(r, var) for r in grp if getattr(r, var) is not None], dtype=float)
            if vals.size == 0:
                continue
            sd = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
            summary.append([var, label, int(vals.size), float(vals.mean()), sd])
    nio.write_table(out / "group_summary.csv", ["variable", "group", "n", "mean", "sd"], summary)
    counts = [["HC", "M", table[0][0]], ["HC", "F", table[0][1]], ["PD", "M", table[1][0]], ["PD", "F", table[1][1]]]
    nio.write_table(out / "gender_counts.csv", ["group", "gender", "n"], counts)
    write_provenance(out, "stats", cfg, {"data": str(data)})


def cmd_fuse(data: Path, out: Path, cfg: RunConfig) -> None:
    matrix = nio.read_voxel_matrix(_require(data / VOXELS, "voxel matrix"))
    records = nio.read_clinical_csv(_require(data / CLINICAL_CSV, "clinical CSV"))
    ordered = _records_in_order(records, matrix.subject_order)
    residual = regress_covariates(matrix, CovariateDesign.from_records(ordered))
    report = screen_outliers(residual, cfg.outlier_sd)
    dropped: list[str] = []
    if cfg.drop_outliers and report.flagged:
        dropped = report.flagged
        residual = drop_subjects(residual, dropped)
    groups = [r.group for r in _records_in_order(records, residual.subject_order)]
    decomp = decompose_joint(residual, n_components=cfg.components, seed=cfg.seed)
    ranking = rank_components(decomp.loadings, groups, cfg.fdr_q)

    out.mkdir(parents=True, exist_ok=True)
    nio.write_loadings_csv(out / "loadings.csv", decomp.subject_order, decomp.loadings)
    comp_ids = [f"comp_{c + 1}" for c in range(decomp.n_components)]
    nio.write_nfvx(out / "sources.nfvx", decomp.sources, decomp.gm_width, decomp.wm_width, comp_ids)
    nio.write_table(out / "ranking.csv", ["component", "t", "p", "p_fdr", "hedges_g", "rank"], ranking.rows())
    nio.write_table(
        out / "outliers.csv",
        ["subject_id", "correlation", "flagged", "code", "dropped"],
        (
            [s, float(r), int(f), code, int(s in dropped)]
            for s, r, f, code in zip(report.subject_ids, report.correlations, report.flags, report.codes)
        ),
    )
    gm_src, wm_src = split_sources(decomp)
    zrows = []
    for c in range(decomp.n_components):
        for tissue, part in (("GM", gm_src[c]), ("WM", wm_src[c])):
            try:
                z = zmap_threshold(part, 3.5, c)
                zrows.append([c + 1, tissue, int(z.positive.sum()), int(z.negative.sum())])
            except ValidationError:
                zrows.append([c + 1, tissue, 0, 0])
    nio.write_table(out / "zmaps.csv", ["component", "tissue", "n_positive", "n_negative"], zrows)
    _dump_json(
        out / "fuse_summary.json",
        {
            "components": decomp.n_components,
            "converged": bool(decomp.converged),
            "iterations": int(decomp.iterations),
            "explained_variance_ratio": _clean(decomp.explained_variance_ratio),
            "n_subjects": len(decomp.subject_order),
            "dropped_subjects": dropped,
            "significant_components": [c + 1 for c in ranking.order],
            "ranking_errors": {str(c + 1): msg for c, msg in sorted(ranking.errors.items())},
        },
    )
    write_provenance(out, "fuse", cfg, {"data": str(data)})


def _read_ranking(path: Path, q: float) -> ComponentRanking:
    header, rows = nio.read_table(_require(path, "ranking CSV"))
    if header != ["component", "t", "p", "p_fdr", "hedges_g", "rank"]:
        raise ValidationError(f"{path}: unexpected ranking header", code="bad_header")
    t = np.array([float(r[1]) for r in rows])
    p = np.array([float(r[2]) for r in rows])
    p_fdr = np.array([float(r[3]) for r in rows])
    g = np.array([float(r[4]) for r in rows])
    ranked = sorted((int(r[5]), int(r[0]) - 1) for r in rows if r[5] != "")
    significant = np.zeros(len(rows), dtype=bool)
    significant[[c for _, c in ranked]] = True
    return ComponentRanking(t, p, p_fdr, g, significant, [c for _, c in ranked], q)


def cmd_subtype(data: Path, fuse: Path, out: Path, cfg: RunConfig) -> None:
    ids, loadings = nio.read_loadings_csv(_require(fuse / "loadings.csv", "loadings CSV"))
    ranking = _read_ranking(fuse / "ranking.csv", cfg.fdr_q)
    if ranking.t.size != loadings.shape[1]:
        raise ValidationError("ranking and loadings disagree on the component count", code="shape_mismatch")
    records = impute_clinical(nio.read_clinical_csv(_require(data / CLINICAL_CSV, "clinical CSV")), cfg.winsor_fraction)
    ordered = _records_in_order(records, ids)
    groups = [r.group for r in ordered]
    assignment, comps = subtype_from_loadings(
        loadings, ids, groups, ranking, mean_population=cfg.mean_population
    )
    corr, notices = correlate_loadings_clinical(assignment, loadings, ids, comps[:2], ordered)
    anova = subtype_anova(assignment, ordered)

    out.mkdir(parents=True, exist_ok=True)
    nio.write_table(
        out / "subtypes.csv",
        ["subject_id", "label", "selected_by"],
        ([s, assignment.labels[s], assignment.provenance[s]] for s in assignment.labels),
    )
    nio.write_table(
        out / "correlations.csv",
        ["subtype", "component", "variable", "r", "p", "n"],
        ([c.subtype, c.component, c.variable, c.r, c.p, c.n] for c in corr),
    )
    nio.write_table(out / "anova.csv", ["variable", "F", "p"], ([v, f, p] for v, (f, p) in anova.items()))
    _dump_json(
        out / "subtype_summary.json",
        {
            "components": [c + 1 for c in comps],
            "counts": assignment.counts(),
            "mean_population": cfg.mean_population,
            "notices": notices,
        },
    )
    write_provenance(out, "subtype", cfg, {"data": str(data), "fuse": str(fuse)})


def _group_members(label: str, data: Path, subtypes: Optional[Path]) -> list[str]:
    if label in ("HC", "PD"):
        records = nio.read_clinical_csv(_require(data / CLINICAL_CSV, "clinical CSV"))
        return [r.subject_id for r in records if r.group == label]
    if subtypes is None:
        raise UsageError(f"group {label!r} needs --subtypes")
    labels = _read_subtypes(subtypes / "subtypes.csv")
    return [s for s, lab in labels.items() if lab == label]


def _atlas(data: Path, names: Sequence[str]) -> tuple[list[int], list[str], list[str]]:
    path = data / ATLAS_CSV
    if not path.exists():
        return list(range(1, len(names) + 1)), list(names), [""] * len(names)
    ids, anames, hemi = nio.read_atlas_csv(path)
    if list(anames) != list(names):
        raise ValidationError("atlas regions do not match the region tables", code="region_mismatch")
    return ids, anames, hemi


def _partition_labels(cfg: RunConfig, hemispheres: Sequence[str]) -> Optional[list[int]]:
    if cfg.partition == "modularity":
        return None
    sides = sorted(set(hemispheres))
    return [sides.index(h) for h in hemispheres]


def _write_metrics(out: Path, graph: RegionGraph, region_ids, hemispheres, cfg: RunConfig) -> None:
    names = graph.region_names
    report = compute_metrics(
        graph,
        seed=cfg.seed,
        n_null=cfg.n_null,
        hub_mode=cfg.hub_mode,
        partition=_partition_labels(cfg, hemispheres),
    )
    payload = report.to_dict(names)
    payload["partition"] = cfg.partition
    payload["hub_mode"] = cfg.hub_mode
    _dump_json(out / "metrics.json", payload)
    deg = report.nodal["degree"]
    btw = report.nodal["betweenness"]
    nio.write_table(
        out / "hubs.csv",
        ["region", "degree", "betweenness", "criteria"],
        ([names[i], int(deg[i]), float(btw[i]), ";".join(report.hubs.criteria[i])] for i in report.hubs.hubs),
    )
    isolated = set(graph.isolated)
    nio.write_table(
        out / "nodes.csv",
        ["region", "name", "degree", "isolated"],
        ([region_ids[i], names[i], int(deg[i]), int(i in isolated)] for i in range(graph.n_nodes)),
    )


def cmd_network(data: Path, group: str, out: Path, cfg: RunConfig, subtypes: Optional[Path] = None) -> None:
    if group not in GROUP_LABELS:
        raise UsageError(f"group must be one of {', '.join(GROUP_LABELS)}")
    members = _group_members(group, data, subtypes)
    if len(members) < 3:
        raise ValidationError(
            f"group {group} has {len(members)} subject(s); at least 3 are needed for a network",
            code="too_few_subjects",
        )
    gm, wm = _read_region_tables(data)
    gm, wm = gm.subset(members), wm.subset(members)
    region_ids, names, hemi = _atlas(data, gm.region_names)
    k = cfg.k if cfg.k is not None else default_k(gm.n_regions)
    assoc = build_association_matrix(gm, wm)
    adj = mknn_threshold(assoc, k, rank_by=cfg.rank_by)
    graph = collapse_region_graph(adj, names)

    out.mkdir(parents=True, exist_ok=True)
    nio.write_table(
        out / "association.csv",
        ["gm_region", *names],
        ([names[i], *map(float, assoc.entries[i])] for i in range(len(names))),
    )
    nio.write_table(out / "edges.csv", ["gm_region", "wm_region", "weight", "mutual"], edge_rows(assoc, adj))
    nio.write_table(out / "region_graph.csv", ["region_i", "region_j"], ([names[i], names[j]] for i, j in graph.edges))
    _write_metrics(out, graph, region_ids, hemi, cfg)
    inputs = {"data": str(data), "group": group, "k_used": str(k), "n_subjects": str(len(members))}
    if subtypes is not None:
        inputs["subtypes"] = str(subtypes)
    write_provenance(out, "network", cfg, inputs)


def read_region_graph(path: Path, names: Sequence[str]) -> RegionGraph:
    header, rows = nio.read_table(_require(path, "region graph CSV"))
    if header != ["region_i", "region_j"]:
        raise ValidationError(f"{path}: header must be region_i,region_j", code="bad_header")
    index = {n: i for i, n in enumerate(names)}
    a = np.zeros((len(names), len(names)), dtype=bool)
    for row in rows:
        try:
            i, j = index[row[0]], index[row[1]]
        except KeyError as exc:
            raise ValidationError(f"{path}: unknown region {exc.args[0]!r}", code="unknown_region") from None
        if i == j:
            raise ValidationError(f"{path}: self-loop on {row[0]!r}", code="self_loop")
        a[i, j] = a[j, i] = True
    return RegionGraph(a, list(names))


def cmd_metrics(graph_csv: Path, atlas_csv: Path, out: Path, cfg: RunConfig) -> None:
    region_ids, names, hemi = nio.read_atlas_csv(_require(atlas_csv, "atlas CSV"))
    graph = read_region_graph(graph_csv, names)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(out, graph, region_ids, hemi, cfg)
    write_provenance(out, "metrics", cfg, {"graph": str(graph_csv), "atlas": str(atlas_csv)})


def cmd_ubnin(data: Path, out: Path, cfg: RunConfig, subtypes: Optional[Path] = None) -> None:
    gm, wm = _read_region_tables(data)
    labels: dict[str, str] = {}
    clinical = data / CLINICAL_CSV
    if clinical.exists():
        labels = {r.subject_id: r.group for r in nio.read_clinical_csv(clinical)}
    if subtypes is not None:
        labels.update(_read_subtypes(subtypes / "subtypes.csv"))
    k = cfg.k if cfg.k is not None else default_k(gm.n_regions)
    rows = []
    for s, g_row, w_row in zip(gm.subject_ids, gm.values, wm.values):
        code = subject_ubnin(s, g_row, w_row, k)
        rows.append([s, labels.get(s, ""), code.decimal, code.bit_width, code.k])
    out.mkdir(parents=True, exist_ok=True)
    nio.write_table(out / "ubnin.csv", ["subject_id", "subtype", "code_decimal", "bit_width", "k"], rows)
    distinct = len({r[2] for r in rows})
    _dump_json(out / "ubnin_summary.json", {"n_subjects": len(rows), "distinct_codes": distinct, "bit_width": rows[0][3] if rows else 0, "k": k})
    inputs = {"data": str(data)}
    if subtypes is not None:
        inputs["subtypes"] = str(subtypes)
    write_provenance(out, "ubnin", cfg, inputs)


def _nodal_from_metrics(path: Path) -> dict[str, np.ndarray]:
    try:
        payload = json.loads(_require(path, "metrics JSON").read_text())
        nodal = payload["nodal"]
    except (json.JSONDecodeError, KeyError, TypeError):
        raise ValidationError(f"{path}: not a metrics JSON file", code="bad_metrics") from None
    out = {}
    for name in NODAL_FIELDS:
        if name in nodal:
            vals = [v for v in nodal[name].values() if v is not None]
            out[name] = np.array(vals, dtype=float)
    return out


def cmd_permtest(metrics_a: Path, metrics_b: Path, out: Path, cfg: RunConfig) -> None:
    a = _nodal_from_metrics(metrics_a)
    b = _nodal_from_metrics(metrics_b)
    rows = []
    for name in NODAL_FIELDS:
        if name not in a or name not in b:
            continue
        res = permutation_test(a[name], b[name], statistic="mean_diff", n_perm=cfg.n_perm, seed=cfg.seed)
        rows.append([name, res.statistic, res.p_value, cfg.n_perm, res.kind])
    out.mkdir(parents=True, exist_ok=True)
    nio.write_table(out / "permtest.csv", ["metric", "statistic", "p", "n_perm", "kind"], rows)
    write_provenance(out, "permtest", cfg, {"metrics_a": str(metrics_a), "metrics_b": str(metrics_b)})


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_report(run: Path, out: Path, cfg: RunConfig) -> list[str]:
    """Inventory a run directory and emit tidy plot-data tables.

    Returns the warnings, which are also written to ``warnings.txt``.
    """
    if not run.is_dir():
        raise ValidationError(f"run directory not found: {run}", code="missing_input")
    out_resolved = out.resolve()
    stages: dict[str, list[Path]] = {}
    for prov in sorted(run.rglob(PROVENANCE_FILE)):
        d = prov.parent
        if d.resolve() == out_resolved:
            continue
        stage = read_provenance(prov).get("stage", "")
        if stage == "report":
            continue
        stages.setdefault(stage, []).append(d)

    warnings = [f"missing stage: {s}" for s in ("synth", "fuse", "subtype", "network", "ubnin") if s not in stages]
    artifacts = []
    for stage in sorted(stages):
        for d in stages[stage]:
            for f in sorted(p for p in d.iterdir() if p.is_file()):
                artifacts.append([stage, d.relative_to(run).as_posix() or ".", f.name, f.stat().st_size, _sha256(f)])

    out.mkdir(parents=True, exist_ok=True)
    nio.write_table(out / "artifacts.csv", ["stage", "directory", "artifact", "bytes", "sha256"], artifacts)

    data_dir = stages.get("synth", [None])[0]
    clinical = {}
    if data_dir is not None and (data_dir / CLINICAL_CSV).exists():
        clinical = {r.subject_id: r for r in nio.read_clinical_csv(data_dir / CLINICAL_CSV)}
    labels: dict[str, str] = {}
    if "subtype" in stages:
        labels = _read_subtypes(stages["subtype"][0] / "subtypes.csv")

    if "fuse" in stages:
        fuse = stages["fuse"][0]
        ids, loadings = nio.read_loadings_csv(fuse / "loadings.csv")
        ranking = _read_ranking(fuse / "ranking.csv", cfg.fdr_q)
        comps = ranking.order[:2]
        violin, scatter = [], []
        for c in comps:
            for s, row in zip(ids, loadings):
                group = clinical[s].group if s in clinical else ""
                violin.append([s, group, labels.get(s, group), c + 1, float(row[c])])
                rec = clinical.get(s)
                if rec is None or rec.group != "PD":
                    continue
                for var in ("updrs_off", "updrs_on", "hy", "age_at_onset", "age"):
                    value = getattr(rec, var)
                    if value is not None:
                        scatter.append([s, labels.get(s, ""), c + 1, var, float(row[c]), float(value)])
        nio.write_table(out / "loadings_by_group.csv", ["subject_id", "group", "subtype", "component", "loading"], violin)
        nio.write_table(
            out / "loading_vs_clinical.csv",
            ["subject_id", "subtype", "component", "variable", "loading", "value"],
            scatter,
        )
        if not comps:
            warnings.append("fuse: no significant components to plot")
    else:
        warnings.append("no loadings: skipped loading plot data")

    scalar_rows, nodal_rows = [], []
    for stage in ("network", "metrics"):
        for d in stages.get(stage, []):
            mpath = d / "metrics.json"
            if not mpath.exists():
                warnings.append(f"{d.relative_to(run).as_posix()}: metrics.json missing")
                continue
            payload = json.loads(mpath.read_text())
            label = read_provenance(d / PROVENANCE_FILE).get("input.group", d.name)
            net = d.relative_to(run).as_posix()
            for key, value in payload["scalars"].items():
                scalar_rows.append([net, label, key, "" if value is None else float(value)])
            for metric, per_region in payload["nodal"].items():
                for region, value in per_region.items():
                    nodal_rows.append([net, label, region, metric, "" if value is None else float(value)])
    nio.write_table(out / "network_scalars.csv", ["network", "group", "metric", "value"], scalar_rows)
    nio.write_table(out / "nodal_metrics.csv", ["network", "group", "region", "metric", "value"], nodal_rows)
    (out / "warnings.txt").write_text("".join(f"{w}\n" for w in warnings))
    write_provenance(out, "report", cfg, {"run": str(run)})
    return warnings


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="neurofuse", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic cohort dataset")
    _common(p)

    p = sub.add_parser("stats", help="group summary tests on the clinical table")
    _common(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("fuse", help="covariate regression, joint ICA, component ranking")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--components", type=int)
    p.add_argument("--fdr-q", type=float)
    p.add_argument("--drop-outliers", action="store_true")

    p = sub.add_parser("subtype", help="threshold top components into patient subtypes")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--fuse", required=True)
    p.add_argument("--fdr-q", type=float)

    p = sub.add_parser("network", help="build and analyse one group's cross-tissue network")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--group", required=True, choices=GROUP_LABELS)
    p.add_argument("--subtypes", help="subtype stage directory (for A, B, AB, Unassigned)")
    p.add_argument("--k", type=int)
    p.add_argument("--abs-rank", action="store_true", help="rank associations by |r|")
    p.add_argument("--n-null", type=int)
    p.add_argument("--hub-mode", choices=("either", "both"))
    p.add_argument("--partition", choices=("modularity", "hemisphere"))

    p = sub.add_parser("metrics", help="graph metrics for a region-graph CSV")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--atlas", required=True)
    p.add_argument("--n-null", type=int)
    p.add_argument("--hub-mode", choices=("either", "both"))
    p.add_argument("--partition", choices=("modularity", "hemisphere"))

    p = sub.add_parser("ubnin", help="per-subject network integer codes")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--subtypes")
    p.add_argument("--k", type=int)

    p = sub.add_parser("permtest", help="permutation tests on nodal metrics of two networks")
    _common(p)
    p.add_argument("metrics_a")
    p.add_argument("metrics_b")
    p.add_argument("--n-perm", type=int)

    p = sub.add_parser("report", help="artifact inventory and plot-data tables for a run")
    _common(p)
    p.add_argument("--run", required=True)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = build_config(args)
        out = Path(args.out)
        cmd = args.command
        if cmd == "synth":
            cmd_synth(out, cfg)
        elif cmd == "stats":
            cmd_stats(Path(args.data), out, cfg)
        elif cmd == "fuse":
            cmd_fuse(Path(args.data), out, cfg)
        elif cmd == "subtype":
            cmd_subtype(Path(args.data), Path(args.fuse), out, cfg)
        elif cmd == "network":
            cmd_network(Path(args.data), args.group, out, cfg, Path(args.subtypes) if args.subtypes else None)
        elif cmd == "metrics":
            cmd_metrics(Path(args.graph), Path(args.atlas), out, cfg)
        elif cmd == "ubnin":
            cmd_ubnin(Path(args.data), out, cfg, Path(args.subtypes) if args.subtypes else None)
        elif cmd == "permtest":
            cmd_permtest(Path(args.metrics_a), Path(args.metrics_b), out, cfg)
        elif cmd == "report":
            for w in cmd_report(Path(args.run), out, cfg):
                print(f"warning: {w}", file=sys.stderr)
    except UsageError as exc:
        print(f"neurofuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"neurofuse: invalid data: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"neurofuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NeurofuseError as exc:
        print(f"neurofuse: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
