"""Readers and writers for the on-disk formats.

NFVX binary layout (little-endian)::

    b"NFVX" | u32 version=1 | u32 rows | u64 gm_cols | u64 wm_cols | f32[rows * cols]

Row labels live in a sidecar text file next to the binary, one id per line.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .ingest import CLINICAL_FIELDS, ClinicalRecord, VoxelFeatureMatrix

NFVX_MAGIC = b"NFVX"
NFVX_VERSION = 1
_HEADER = struct.Struct("<4sIIQQ")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".subjects.txt")


def write_nfvx(path, values: np.ndarray, gm_cols: int, wm_cols: int, row_ids: Sequence[str]) -> None:
    values = np.asarray(values)
    rows, cols = values.shape
    if cols != gm_cols + wm_cols:
        raise ValidationError("column count does not match gm_cols + wm_cols")
    if len(row_ids) != rows:
        raise ValidationError("row id count does not match rows")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(NFVX_MAGIC, NFVX_VERSION, rows, gm_cols, wm_cols))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())
    sidecar_path(path).write_text("".join(f"{s}\n" for s in row_ids))


def read_nfvx_raw(path) -> tuple[np.ndarray, int, int, list[str]]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValidationError(f"{path}: truncated header", code="truncated")
    magic, version, rows, gm_cols, wm_cols = _HEADER.unpack_from(blob)
    if magic != NFVX_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}", code="bad_magic")
    if version != NFVX_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}", code="bad_version")
    n = rows * (gm_cols + wm_cols)
    payload = blob[_HEADER.size :]
    if len(payload) != 4 * n:
        raise ValidationError(
            f"{path}: expected {4 * n} payload bytes, found {len(payload)}", code="truncated"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(float).reshape(rows, gm_cols + wm_cols)
    side = sidecar_path(path)
    if not side.exists():
        raise ValidationError(f"{side}: missing subject sidecar", code="missing_sidecar")
    ids = [line.strip() for line in side.read_text().splitlines() if line.strip()]
    if len(ids) != rows:
        raise ValidationError(f"{side}: {len(ids)} ids for {rows} rows", code="sidecar_mismatch")
    return values, int(gm_cols), int(wm_cols), ids


def write_voxel_matrix(path, matrix: VoxelFeatureMatrix) -> None:
    write_nfvx(path, matrix.values, matrix.gm_width, matrix.wm_width, matrix.subject_order)


def read_voxel_matrix(path) -> VoxelFeatureMatrix:
    values, gm, wm, ids = read_nfvx_raw(path)
    return VoxelFeatureMatrix(values, gm, wm, ids)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def _parse_opt(cell: str) -> Optional[float]:
    cell = cell.strip()
    return None if cell == "" else float(cell)


def write_clinical_csv(path, records: Iterable[ClinicalRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLINICAL_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in CLINICAL_FIELDS])


def read_clinical_csv(path) -> list[ClinicalRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != list(CLINICAL_FIELDS):
            raise ValidationError(
                f"{path}: header must be {','.join(CLINICAL_FIELDS)}", code="bad_header"
            )
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                out.append(
                    ClinicalRecord(
                        subject_id=row["subject_id"],
                        group=row["group"],
                        age=float(row["age"]),
                        gender=row["gender"],
                        updrs_off=_parse_opt(row["updrs_off"]),
                        updrs_on=_parse_opt(row["updrs_on"]),
                        hy=_parse_opt(row["hy"]),
                        age_at_onset=_parse_opt(row["age_at_onset"]),
                    )
                )
            except ValueError as exc:
                raise ValidationError(f"{path}:{line}: {exc}", code="bad_row") from None
    return out


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file", code="empty") from None
        return header, [row for row in reader if row]


def write_loadings_csv(path, subject_ids: Sequence[str], loadings: np.ndarray) -> None:
    C = loadings.shape[1]
    header = ["subject_id"] + [f"comp_{c + 1}" for c in range(C)]
    write_table(path, header, ([s, *map(float, row)] for s, row in zip(subject_ids, loadings)))


def read_loadings_csv(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_table(path)
    if not header or header[0] != "subject_id":
        raise ValidationError(f"{path}: first column must be subject_id", code="bad_header")
    ids = [r[0] for r in rows]
    return ids, np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)


def write_region_table(path, subject_ids: Sequence[str], region_names: Sequence[str], values: np.ndarray) -> None:
    write_table(path, ["subject_id", *region_names], ([s, *map(float, row)] for s, row in zip(subject_ids, values)))


def read_region_table(path) -> tuple[list[str], list[str], np.ndarray]:
    header, rows = read_table(path)
    if not header or header[0] != "subject_id":
        raise ValidationError(f"{path}: first column must be subject_id", code="bad_header")
    values = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
    return [r[0] for r in rows], header[1:], values


def write_atlas_csv(path, region_ids: Sequence[int], names: Sequence[str], hemispheres: Sequence[str]) -> None:
    write_table(path, ["region_id", "region_name", "hemisphere"], zip(region_ids, names, hemispheres))


def read_atlas_csv(path) -> tuple[list[int], list[str], list[str]]:
    header, rows = read_table(path)
    if header != ["region_id", "region_name", "hemisphere"]:
        raise ValidationError(f"{path}: header must be region_id,region_name,hemisphere", code="bad_header")
    return [int(r[0]) for r in rows], [r[1] for r in rows], [r[2] for r in rows]
