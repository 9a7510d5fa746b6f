from __future__ import annotations

import numpy as np
import pytest

from neurofuse import io as nio
from neurofuse.errors import ValidationError
from neurofuse.ingest import ClinicalRecord, VoxelFeatureMatrix


def test_nfvx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(4, 7)).astype(np.float32).astype(float)
    m = VoxelFeatureMatrix(values, 3, 4, ["a", "b", "c", "d"])
    path = tmp_path / "x.nfvx"
    nio.write_voxel_matrix(path, m)
    back = nio.read_voxel_matrix(path)
    np.testing.assert_array_equal(back.values, values)
    assert (back.gm_width, back.wm_width, back.subject_order) == (3, 4, ["a", "b", "c", "d"])


def test_nfvx_header_layout(tmp_path):
    path = tmp_path / "x.nfvx"
    nio.write_nfvx(path, np.ones((2, 3)), 1, 2, ["a", "b"])
    blob = path.read_bytes()
    assert blob[:4] == b"NFVX"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 2
    assert int.from_bytes(blob[12:20], "little") == 1
    assert int.from_bytes(blob[20:28], "little") == 2
    assert len(blob) == 28 + 2 * 3 * 4
    assert np.frombuffer(blob[28:], "<f4").tolist() == [1.0] * 6


def test_truncated_nfvx(tmp_path):
    path = tmp_path / "x.nfvx"
    nio.write_nfvx(path, np.ones((2, 3)), 1, 2, ["a", "b"])
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ValidationError, match="expected"):
        nio.read_voxel_matrix(path)
    path.write_bytes(b"NFV")
    with pytest.raises(ValidationError, match="truncated"):
        nio.read_voxel_matrix(path)


def test_bad_magic_and_missing_sidecar(tmp_path):
    path = tmp_path / "x.nfvx"
    nio.write_nfvx(path, np.ones((2, 3)), 1, 2, ["a", "b"])
    blob = path.read_bytes()
    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValidationError, match="magic"):
        nio.read_voxel_matrix(path)
    path.write_bytes(blob)
    nio.sidecar_path(path).unlink()
    with pytest.raises(ValidationError, match="sidecar"):
        nio.read_voxel_matrix(path)


def test_clinical_csv_round_trip(tmp_path):
    recs = [
        ClinicalRecord("p1", "PD", 61.5, "F", 30.0, None, 2.5, 55.0),
        ClinicalRecord("h1", "HC", 48.0, "M"),
    ]
    path = tmp_path / "c.csv"
    nio.write_clinical_csv(path, recs)
    assert path.read_text().splitlines()[0] == "subject_id,group,age,gender,updrs_off,updrs_on,hy,age_at_onset"
    assert nio.read_clinical_csv(path) == recs


def test_clinical_csv_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("id,group\n")
    with pytest.raises(ValidationError, match="header"):
        nio.read_clinical_csv(path)


def test_loadings_and_region_tables(tmp_path):
    values = np.array([[1.5, -2.0], [0.25, 3.0]])
    nio.write_loadings_csv(tmp_path / "l.csv", ["a", "b"], values)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "subject_id,comp_1,comp_2"
    ids, back = nio.read_loadings_csv(tmp_path / "l.csv")
    assert ids == ["a", "b"]
    np.testing.assert_array_equal(back, values)
    nio.write_region_table(tmp_path / "r.csv", ["a", "b"], ["L1", "R1"], values)
    ids, names, back = nio.read_region_table(tmp_path / "r.csv")
    assert names == ["L1", "R1"]
    np.testing.assert_array_equal(back, values)
    nio.write_atlas_csv(tmp_path / "atlas.csv", [1, 2], ["L1", "R1"], ["L", "R"])
    assert nio.read_atlas_csv(tmp_path / "atlas.csv") == ([1, 2], ["L1", "R1"], ["L", "R"])
