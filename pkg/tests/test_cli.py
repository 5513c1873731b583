"""CLI subcommands and the exit-code contract."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from featurespace.cli import main

ORIGINAL_MANIFEST = """
space_tag: original
features:
  - name: Wilderness area
    dtype: categorical
    categories: [Rawah, Neota, Comache Peak, Cache la Poudre]
    properties: [readable, understandable, meaningful, model_compatible]
  - name: Elevation
    dtype: numeric
    unit: m
    properties: [readable, understandable, meaningful, model_compatible]
"""

ENCODE_PIPELINE = """
input_manifest: original.yaml
direction: to_model_ready
steps:
  - kind: one_hot_encode
    config:
      feature: Wilderness area
      name_template: "Area {category}"
  - kind: standardize
    config: {feature: Elevation, mean: 2959.36, scale: 279.98}
"""

DATA_CSV = """Elevation,Wilderness area
3179,Comache Peak
3123,Comache Peak
2157,Rawah
"""


@pytest.fixture()
def workspace(tmp_path):
    (tmp_path / "original.yaml").write_text(ORIGINAL_MANIFEST, encoding="utf-8")
    (tmp_path / "pipeline.yaml").write_text(ENCODE_PIPELINE, encoding="utf-8")
    data = "Wilderness area,Elevation\n" \
           "Comache Peak,3179\nComache Peak,3123\nRawah,2157\n"
    (tmp_path / "data.csv").write_text(data, encoding="utf-8")
    return tmp_path


def read_rows(path: Path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_transform_and_idempotent_outputs(workspace):
    out = workspace / "out.csv"
    lineage = workspace / "lineage.json"
    report = workspace / "report.txt"
    argv = ["transform", "--pipeline", str(workspace / "pipeline.yaml"),
            "--data", str(workspace / "data.csv"), "--out", str(out),
            "--lineage", str(lineage), "--report", str(report)]
    assert main(argv) == 0
    first = out.read_bytes()
    rows = read_rows(out)
    assert rows[0] == ["Area Rawah", "Area Neota", "Area Comache Peak",
                       "Area Cache la Poudre", "Elevation"]
    assert rows[1][2] == "TRUE"
    assert json.loads(lineage.read_text())
    assert "exact" in report.read_text()
    assert main(argv) == 0
    assert out.read_bytes() == first  # byte-identical rerun


def test_transform_identity_pipeline(workspace):
    doc = "input_manifest: original.yaml\ndirection: to_interpretable\nsteps: []\n"
    (workspace / "identity.yaml").write_text(doc, encoding="utf-8")
    out = workspace / "same.csv"
    assert main(["transform", "--pipeline", str(workspace / "identity.yaml"),
                 "--data", str(workspace / "data.csv"), "--out", str(out)]) == 0
    assert read_rows(out) == read_rows(workspace / "data.csv")


def test_transform_missing_column_exits_1(workspace, capsys):
    (workspace / "short.csv").write_text("Wilderness area\nRawah\n",
                                         encoding="utf-8")
    code = main(["transform", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--data", str(workspace / "short.csv"),
                 "--out", str(workspace / "x.csv")])
    assert code == 1
    assert "Elevation" in capsys.readouterr().err


def test_transform_nonexistent_path_exits_1(workspace):
    assert main(["transform", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--data", str(workspace / "nope.csv"),
                 "--out", str(workspace / "x.csv")]) == 1


def test_kernel_runtime_error_exits_2(workspace):
    doc = """
input_manifest: original.yaml
direction: to_model_ready
steps:
  - kind: statistical_bin
    config: {feature: Elevation, bins: 2, min: 0, max: 100, labels: [lo, hi]}
"""
    (workspace / "bin.yaml").write_text(doc, encoding="utf-8")
    code = main(["transform", "--pipeline", str(workspace / "bin.yaml"),
                 "--data", str(workspace / "data.csv"),
                 "--out", str(workspace / "x.csv")])
    assert code == 2


def test_fit_then_transform_with_fitted_document(workspace):
    doc = """
input_manifest: original.yaml
direction: to_model_ready
steps:
  - kind: standardize
    config: {feature: Elevation}
  - kind: one_hot_encode
    config: {feature: Wilderness area}
"""
    (workspace / "fitme.yaml").write_text(doc, encoding="utf-8")
    fitted_path = workspace / "fitme.fitted.json"
    assert main(["fit", "--pipeline", str(workspace / "fitme.yaml"),
                 "--data", str(workspace / "data.csv"),
                 "--out", str(fitted_path)]) == 0
    doc_data = json.loads(fitted_path.read_text())
    assert doc_data["document"] == "fitted_pipeline"
    assert doc_data["steps"][0]["fit_state"]["mean"] == pytest.approx(2819.6667,
                                                                      abs=1e-3)
    out = workspace / "fitted_out.csv"
    assert main(["transform", "--pipeline", str(fitted_path),
                 "--data", str(workspace / "data.csv"), "--out", str(out)]) == 0
    assert len(read_rows(out)) == 4


def test_invert_roundtrip_through_cli(workspace):
    encoded = workspace / "encoded.csv"
    assert main(["transform", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--data", str(workspace / "data.csv"),
                 "--out", str(encoded)]) == 0
    inverse_path = workspace / "inverse.json"
    assert main(["invert", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--out", str(inverse_path)]) == 0
    restored = workspace / "restored.csv"
    assert main(["transform", "--pipeline", str(inverse_path),
                 "--data", str(encoded), "--out", str(restored)]) == 0
    original = read_rows(workspace / "data.csv")
    back = read_rows(restored)
    assert back[0] == original[0]
    for row_a, row_b in zip(original[1:], back[1:]):
        assert row_a[0] == row_b[0]
        assert float(row_a[1]) == pytest.approx(float(row_b[1]), abs=1e-9)


def test_invert_lossy_exits_3(workspace, capsys):
    doc = """
input_manifest: original.yaml
direction: to_interpretable
steps:
  - kind: semantic_bin
    config: {feature: Elevation, boundaries: [2500], labels: [low, high]}
"""
    (workspace / "lossy.yaml").write_text(doc, encoding="utf-8")
    code = main(["invert", "--pipeline", str(workspace / "lossy.yaml"),
                 "--out", str(workspace / "inv.json")])
    assert code == 3
    assert "semantic_bin" in capsys.readouterr().err


def test_double_inversion_restores_pipeline(workspace):
    inverse_path = workspace / "inverse.json"
    main(["invert", "--pipeline", str(workspace / "pipeline.yaml"),
          "--out", str(inverse_path)])
    twice = workspace / "twice.json"
    assert main(["invert", "--pipeline", str(inverse_path),
                 "--out", str(twice)]) == 0
    kinds = [s["kind"] for s in json.loads(twice.read_text())["steps"]]
    assert kinds == ["one_hot_encode", "standardize"]


def test_explain_map_groups_and_conserves(workspace):
    contribs = workspace / "contribs.csv"
    header = ("Area Rawah,Area Neota,Area Comache Peak,Area Cache la Poudre,"
              "Elevation,__base__")
    contribs.write_text(
        f"{header}\n0.10,0.05,-0.20,0.00,0.42,1.5\n0.0,0.0,0.0,0.0,0.0,1.5\n",
        encoding="utf-8")
    out = workspace / "mapped.csv"
    code = main(["explain-map", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--contribs", str(contribs), "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == ["Wilderness area", "Elevation", "__base__"]
    values = dict(zip(rows[0], rows[1]))
    assert float(values["Wilderness area"]) == pytest.approx(-0.05)
    assert float(values["Elevation"]) == pytest.approx(0.42)
    assert Path(str(out) + ".fidelity.txt").exists()


def test_explain_map_rejects_non_finite(workspace, capsys):
    contribs = workspace / "bad.csv"
    contribs.write_text(
        "Area Rawah,Area Neota,Area Comache Peak,Area Cache la Poudre,Elevation\n"
        "nan,0,0,0,0\n", encoding="utf-8")
    code = main(["explain-map", "--pipeline", str(workspace / "pipeline.yaml"),
                 "--contribs", str(contribs), "--out", str(workspace / "m.csv")])
    assert code == 1
    assert "finite" in capsys.readouterr().err


def test_audit_command(workspace, capsys):
    out = workspace / "report.json"
    code = main(["audit", "--manifest", str(workspace / "original.yaml"),
                 "--persona", "decision_maker", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["persona"] == "decision_maker"
    assert main(["audit", "--manifest", str(workspace / "original.yaml"),
                 "--persona", "not-a-persona", "--out", str(out)]) == 1


def test_demo_covertype_passes(tmp_path, capsys):
    assert main(["demo-covertype", "--out", str(tmp_path / "demo")]) == 0
    captured = capsys.readouterr().out
    assert captured.count("PASS") == 6
    assert "FAIL" not in captured


def test_demo_covertype_missing_data_exits_1(tmp_path):
    assert main(["demo-covertype", "--data", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "demo")]) == 1
