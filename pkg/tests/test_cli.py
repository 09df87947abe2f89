"""End-to-end command-line runs through main(argv)."""

import csv
import dataclasses
import json
import pathlib
import sys

import pytest

from medmeta.cli import main
from medmeta.corpus import (
    Aspect,
    ErrorType,
    PairDataset,
    Significance,
    default_reports_path,
    load_pairs,
    load_reports,
    load_severity_fixtures,
    save_pairs,
)
from medmeta.perturb import generate_cell

MOCK = str(pathlib.Path(__file__).parent / "mock_adapter.py")


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def reports():
    return load_reports(default_reports_path())


@pytest.fixture(scope="module")
def two_cell_pairs(tmp_path_factory, reports):
    """20 pairs: one significant and one insignificant severity cell."""
    significant = generate_cell(
        reports, 0, Aspect.SEVERITY, ErrorType.INACCURACY, Significance.SIGNIFICANT
    )
    insignificant = generate_cell(
        reports, 0, Aspect.SEVERITY, ErrorType.INACCURACY, Significance.INSIGNIFICANT
    )
    pairs = []
    for i, pair in enumerate(list(significant) + list(insignificant), start=1):
        pid = f"p{i:04d}"
        pairs.append(
            dataclasses.replace(
                pair,
                pair_id=pid,
                gt=dataclasses.replace(pair.gt, id=f"{pid}.gt"),
                me=dataclasses.replace(pair.me, id=f"{pid}.me"),
            )
        )
    path = tmp_path_factory.mktemp("pairs") / "pairs.jsonl"
    save_pairs(PairDataset(pairs=pairs), path)
    return str(path)


# ---------------------------------------------------------------------------
# perturb


def test_perturb_single_cell(tmp_path):
    code = run(
        "perturb", "--seed", 0,
        "--aspect", "severity", "--error-type", "inaccuracy", "--significance", "significant",
        "--out-dir", tmp_path,
    )
    assert code == 0
    dataset = load_pairs(tmp_path / "pairs.jsonl")
    assert len(dataset.pairs) == 10
    assert all(p.aspect is Aspect.SEVERITY for p in dataset)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "perturb"
    assert manifest["seed"] == 0
    assert "pairs.jsonl" in manifest["outputs"]
    assert len(manifest["run_id"]) == 12


def test_perturb_rerun_is_byte_identical(tmp_path):
    argv = [
        "perturb", "--seed", 2,
        "--aspect", "location", "--error-type", "omission", "--significance", "significant",
        "--severity", "r01,r04,r05,r08",
    ]
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(*argv, "--out-dir", first) == 0
    assert run(*argv, "--out-dir", second) == 0
    for name in ("pairs.jsonl", "severity_fixtures.jsonl"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    manifests = [json.loads((d / "manifest.json").read_text()) for d in (first, second)]
    assert manifests[0]["run_id"] == manifests[1]["run_id"]
    for manifest in manifests:
        manifest.pop("timestamp")
    assert manifests[0] == manifests[1]


def test_perturb_partial_cell_flags(tmp_path, capsys):
    code = run("perturb", "--seed", 0, "--aspect", "severity", "--out-dir", tmp_path)
    assert code == 2
    assert "significance" in capsys.readouterr().err


def test_perturb_without_a_mode(tmp_path, capsys):
    code = run("perturb", "--seed", 0, "--out-dir", tmp_path)
    assert code == 2
    assert "nothing to do" in capsys.readouterr().err


def test_perturb_rejects_unknown_enum_value(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        run(
            "perturb", "--seed", 0,
            "--aspect", "vibes", "--error-type", "inaccuracy", "--significance", "significant",
            "--out-dir", tmp_path,
        )
    assert excinfo.value.code == 2


def test_perturb_severity_fixture_output(tmp_path):
    code = run("perturb", "--seed", 0, "--severity", "r01,r04,r05,r08", "--out-dir", tmp_path)
    assert code == 0
    fixtures = load_severity_fixtures(tmp_path / "severity_fixtures.jsonl")
    assert [f.report_id for f in fixtures] == ["r01", "r04", "r05", "r08"]
    assert not (tmp_path / "pairs.jsonl").exists()


def test_perturb_severity_unknown_ids(tmp_path, capsys):
    code = run("perturb", "--seed", 0, "--severity", "r01,r99", "--out-dir", tmp_path)
    assert code == 2
    assert "r99" in capsys.readouterr().err


def test_perturb_missing_input_file(tmp_path, capsys):
    code = run("perturb", "--seed", 0, "--full-dataset", "--input", tmp_path / "nope.jsonl",
               "--out-dir", tmp_path)
    assert code == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# score


def test_score_native_and_constant(two_cell_pairs, tmp_path):
    code = run("score", "--pairs", two_cell_pairs, "--metrics", "bleu,constant:0.25",
               "--out-dir", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "scores.csv")
    assert rows[0] == ["pair_id", "metric_id", "value"]
    body = rows[1:]
    assert len(body) == 40
    assert body == sorted(body, key=lambda r: (r[0], r[1]))
    constants = [r for r in body if r[1] == "constant:0.25"]
    assert len(constants) == 20
    assert all(r[2] == "0.25" for r in constants)
    bleus = [float(r[2]) for r in body if r[1] == "bleu"]
    assert all(0.0 <= v <= 1.0 for v in bleus)


def test_score_values_round_trip_exactly(two_cell_pairs, tmp_path):
    # repr() emission means the CSV is lossless for downstream readers.
    code = run("score", "--pairs", two_cell_pairs, "--metrics", "meteor", "--out-dir", tmp_path)
    assert code == 0
    from medmeta.metrics import meteor

    dataset = load_pairs(two_cell_pairs)
    by_pair = {p.pair_id: p for p in dataset}
    for pair_id, _, value in read_csv(tmp_path / "scores.csv")[1:]:
        pair = by_pair[pair_id]
        assert float(value) == meteor(pair.gt.text, pair.me.text)


def test_score_external_adapter(two_cell_pairs, tmp_path):
    config = tmp_path / "metrics.json"
    config.write_text(json.dumps({
        "metrics": [
            {"id": "mock", "kind": "external", "command": [sys.executable, MOCK, "normal"],
             "range": [0, 1]}
        ]
    }))
    code = run("score", "--pairs", two_cell_pairs, "--metrics", "mock",
               "--metrics-config", config, "--out-dir", tmp_path)
    assert code == 0
    body = read_csv(tmp_path / "scores.csv")[1:]
    assert len(body) == 20
    assert all(r[1] == "mock" and 0.0 <= float(r[2]) <= 1.0 for r in body)


def test_score_unknown_metric(two_cell_pairs, tmp_path, capsys):
    code = run("score", "--pairs", two_cell_pairs, "--metrics", "nope", "--out-dir", tmp_path)
    assert code == 2
    assert "unknown metric id" in capsys.readouterr().err


def test_score_broken_adapter_exits_3(two_cell_pairs, tmp_path, capsys):
    config = tmp_path / "metrics.json"
    config.write_text(json.dumps({
        "metrics": [
            {"id": "dead", "kind": "external", "command": [sys.executable, MOCK, "exit"],
             "range": [0, 1]}
        ]
    }))
    code = run("score", "--pairs", two_cell_pairs, "--metrics", "dead",
               "--metrics-config", config, "--out-dir", tmp_path)
    assert code == 3
    assert "adapter error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# metaeval


def test_metaeval_tables_and_summary(two_cell_pairs, tmp_path):
    code = run(
        "metaeval", "--pairs", two_cell_pairs,
        "--metrics", "oracle,constant:0.5,bleu",
        "--bootstrap", 500, "--seed", 0, "--out-dir", tmp_path,
    )
    assert code == 0

    disc = read_csv(tmp_path / "discrimination.csv")
    assert disc[0][:2] == ["metric_id", "severity/inaccuracy"]
    assert disc[0][-3:] == ["overall", "ci_low", "ci_high"]
    by_metric = {row[0]: row for row in disc[1:]}
    assert by_metric["oracle"][1] == "0.00"
    assert by_metric["oracle"][-3] == "0.00"
    assert by_metric["constant:0.5"][-3] == "50.00"

    robust = read_csv(tmp_path / "robustness.csv")
    by_metric = {row[0]: row for row in robust[1:]}
    assert by_metric["oracle"][-3] == "100.00"
    assert by_metric["constant:0.5"][-3] == "50.00"

    summary = (tmp_path / "summary.md").read_text()
    assert "**WARNING: zero discrimination-robustness gap for constant:0.5**" in summary
    assert "WARNING: zero discrimination-robustness gap for oracle" not in summary
    assert "WARNING: zero discrimination-robustness gap for bleu" not in summary

    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"discrimination.csv", "robustness.csv", "summary.md"}


def test_metaeval_monotonicity_profile(two_cell_pairs, tmp_path):
    assert run("perturb", "--seed", 0, "--severity", "r01,r04,r05,r08",
               "--out-dir", tmp_path) == 0
    fixtures = tmp_path / "severity_fixtures.jsonl"
    code = run(
        "metaeval", "--pairs", two_cell_pairs, "--metrics", "rouge_l",
        "--severity-fixtures", fixtures, "--bootstrap", 200, "--out-dir", tmp_path,
    )
    assert code == 0
    record = json.loads((tmp_path / "monotonicity.json").read_text())
    [profile] = record["metrics"]
    assert profile["metric_id"] == "rouge_l"
    assert sorted(profile["group_means"]) == ["0", "1", "2", "3", "4"]
    for violation in profile["violations"]:
        assert set(violation) == {"from_group", "to_group", "increase"}
        assert violation["increase"] > 0
    summary = (tmp_path / "summary.md").read_text()
    assert "Monotonicity across severity groups" in summary


def test_metaeval_rejects_bad_bootstrap(two_cell_pairs, tmp_path, capsys):
    code = run("metaeval", "--pairs", two_cell_pairs, "--metrics", "bleu",
               "--bootstrap", 0, "--out-dir", tmp_path)
    assert code == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# agreement


def _write_annotations(path, rows):
    header = "item_id,retrieval_metric,annotator_id,category,significant_count,insignificant_count"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")


def test_agreement_duplicated_annotator(tmp_path):
    annotations = tmp_path / "annotations.csv"
    rows = []
    for annotator in ("a1", "a2"):
        for item, sig in (("i1", 3), ("i2", 1), ("i3", 2)):
            rows.append(f"{item},bm25,{annotator},a,{sig},0")
    _write_annotations(annotations, rows)
    assert run("agreement", "--annotations", annotations, "--out-dir", tmp_path) == 0
    header, row = read_csv(tmp_path / "agreement.csv")
    assert header[0] == "retrieval_metric"
    assert row[0] == "bm25"
    assert row[header.index("a_significant")] == "1.0000"
    assert row[header.index("a_insignificant")] == ""


def test_agreement_single_annotator_has_no_pairs(tmp_path):
    annotations = tmp_path / "annotations.csv"
    _write_annotations(annotations, ["i1,bm25,a1,b,2,1", "i2,bm25,a1,b,1,0"])
    assert run("agreement", "--annotations", annotations, "--out-dir", tmp_path) == 0
    header, row = read_csv(tmp_path / "agreement.csv")
    assert all(cell == "" for cell in row[1:])


def test_agreement_missing_file(tmp_path, capsys):
    code = run("agreement", "--annotations", tmp_path / "nope.csv", "--out-dir", tmp_path)
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_every_command_writes_a_manifest(two_cell_pairs, tmp_path):
    out = tmp_path / "s"
    assert run("score", "--pairs", two_cell_pairs, "--metrics", "constant", "--out-dir", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"run_id", "timestamp", "command", "flags", "inputs", "seed", "metric_ids", "outputs"} <= set(manifest)
    assert manifest["metric_ids"] == ["constant"]
    assert manifest["inputs"]["pairs"]["sha256"]
