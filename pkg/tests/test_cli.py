import io
import json
import os

import pytest
from jsonschema import validate as validate_schema

from config.settings import SCHEMA_DIR
from src.ui.cli import EXIT_BUDGET, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main, parse_measure


def run(argv, stdin_text: str = ""):
    out = io.StringIO()
    code = main(argv, stdin=io.StringIO(stdin_text), stdout=out)
    return code, out.getvalue()


def schema(name: str):
    with open(os.path.join(SCHEMA_DIR, f"{name}.schema.json"), encoding="utf-8") as f:
        return json.load(f)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("A,B:C|E", ("conditional_mutual_information", ["A", "B"], ["C"], ["E"])),
        ("A:E", ("mutual_information", ["A"], ["E"], [])),
        ("A,B", ("entropy", ["A", "B"], [], [])),
        ("A|E", ("entropy", ["A"], [], ["E"])),
    ],
)
def test_parse_measure(text, expected) -> None:
    assert parse_measure(text) == expected


@pytest.mark.parametrize("text", ["A:B:C", "A|B|C", ":B", "A:"])
def test_parse_measure_rejects(text) -> None:
    from src.data_processing.errors import UsageError

    with pytest.raises(UsageError):
        parse_measure(text)


def test_fixture_output_validates() -> None:
    code, out = run(["fixture", "p1"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("distribution"))
    assert document["pmf"][0] == {"outcome": [0, 0, 0, 0], "p": "1/6"}


def test_analyze_cmi() -> None:
    code, out = run(["analyze", "--dist", "fixture:p1", "--cmi", "A,B:C|E"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("analyze"))
    assert document["measures"][0]["value"] == pytest.approx(1 / 3, abs=1e-12)


def test_analyze_defaults_to_entropies() -> None:
    code, out = run(["analyze", "--dist", "fixture:p1"])
    assert code == EXIT_OK
    assert [m["measure"] for m in json.loads(out)["measures"]] == ["A", "B", "C", "E"]


def test_conditional_entropy() -> None:
    code, out = run(["analyze", "--dist", "fixture:p1", "--measure", "A|E"])
    assert code == EXIT_OK
    assert json.loads(out)["measures"][0]["value"] == pytest.approx(1 / 3, abs=1e-12)


def test_piped_fixture_behaves_like_named_fixture() -> None:
    _, document = run(["fixture", "p1"])
    argv = ["analyze", "--measure", "A,B:C|E", "--measure", "A:E", "--dist"]
    assert run(argv + ["-"], stdin_text=document) == run(argv + ["fixture:p1"])


def test_output_is_deterministic() -> None:
    argv = ["intrinsic", "--dist", "fixture:p1", "--splitting", "A-B,C", "--restarts", "1", "--max-iters", "5"]
    assert run(argv) == run(argv)


def test_intrinsic_witness() -> None:
    code, out = run(["intrinsic", "--dist", "fixture:p1", "--splitting", "A,B-C", "--method", "deterministic"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("intrinsic"))
    assert document["splitting"] == "AB-C"
    assert document["value"] == pytest.approx(0.0, abs=1e-12)
    assert document["witness_map"] == [0, 0, 1, 2, 0]


def test_repeated_code_exact() -> None:
    code, out = run(["simulate", "repeated-code", "--dist", "fixture:pmix", "--n", "2", "--exact"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("protocol_stats"))
    assert document["accept_probability"] == pytest.approx(7 / 27, abs=1e-12)
    assert document["agree_probability_given_accept"] == pytest.approx(3 / 7, abs=1e-12)
    assert document["exact"]["accept_probability"] == "7/27"


def test_repeated_code_falls_back_to_monte_carlo(monkeypatch, caplog) -> None:
    monkeypatch.setenv("SKAT_BUDGET", "5")
    argv = ["simulate", "repeated-code", "--dist", "fixture:pmix", "--n", "2", "--exact", "--trials", "2000"]
    code, out = run(argv)
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("protocol_stats"))
    assert document["method"] == "monte-carlo"
    assert document["trials"] == 2000
    assert "falling back to Monte Carlo" in caplog.text


def test_strict_exact_exceeds_budget(monkeypatch) -> None:
    monkeypatch.setenv("SKAT_BUDGET", "5")
    code, out = run(["simulate", "repeated-code", "--dist", "fixture:pmix", "--n", "2", "--exact", "--strict"])
    assert code == EXIT_BUDGET
    assert out == ""


def test_equality_filter() -> None:
    code, out = run(["simulate", "equality-filter", "--dist", "fixture:p1", "--p", "B", "--q", "C"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("equality_filter"))
    assert document["exact_survival_probability"] == "1/3"
    assert document["filtered_key_lower_bound"] == pytest.approx(1.0, abs=1e-12)
    assert document["key_rate_lower_bound"] == pytest.approx(1 / 3, abs=1e-12)


def test_certify_p1() -> None:
    code, out = run(["certify", "--dist", "fixture:p1", "--restarts", "2", "--max-iters", "20"])
    assert code == EXIT_OK
    document = json.loads(out)
    validate_schema(document, schema("certificate"))
    assert document["bound_information"] is True
    assert document["recheck_discrepancies"] == []
    assert len(document["pairwise_splittings"]) == 2


def test_table_format() -> None:
    code, out = run(["analyze", "--dist", "fixture:p1", "--measure", "A,B:C|E", "--format", "table"])
    assert code == EXIT_OK
    assert "A,B:C|E" in out
    assert "conditional_mutual_information" in out


def test_malformed_json_exit_code(capsys) -> None:
    code, out = run(["analyze", "--dist", "-"], stdin_text='{"variables": [')
    assert code == EXIT_INVALID
    assert out == ""
    assert "line 1" in capsys.readouterr().err


def test_invalid_distribution_exit_code(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(
        '{"variables": [{"name": "A", "alphabet": 2, "role": "honest"}],'
        ' "pmf": [{"outcome": [0], "p": "1/2"}, {"outcome": [1], "p": "1/3"}]}',
        encoding="utf-8",
    )
    code, _ = run(["analyze", "--dist", str(path)])
    assert code == EXIT_INVALID


def test_variable_entry_that_is_not_an_object(tmp_path, capsys) -> None:
    path = tmp_path / "bad.json"
    path.write_text('{"variables": [5], "pmf": []}', encoding="utf-8")
    code, out = run(["analyze", "--dist", str(path)])
    assert code == EXIT_INVALID
    assert out == ""
    assert "must be an object" in capsys.readouterr().err


def test_file_that_is_not_utf8(tmp_path, capsys) -> None:
    path = tmp_path / "latin.json"
    path.write_bytes(b'{"variables": [{"name": "\xe9"}], "pmf": []}')
    code, _ = run(["analyze", "--dist", str(path)])
    assert code == EXIT_INVALID
    assert "not UTF-8" in capsys.readouterr().err


def test_unknown_variable_exit_code(capsys) -> None:
    code, _ = run(["analyze", "--dist", "fixture:p1", "--measure", "X:Y"])
    assert code == EXIT_USAGE
    assert "Unknown variable" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze"],
        ["bogus"],
        ["analyze", "--dist", "fixture:p9"],
        ["analyze", "--dist", "/nonexistent/dist.json"],
        ["simulate", "repeated-code", "--dist", "fixture:pmix", "--n", "0", "--exact"],
    ],
)
def test_usage_errors(argv) -> None:
    code, _ = run(argv)
    assert code == EXIT_USAGE
