"""Command line behavior: exit codes, payload purity, reproducibility."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from cfx import cli
from conftest import T1_ROWS, TENNIS_RULES_TEXT

CHILD = str(Path(__file__).parent / "fixtures" / "tennis_child.py")


@pytest.fixture
def files(tmp_path):
    """Input files for the two standard examples."""
    bits_schema = tmp_path / "bits_schema.json"
    bits_schema.write_text(json.dumps({
        "features": [
            {"name": "F1", "domain": ["0", "1"]},
            {"name": "F2", "domain": ["0", "1"]},
            {"name": "F3", "domain": ["0", "1"]},
        ]
    }))
    e1 = tmp_path / "e1.json"
    e1.write_text(json.dumps({"id": "e", "values": ["0", "1", "1"]}))
    e7 = tmp_path / "e7.json"
    e7.write_text(json.dumps({"id": "e7", "values": ["0", "0", "1"]}))
    table1 = tmp_path / "table1.csv"
    table1.write_text(
        "F1,F2,F3,label\n"
        + "".join(",".join([*vec, str(lab)]) + "\n" for vec, lab in T1_ROWS)
    )
    tennis_schema = tmp_path / "tennis_schema.json"
    tennis_schema.write_text(json.dumps({
        "features": [
            {"name": "Outlook", "domain": ["sunny", "overcast", "rain"]},
            {"name": "Humidity", "domain": ["high", "normal"]},
            {"name": "Wind", "domain": ["strong", "weak"]},
        ]
    }))
    tennis_rules = tmp_path / "tennis.rules"
    tennis_rules.write_text(TENNIS_RULES_TEXT)
    tennis_entity = tmp_path / "tennis_e.json"
    tennis_entity.write_text(json.dumps({
        "id": "e", "values": ["sunny", "normal", "weak"]
    }))
    constraints = tmp_path / "constraints.json"
    constraints.write_text(json.dumps({
        "denials": [{"literals": [
            {"feature": "Outlook", "value": "rain"},
            {"feature": "Wind", "value": "strong"},
        ]}]
    }))
    always_one = tmp_path / "ones.rules"
    always_one.write_text("default 1\n")
    return tmp_path


def run(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def manifest_of(err):
    last = err.strip().splitlines()[-1]
    return json.loads(last)["manifest"]


class TestClassify:
    def test_prints_label(self, capsys, files):
        code, out, err = run(capsys, [
            "classify",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
        ])
        assert code == 0
        assert out == "1\n"
        assert manifest_of(err)["command"] == "classify"

    def test_label_zero_is_success(self, capsys, files):
        code, out, _ = run(capsys, [
            "classify",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e7.json"),
            "--table", str(files / "table1.csv"),
        ])
        assert code == 0
        assert out == "0\n"


class TestExplain:
    def argv(self, files, *extra):
        return [
            "explain",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            *extra,
        ]

    def test_json_payload(self, capsys, files):
        code, out, err = run(capsys, self.argv(files))
        assert code == 0
        payload = json.loads(out)
        assert payload["min_cardinality"] == 1
        assert [x["counterfactual"] for x in payload["explanations"]] == [
            ["0", "0", "1"],
            ["1", "0", "1"],
            ["0", "0", "0"],
        ]
        assert payload["exhausted"] is True
        m = manifest_of(err)
        assert m["classifier_calls"] == 8
        assert m["config"]["budget"] is None

    def test_stdout_reproducible(self, capsys, files):
        _, first, _ = run(capsys, self.argv(files))
        _, second, _ = run(capsys, self.argv(files))
        assert first == second

    def test_table_format(self, capsys, files):
        code, out, _ = run(capsys, self.argv(files, "--format", "table"))
        assert code == 0
        assert "s-min" in out.splitlines()[0]
        assert any("F2=1" in line for line in out.splitlines())

    def test_label0_entity_exit_2(self, capsys, files):
        code, out, err = run(capsys, [
            "explain",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e7.json"),
            "--table", str(files / "table1.csv"),
        ])
        assert code == 2
        assert out == ""
        assert "nothing to explain" in err

    def test_no_counterfactual_exit_3(self, capsys, files):
        code, out, _ = run(capsys, [
            "explain",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--rules", str(files / "ones.rules"),
        ])
        assert code == 3
        payload = json.loads(out)
        assert payload["no_counterfactual"] is True

    def test_constraints_flag(self, capsys, files):
        code, out, _ = run(capsys, [
            "explain",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--rules", str(files / "tennis.rules"),
            "--constraints", str(files / "constraints.json"),
        ])
        assert code == 0
        got = {tuple(x["counterfactual"]) for x in json.loads(out)["explanations"]}
        assert got == {("sunny", "high", "weak"), ("sunny", "high", "strong")}

    def test_missing_table_file_exit_2(self, capsys, files):
        code, _, err = run(capsys, self.argv(files)[:-1] + [str(files / "nope.csv")])
        assert code == 2
        assert "cfx:" in err

    def test_usage_error_exit_1(self, files):
        with pytest.raises(SystemExit) as info:
            cli.main(["explain", "--entity", str(files / "e1.json")])
        assert info.value.code == 1

    def test_backend_flags_are_exclusive(self, files):
        with pytest.raises(SystemExit) as info:
            cli.main([
                "explain",
                "--schema", str(files / "bits_schema.json"),
                "--entity", str(files / "e1.json"),
                "--table", str(files / "table1.csv"),
                "--rules", str(files / "tennis.rules"),
            ])
        assert info.value.code == 1

    def test_entity_from_csv_with_id(self, capsys, files):
        ents = files / "ents.csv"
        ents.write_text("id,F1,F2,F3\ne9,1,1,1\ne,0,1,1\n")
        code, out, _ = run(capsys, [
            "explain",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(ents),
            "--id", "e",
            "--table", str(files / "table1.csv"),
        ])
        assert code == 0
        assert json.loads(out)["entity"] == "e"

    def test_entity_csv_needs_id_when_ambiguous(self, capsys, files):
        ents = files / "ents.csv"
        ents.write_text("id,F1,F2,F3\ne9,1,1,1\ne,0,1,1\n")
        code, _, err = run(capsys, [
            "explain",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(ents),
            "--table", str(files / "table1.csv"),
        ])
        assert code == 2
        assert "--id" in err


class TestScore:
    def test_x_resp_payload(self, capsys, files):
        code, out, _ = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
        ])
        assert code == 0
        payload = json.loads(out)
        assert payload["mode"] == "x-resp"
        scores = {s["feature"]: s["score"] for s in payload["scores"]}
        assert scores == {"F1": "0/1", "F2": "1/1", "F3": "0/1"}

    def test_prob_uniform(self, capsys, files):
        code, out, _ = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--prob", "uniform",
        ])
        assert code == 0
        payload = json.loads(out)
        assert payload["mode"] == "resp"
        f2 = next(s for s in payload["scores"] if s["feature"] == "F2")
        assert f2["score"] == "1/2"
        assert f2["gamma"] == {}

    def test_prob_conditioned(self, capsys, files):
        chi = files / "chi.json"
        chi.write_text(json.dumps({
            "denials": [{"literals": [
                {"feature": "F2", "value": "0"},
                {"feature": "F3", "value": "1"},
            ]}]
        }))
        code, out, _ = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--prob", "uniform",
            "--condition", str(chi),
        ])
        assert code == 0
        payload = json.loads(out)
        assert payload["condition"] == str(chi)

    def test_condition_without_prob_exit_2(self, capsys, files):
        chi = files / "chi.json"
        chi.write_text(json.dumps({"denials": [{"literals": [
            {"feature": "F2", "value": "0"},
        ]}]}))
        code, _, err = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--condition", str(chi),
        ])
        assert code == 2
        assert "--condition needs --prob" in err

    def test_bad_prob_spec_exit_2(self, capsys, files):
        code, _, err = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--prob", "gaussian",
        ])
        assert code == 2
        assert "--prob" in err

    def test_all_zero_scores_exit_3(self, capsys, files):
        code, out, _ = run(capsys, [
            "score",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--rules", str(files / "ones.rules"),
        ])
        assert code == 3
        payload = json.loads(out)
        assert all(s["score"] == "0/1" for s in payload["scores"])

    def test_table_format(self, capsys, files):
        code, out, _ = run(capsys, [
            "score",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--format", "table",
        ])
        assert code == 0
        assert out.splitlines()[0].startswith("feature")


class TestEmitAsp:
    def test_stdout_program(self, capsys, files):
        code, out, _ = run(capsys, [
            "emit-asp",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--weak", "--count",
        ])
        assert code == 0
        golden = (Path(__file__).parent / "golden" / "table1_weak_count.lp").read_text()
        assert out == golden

    def test_out_file_and_section_index(self, capsys, files, tmp_path):
        target = tmp_path / "program.lp"
        code, out, _ = run(capsys, [
            "emit-asp",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--out", str(target),
        ])
        assert code == 0
        index = json.loads(out)
        assert index[0]["section"] == "header"
        assert target.read_text().startswith("#include<ListAndSet>")

    def test_rules_embedding_default(self, capsys, files):
        code, out, _ = run(capsys, [
            "emit-asp",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--rules", str(files / "tennis.rules"),
            "--feature-tokens", "names",
            "--count",
        ])
        assert code == 0
        golden = (Path(__file__).parent / "golden" / "tennis_rules.lp").read_text()
        assert out == golden

    def test_external_stub_without_backend(self, capsys, files):
        code, out, _ = run(capsys, [
            "emit-asp",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--dialect", "asp-core-2",
            "--classifier", "external-stub",
            "--feature-tokens", "names",
            "--count",
        ])
        assert code == 0
        golden = (Path(__file__).parent / "golden" / "tennis_external.lp").read_text()
        assert out == golden

    def test_shift_flag(self, capsys, files):
        code, out, _ = run(capsys, [
            "emit-asp",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--table", str(files / "table1.csv"),
            "--shift",
        ])
        assert code == 0
        assert " v " not in out
        assert out.count("not ent(") == 6

    def test_facts_embedding_needs_table(self, capsys, files):
        code, _, err = run(capsys, [
            "emit-asp",
            "--schema", str(files / "bits_schema.json"),
            "--entity", str(files / "e1.json"),
            "--rules", str(files / "tennis.rules"),
            "--classifier", "facts",
        ])
        assert code == 2
        assert "facts embedding needs --table" in err


class TestExternalBackend:
    def argv(self, files, mode="ok"):
        return [
            "explain",
            "--schema", str(files / "tennis_schema.json"),
            "--entity", str(files / "tennis_e.json"),
            "--external", f"{sys.executable} {CHILD} {mode}",
        ]

    def test_explain_via_wire(self, capsys, files):
        code, out, err = run(capsys, self.argv(files))
        assert code == 0
        payload = json.loads(out)
        assert payload["min_cardinality"] == 1
        m = manifest_of(err)
        assert m["config"]["budget"] == 10000  # default cap for child processes
        assert m["backend_calls"] <= m["classifier_calls"]

    def test_dead_child_exit_4(self, capsys, files):
        code, out, err = run(capsys, self.argv(files, "die"))
        assert code == 4
        assert out == ""
        assert "backend failure" in err


class TestConsoleScript:
    def test_installed_entrypoint(self, files):
        result = subprocess.run(
            [
                "cfx",
                "classify",
                "--schema", str(files / "bits_schema.json"),
                "--entity", str(files / "e1.json"),
                "--table", str(files / "table1.csv"),
            ],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert result.stdout == "1\n"
        assert json.loads(result.stderr.strip().splitlines()[-1])["manifest"]
