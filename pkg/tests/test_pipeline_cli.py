"""End-to-end tests of the CLI commands, config handling, and manifests."""

import json
from pathlib import Path

import pytest
import yaml

from memcost.cli import main
from memcost.config import load_config
from memcost.corpus import parse_conllu_file
from memcost.errors import ConfigError
from memcost.features import rows_from_tsv
from memcost.metrics import METRICS_HEADER

FIXTURE_DIR = Path(__file__).parent / "data" / "fixture"
FIXTURE_CONFIG = FIXTURE_DIR / "config.yaml"


def _write_config(tmp_path, mutate):
    data = yaml.safe_load(FIXTURE_CONFIG.read_text(encoding="utf-8"))
    for key in ("treebank", "regions", "reading_times", "freq_table", "lm_surprisal"):
        data["paths"][key] = str(FIXTURE_DIR / data["paths"][key])
    mutate(data)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data, allow_unicode=True), encoding="utf-8")
    return path


# ------------------------------------------------------------------- config

def test_load_fixture_config():
    config = load_config(FIXTURE_CONFIG)
    assert config.statistics.seed == 20240811
    assert config.aggregation_mode == "mean"
    assert config.strict_sent_ids is True
    assert config.arc_policy.exclude_right_adjuncts is False


def test_config_missing_seed_is_error(tmp_path):
    path = _write_config(tmp_path, lambda d: d["statistics"].pop("seed"))
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "seed" in str(exc.value)


def test_config_missing_file_names_path(tmp_path):
    path = _write_config(
        tmp_path, lambda d: d["paths"].__setitem__("regions", str(tmp_path / "nope.tsv"))
    )
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "nope.tsv" in str(exc.value)


def test_config_bad_k(tmp_path):
    path = _write_config(tmp_path, lambda d: d["statistics"].__setitem__("k", 1))
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_particle_filter_without_lemmas(tmp_path):
    def mutate(d):
        d["filters"] = {"exclude_particles": True, "particle_lemmas": []}

    with pytest.raises(ConfigError):
        load_config(_write_config(tmp_path, mutate))


# ------------------------------------------------------------------ commands

def test_cli_missing_config_exits_1(tmp_path, capsys):
    code = main(["parse", "--config", str(tmp_path / "missing.yaml")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_cli_missing_input_exits_1(tmp_path, capsys):
    path = _write_config(
        tmp_path, lambda d: d["paths"].__setitem__("regions", str(tmp_path / "gone.tsv"))
    )
    code = main(["metrics", "--config", str(path), "--out-dir", str(tmp_path / "out")])
    assert code == 1
    err = capsys.readouterr().err
    assert "gone.tsv" in err


def test_parse_command_roundtrip(tmp_path):
    out = tmp_path / "out"
    assert main(["parse", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    reparsed = parse_conllu_file(out / "parsed.conllu")
    original = parse_conllu_file(FIXTURE_DIR / "corpus.conllu")
    assert [d.doc_id for d in reparsed] == [d.doc_id for d in original]
    for doc_a, doc_b in zip(reparsed, original):
        for sent_a, sent_b in zip(doc_a.sentences, doc_b.sentences):
            assert sent_a.tokens == sent_b.tokens
    summary = json.loads((out / "parse_summary.json").read_text())
    assert summary["documents"] == 5
    assert summary["dropped_sentences"] == []


def test_metrics_command_emits_spec_header(tmp_path):
    out = tmp_path / "out"
    assert main(["metrics", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    lines = (out / "metrics.tsv").read_text().splitlines()
    assert lines[0].split("\t") == METRICS_HEADER
    first = lines[1].split("\t")
    assert first[0] == "d01"
    n_heads, n_deps, n_additional = int(first[3]), int(first[4]), int(first[5])
    assert n_additional == n_deps - n_heads


def test_features_then_report_identity(tmp_path):
    out = tmp_path / "out"
    assert main(["features", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    rows = rows_from_tsv((out / "features.tsv").read_text())
    assert rows
    assert all(r.n_additional == r.n_deps - r.n_heads for r in rows)
    assert main(["report", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["identity_n_additional"]["holds_exactly"] is True
    assert report["identity_n_additional"]["corr_with_n_deps_minus_n_heads"] == 1.0


def test_report_without_features_exits_1(tmp_path, capsys):
    code = main(["report", "--config", str(FIXTURE_CONFIG), "--out-dir", str(tmp_path / "o")])
    assert code == 1
    assert "features" in capsys.readouterr().err


def test_eval_unknown_predictor_exits_1(tmp_path, capsys):
    code = main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(tmp_path / "o"),
         "--add", "n_bogus"]
    )
    assert code == 1
    assert "n_bogus" in capsys.readouterr().err


def test_eval_requires_added_predictor(tmp_path):
    code = main(["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(tmp_path / "o")])
    assert code == 1


def test_eval_command_artifacts(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
         "--add", "n_heads", "--repeats", "3", "--n-perm", "499", "--name", "heads"]
    )
    assert code == 0
    payload = json.loads((out / "eval_heads.json").read_text())
    assert payload["delta_mse"] > 0
    assert 0 < payload["p_value"] <= 1
    assert payload["surprisal_unit"] == "bits"
    assert len(payload["base_errors"]) == payload["n_items"]
    assert set(payload["fold_coefficients"]) == {
        "intercept", *payload["base_predictors"], "n_heads"
    }
    bars = (out / "dmse_heads.tsv").read_text().splitlines()
    assert bars[0].split("\t")[:4] == ["model", "delta_mse", "p_value", "stars"]
    coef_lines = (out / "fold_coefficients_heads.tsv").read_text().splitlines()
    assert coef_lines[0].split("\t") == ["predictor", "fold", "coefficient"]
    manifest = json.loads((out / "manifest_eval_heads.json").read_text())
    assert manifest["seed"] == 20240811
    assert set(manifest["inputs"]) == {
        "treebank", "regions", "reading_times", "freq_table", "lm_surprisal"
    }
    assert set(manifest["outputs"]) == {
        "eval_heads.json", "dmse_heads.tsv", "fold_coefficients_heads.tsv"
    }


def test_eval_base_add_overlap_is_error(tmp_path):
    code = main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(tmp_path / "o"),
         "--base", "n_chars", "n_heads", "--add", "n_heads"]
    )
    assert code == 1


def test_participants_command(tmp_path):
    out = tmp_path / "out"
    assert main(["participants", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    typology = (out / "typology.tsv").read_text().splitlines()
    assert typology[0].split("\t") == ["participant_id", "metric", "label", "p_value", "n_rows"]
    assert len(typology) == 1 + 6 * 2  # 6 participants x 2 metrics
    tradeoff = json.loads((out / "tradeoff.json").read_text())
    assert tradeoff["eligible_participants"] == 6
    assert {c["comparison"] for c in tradeoff["comparisons"]} == {
        "slowdown_vs_speedup", "slowdown_vs_rest"
    }
    effects = (out / "antilocality_effects.tsv").read_text().splitlines()
    assert len(effects) == 1 + 6


def test_full_pipeline_byte_identical_in_process(tmp_path):
    outputs = {}
    for run in ("a", "b"):
        out = tmp_path / run
        for command in ("parse", "metrics", "features"):
            assert main([command, "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
        assert main(
            ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
             "--add", "n_heads", "--repeats", "3", "--n-perm", "499"]
        ) == 0
        assert main(["report", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
        outputs[run] = {
            p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()
        }
    assert outputs["a"].keys() == outputs["b"].keys()
    for name in outputs["a"]:
        assert outputs["a"][name] == outputs["b"][name], f"{name} differs between runs"


def test_invalid_tree_dropped_with_warning(tmp_path, caplog):
    # Corrupt one sentence (two roots) in a copy of the fixture treebank.
    treebank = (FIXTURE_DIR / "corpus.conllu").read_text(encoding="utf-8")
    lines = treebank.splitlines()
    for i, line in enumerate(lines):
        cols = line.split("\t")
        if len(cols) == 10 and cols[7] != "root":
            cols[6], cols[7] = "0", "root"
            lines[i] = "\t".join(cols)
            break
    (tmp_path / "corpus.conllu").write_text("\n".join(lines) + "\n", encoding="utf-8")

    def mutate(d):
        d["paths"]["treebank"] = str(tmp_path / "corpus.conllu")
        # Region/RT files now reference a dropped sentence: alignment must
        # fail loudly unless those keys are also gone, so drop strictness.
        d["regions"]["strict_sent_ids"] = False

    path = _write_config(tmp_path, mutate)
    out = tmp_path / "out"
    code = main(["parse", "--config", str(path), "--out-dir", str(out)])
    # The dropped sentence leaves dangling region entries -> input error.
    assert code == 1


def test_abort_policy_on_invalid_tree(tmp_path, capsys):
    treebank = (FIXTURE_DIR / "corpus.conllu").read_text(encoding="utf-8")
    lines = treebank.splitlines()
    for i, line in enumerate(lines):
        cols = line.split("\t")
        if len(cols) == 10 and cols[7] != "root":
            cols[6], cols[7] = "0", "root"
            lines[i] = "\t".join(cols)
            break
    (tmp_path / "corpus.conllu").write_text("\n".join(lines) + "\n", encoding="utf-8")

    def mutate(d):
        d["paths"]["treebank"] = str(tmp_path / "corpus.conllu")
        d["invalid_trees"] = "abort"

    path = _write_config(tmp_path, mutate)
    code = main(["parse", "--config", str(path), "--out-dir", str(tmp_path / "o")])
    assert code == 1
    assert "invalid tree" in capsys.readouterr().err


def test_eval_ablation_emits_leave_one_out_artifacts(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
         "--base", "n_chars", "unigram_surprisal", "lm_surprisal",
         "--ablation", "--repeats", "2", "--n-perm", "199"]
    )
    assert code == 0
    for predictor in ("n_chars", "unigram_surprisal", "lm_surprisal"):
        payload = json.loads((out / f"eval_ablation_{predictor}.json").read_text())
        assert payload["kind"] == "ablation"
        assert payload["added_predictors"] == [predictor]
        assert predictor not in payload["base_predictors"]
    bars = (out / "dmse_ablation.tsv").read_text().splitlines()
    assert len(bars) == 1 + 3


def test_eval_pairwise_comparison(tmp_path):
    out = tmp_path / "out"
    common = ["--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
              "--repeats", "2", "--n-perm", "199"]
    assert main(["eval", *common, "--add", "n_heads", "--name", "heads"]) == 0
    assert main(
        ["eval", *common, "--add", "n_deps", "--name", "deps", "--compare-with", "heads"]
    ) == 0
    payload = json.loads((out / "eval_deps.json").read_text())
    pairwise = payload["pairwise"]
    assert pairwise["other"] == "heads"
    assert 0 < pairwise["p_current_better"] <= 1
    assert 0 < pairwise["p_other_better"] <= 1


def test_eval_pairwise_missing_other_exits_1(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
         "--add", "n_heads", "--repeats", "2", "--n-perm", "199",
         "--compare-with", "ghost"]
    )
    assert code == 1
    assert "ghost" in capsys.readouterr().err


def test_report_ablation_table(tmp_path):
    out = tmp_path / "out"
    assert main(["features", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    assert main(
        ["eval", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out),
         "--base", "n_chars", "lm_surprisal", "--ablation",
         "--repeats", "2", "--n-perm", "199"]
    ) == 0
    assert main(["report", "--config", str(FIXTURE_CONFIG), "--out-dir", str(out)]) == 0
    table = (out / "ablation_table.tsv").read_text().splitlines()
    assert table[0].split("\t") == ["predictor", "delta_mse", "p_value", "stars"]
    assert {line.split("\t")[0] for line in table[1:]} == {"n_chars", "lm_surprisal"}
    dmse_table = (out / "dmse_table.tsv").read_text().splitlines()
    assert dmse_table[0].split("\t")[1] == "kind"
    assert all(line.split("\t")[1] == "ablation" for line in dmse_table[1:])
