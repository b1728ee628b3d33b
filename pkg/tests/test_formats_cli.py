import json

import numpy as np
import pytest

from sceneaog import cli, datasets, formats
from sceneaog.formats import FormatError
from sceneaog.sampler import sample_structure


def test_model_round_trip(small_model, tmp_path):
    formats.save_model(tmp_path / "m.json", small_model)
    back = formats.load_model(tmp_path / "m.json")
    assert back == small_model
    assert np.array_equal(back.weights.as_array(), small_model.weights.as_array())
    formats.save_model(tmp_path / "m2.json", back)
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_scene_round_trip(small_model, tmp_path):
    scene = sample_structure(small_model, "bedroom", np.random.default_rng(1))
    formats.export_scene(tmp_path / "s.json", scene)
    assert formats.load_scene(tmp_path / "s.json") == scene


def test_corpus_round_trip(small_corpus, tmp_path):
    formats.save_corpus(tmp_path / "c", small_corpus[:5])
    assert formats.load_corpus(tmp_path / "c") == small_corpus[:5]


def corpus_dict(**overrides):
    d = {"schema": formats.CORPUS_SCHEMA, "id": "s1", "scene_type": "bedroom", "room_size": [4, 4, 2.7],
         "instances": [{"category": "nightstand", "size": [0.4, 0.4, 0.5], "position": [1, 1, 0]},
                       {"category": "lamp", "size": [0.2, 0.2, 0.4], "position": [1, 1, 0.5],
                        "supported_by": 0}]}
    d.update(overrides)
    return d


def test_corpus_errors(tmp_path):
    bad = corpus_dict()
    bad["instances"][1]["supported_by"] = 7
    with pytest.raises(FormatError, match="s1.*instance 1.*dangling"):
        formats.corpus_scene_from_dict(bad)
    with pytest.raises(FormatError, match="room_size"):
        formats.corpus_scene_from_dict(corpus_dict(room_size=[4, "x", 2]))
    with pytest.raises(FormatError, match="schema"):
        formats.corpus_scene_from_dict(corpus_dict(schema="other"))
    (tmp_path / "empty").mkdir()
    with pytest.raises(FormatError, match="no scenes"):
        formats.load_corpus(tmp_path / "empty")
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(FormatError, match="line 1"):
        formats.load_corpus(tmp_path / "broken.json")


def test_corpus_rejects_nan():
    with pytest.raises(FormatError, match="finite"):
        formats.corpus_scene_from_dict(corpus_dict(room_size=[4, float("nan"), 2.7]))


# --- command line -------------------------------------------------------------

@pytest.fixture(scope="module")
def workspace(tmp_path_factory, small_corpus):
    root = tmp_path_factory.mktemp("cli")
    formats.save_corpus(root / "corpus", small_corpus)
    formats.write_json(root / "grammar.json", formats.grammar_to_dict(datasets.make_bedroom_grammar()))
    formats.write_json(root / "rules.json", formats.rules_to_dict(datasets.bedroom_rules()))
    code = cli.main(["learn", "--corpus", str(root / "corpus"), "--grammar", str(root / "grammar.json"),
                     "--rules", str(root / "rules.json"), "--out", str(root / "model.json"),
                     "--cd-epochs", "2", "--batch", "4", "--seed", "3"])
    assert code == 0
    return root


def test_learn_writes_model_and_trace(workspace):
    model = formats.load_model(workspace / "model.json")
    assert set(model.affordances) >= {"bed", "desk", "nightstand"}
    lines = (workspace / "model.json.trace.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[-1])
    assert len(rec["weights"]) == 8 and rec["weights"] == model.weights.as_array().tolist()


def run_sample(workspace, name, seed=7):
    return cli.main(["sample", "--model", str(workspace / "model.json"), "--type", "bedroom", "--iters", "200",
                     "--seed", str(seed), "--out", str(workspace / f"{name}.json"),
                     "--trace", str(workspace / f"{name}.csv")])


def test_sample_is_deterministic(workspace):
    assert run_sample(workspace, "a") == 0 and run_sample(workspace, "b") == 0
    for ext in ("json", "csv"):
        assert (workspace / f"a.{ext}").read_bytes() == (workspace / f"b.{ext}").read_bytes()
    assert run_sample(workspace, "c", seed=8) == 0
    assert (workspace / "a.json").read_bytes() != (workspace / "c.json").read_bytes()


def test_sample_chains(workspace):
    code = cli.main(["sample", "--model", str(workspace / "model.json"), "--type", "bedroom", "--iters", "50",
                     "--chains", "2", "--out", str(workspace / "multi.json")])
    assert code == 0
    assert (workspace / "multi_chain0.json").exists() and (workspace / "multi_chain1.json").exists()


def test_missing_model_names_the_path(workspace, capsys):
    missing = workspace / "nope.json"
    code = cli.main(["sample", "--model", str(missing), "--type", "bedroom", "--out", str(workspace / "x.json")])
    assert code != 0
    assert str(missing) in capsys.readouterr().err


def test_unknown_scene_type(workspace, capsys):
    code = cli.main(["sample", "--model", str(workspace / "model.json"), "--type", "kitchen",
                     "--out", str(workspace / "x.json")])
    assert code != 0 and "kitchen" in capsys.readouterr().err


def test_bad_iteration_count_is_a_usage_error(workspace):
    with pytest.raises(SystemExit):
        cli.main(["sample", "--model", str(workspace / "model.json"), "--type", "bedroom", "--iters", "0",
                  "--out", str(workspace / "x.json")])


def test_render(workspace):
    run_sample(workspace, "r")
    args = ["render", "--scene", str(workspace / "r.json"), "--model", str(workspace / "model.json")]
    for name in ("seg1", "seg2"):
        assert cli.main(args + ["--seg", str(workspace / f"{name}.pgm"),
                                "--afford", str(workspace / f"{name}_aff.pgm")]) == 0
    assert (workspace / "seg1.pgm").read_bytes() == (workspace / "seg2.pgm").read_bytes()
    assert (workspace / "seg1_aff.pgm").read_bytes() == (workspace / "seg2_aff.pgm").read_bytes()
    assert (workspace / "seg1.pgm").read_bytes().startswith(b"P5\n")
    assert cli.main(["render", "--scene", str(workspace / "r.json")]) != 0


def test_eval_on_training_corpus(workspace, capsys):
    report = workspace / "report.json"
    assert cli.main(["eval", "--model", str(workspace / "model.json"), "--scenes", str(workspace / "corpus"),
                     "--report", str(report)]) == 0
    table = json.loads(report.read_text())["categories"]
    for cat in ("bed", "nightstand", "wardrobe"):
        assert table[cat]["tv"] < 0.05
    assert "Hellinger" in capsys.readouterr().out


def test_plan_debug(workspace, capsys):
    run_sample(workspace, "p")
    assert cli.main(["plan-debug", "--scene", str(workspace / "p.json"),
                     "--heatmap", str(workspace / "heat.pgm")]) == 0
    assert "entropy" in capsys.readouterr().out
    assert (workspace / "heat.pgm").read_bytes().startswith(b"P5\n")
