import json

import numpy as np
import pytest

from skidcast import cli
from skidcast.baselines import FitConfig
from skidcast.checkpoint import MODEL_KINDS, CheckpointError, CompatibilityError, dumps, loads
from skidcast.data import SyntheticConfig, generate_synthetic, save_records
from skidcast.evaluation import load_report
from skidcast.pipeline import PipelineError, RunConfig, ValidationFailed, derive_seed, run_pipeline
from skidcast.plotting import plot_r2
from skidcast.sequences import load_windows, save_windows
from skidcast.transformer import TransformerConfig

FAST_FIT = FitConfig(forest_n_trees=5, gbt_n_rounds=10, mlp_epochs=5, mlp_hidden=8)
FAST_TRANSFORMER = TransformerConfig(d_model=8, n_heads=2, d_k=4, n_layers=1, d_ff=16, max_epochs=4, patience=2)


def fast_config(out, **kw):
    base = dict(synthetic=SyntheticConfig(n_sections=40), fit=FAST_FIT, transformer=FAST_TRANSFORMER,
                out=str(out), seed=3)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_pipeline(fast_config(out))


def read_predictions(path):
    lines = path.read_text().splitlines()
    return lines[0], [l.split(",") for l in lines[1:]]


class TestCheckpoint:
    def test_every_kind_round_trips_bit_exactly(self, run):
        x = np.stack([s.window for s in load_windows(run.out / "windows" / "skid_test.csv")[0]])
        for key, fm in run.models["skid"].items():
            text = dumps(fm)
            back = loads(text)
            assert back.kind == key and back.window == 4 and back.task == "skid"
            np.testing.assert_array_equal(back.predict_windows(x), fm.predict_windows(x))
            assert dumps(back) == text

    def test_file_matches_in_memory_model(self, run):
        for key, fm in run.models["macrotexture"].items():
            assert (run.out / "checkpoints" / f"macrotexture_{key}.json").read_text() == dumps(fm)

    def test_container_header(self, run):
        doc = json.loads((run.out / "checkpoints" / "skid_forest.json").read_text())
        assert doc["format"] == "skidcast-checkpoint" and doc["version"] == 1 and doc["kind"] == "forest"
        assert doc["model"]["n_trees"] == FAST_FIT.forest_n_trees
        assert doc["arrays"]["scaler.mean"]["shape"] == [12]

    def test_window_length_mismatch(self, run):
        fm = run.models["skid"]["linear"]
        with pytest.raises(CompatibilityError, match="expected L=4, found L=3"):
            fm.predict_windows(np.zeros((2, 3, 12)))
        with pytest.raises(CompatibilityError, match="d_x"):
            fm.predict_windows(np.zeros((2, 4, 11)))

    def test_rejects_foreign_documents(self):
        with pytest.raises(CheckpointError):
            loads("{}")
        with pytest.raises(CheckpointError):
            loads("not json")
        with pytest.raises(CheckpointError):
            loads(json.dumps({"format": "skidcast-checkpoint", "version": 99}))


class TestPipeline:
    def test_reports_have_one_row_per_model(self, run):
        assert set(run.reports) == {"skid", "macrotexture"}
        for task in run.reports:
            report = load_report(run.out / "reports" / f"{task}.csv")
            assert sorted(report.models) == sorted(MODEL_KINDS.values())
            assert (run.out / "reports" / f"{task}.txt").exists()
            assert (run.out / "reports" / f"{task}.svg").read_text().startswith("<?xml")

    def test_manifest(self, run):
        m = json.loads((run.out / "manifest.json").read_text())
        assert m["status"] == "complete" and m["seed"] == 3
        assert len(m["data_digest"]) == 64
        assert m["config"]["models"] == list(MODEL_KINDS)
        for task in ("skid", "macrotexture"):
            assert len(m["tasks"][task]["split_digest"]) == 64
        assert "reports/skid.csv" in m["outputs"]

    def test_logs_are_json_lines(self, run):
        lines = (run.out / "logs" / "skid_transformer.jsonl").read_text().splitlines()
        entries = [json.loads(l) for l in lines]
        assert [e["epoch"] for e in entries] == list(range(1, len(entries) + 1))
        assert {"train_loss", "val_loss"} <= set(entries[0])

    def test_all_models_share_the_split(self, run):
        train_ids = {(s.section_id, s.target_month) for s in load_windows(run.out / "windows" / "skid_train.csv")[0]}
        for key in MODEL_KINDS:
            _, rows = read_predictions(run.out / "predictions" / f"skid_{key}_train.csv")
            assert {(r[0], int(r[1])) for r in rows} == train_ids

    def test_repeat_run_is_byte_identical(self, run, tmp_path):
        again = run_pipeline(fast_config(tmp_path))
        assert again.manifest["outputs"] == run.manifest["outputs"]
        assert again.manifest["run_id"] == run.manifest["run_id"]

    def test_model_subset(self, tmp_path):
        res = run_pipeline(fast_config(tmp_path, models=("linear", "transformer"), tasks=("skid",), plot=False))
        assert list(res.reports) == ["skid"]
        assert sorted(res.reports["skid"].models) == ["Linear Regression", "Transformer"]
        assert not (tmp_path / "reports" / "macrotexture.csv").exists()

    def test_failure_marks_manifest_incomplete(self, tmp_path):
        rs = generate_synthetic(SyntheticConfig(n_sections=5), seed=0)
        bad = list(rs.records)
        bad[3] = bad[3].__class__(**{**bad[3].__dict__, "depth_in": 0.9})
        save_records(bad, tmp_path / "bad.csv")
        with pytest.raises(PipelineError) as info:
            run_pipeline(fast_config(tmp_path / "out", data=str(tmp_path / "bad.csv")))
        assert info.value.stage == "validate"
        assert isinstance(info.value.cause, ValidationFailed)
        m = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert m["status"] == "incomplete" and m["failed_stage"] == "validate"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RunConfig(window_length=0)
        with pytest.raises(ValueError):
            RunConfig(models=())
        with pytest.raises(ValueError):
            RunConfig(tasks=("friction",))
        with pytest.raises(ValueError):
            RunConfig(split_ratio=1.2)

    def test_seed_derivation(self):
        assert derive_seed(7, "split") == derive_seed(7, "split")
        seeds = {derive_seed(7, "split"), derive_seed(7, "validation"), derive_seed(8, "split"),
                 derive_seed(7, "model", "skid", "forest"), derive_seed(7, "model", "macrotexture", "forest")}
        assert len(seeds) == 5


class TestPlot:
    def test_svg_is_reproducible(self, run, tmp_path):
        a = plot_r2(run.reports["skid"], tmp_path / "a.svg")
        b = plot_r2(run.reports["skid"], tmp_path / "b.svg")
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes().startswith(b"<?xml")


class TestCli:
    def test_predict_reproduces_logged_training_predictions(self, run, tmp_path):
        for key in ("transformer", "forest", "mlp"):
            out = tmp_path / f"{key}.csv"
            code = cli.main(["predict", "--checkpoint", str(run.out / "checkpoints" / f"skid_{key}.json"),
                             "--windows", str(run.out / "windows" / "skid_train.csv"), "--out", str(out)])
            assert code == 0
            header, rows = read_predictions(out)
            _, logged = read_predictions(run.out / "predictions" / f"skid_{key}_train.csv")
            assert header == "section_id,target_month,prediction"
            assert [r[:2] for r in rows] == [r[:2] for r in logged]
            got = np.array([float(r[2]) for r in rows])
            want = np.array([float(r[2]) for r in logged])
            assert np.max(np.abs(got - want)) <= 1e-12

    def test_predict_on_empty_windows(self, run, tmp_path):
        save_windows([], tmp_path / "empty.csv", L=4)
        code = cli.main(["predict", "--checkpoint", str(run.out / "checkpoints" / "skid_linear.json"),
                         "--windows", str(tmp_path / "empty.csv"), "--out", str(tmp_path / "p.csv")])
        assert code == 0
        assert (tmp_path / "p.csv").read_text() == "section_id,target_month,prediction\n"

    def test_predict_with_wrong_window_length(self, run, tmp_path, capsys):
        samples, _ = load_windows(run.out / "windows" / "skid_test.csv")
        short = [s.__class__(s.section_id, s.window[1:], s.target_month, s.target, s.padded) for s in samples]
        save_windows(short, tmp_path / "w3.csv")
        code = cli.main(["predict", "--checkpoint", str(run.out / "checkpoints" / "skid_linear.json"),
                         "--windows", str(tmp_path / "w3.csv"), "--out", str(tmp_path / "p.csv")])
        assert code == cli.EXIT_CONFIG
        assert "expected L=4, found L=3" in capsys.readouterr().err

    def test_generate_and_validate(self, tmp_path):
        data = tmp_path / "d.csv"
        assert cli.main(["generate", "--synthetic", "12", "--seed", "7", "--out", str(data)]) == 0
        assert cli.main(["validate", "--data", str(data)]) == 0
        text = data.read_text().splitlines()
        text[3] = text[3].replace(text[3].split(",")[2], "0.9", 1)
        data.write_text("\n".join(text) + "\n")
        assert cli.main(["validate", "--data", str(data)]) == cli.EXIT_VALIDATION

    def test_generate_matches_library(self, tmp_path):
        cli.main(["generate", "--synthetic", "12", "--seed", "7", "--out", str(tmp_path / "a.csv")])
        save_records(generate_synthetic(SyntheticConfig(n_sections=12), 7), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_configuration_errors(self, tmp_path):
        assert cli.main(["reproduce", "--window-length", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert cli.main(["reproduce", "--models", "svm", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
        assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
        (tmp_path / "c.cfg").write_text("colour = blue\n")
        assert cli.main(["train", "--config", str(tmp_path / "c.cfg")]) == cli.EXIT_CONFIG

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("synthetic = 20\nfit.mlp_lr = 1e200\nfit.mlp_epochs = 3\n")
        code = cli.main(["train", "--config", str(cfg), "--models", "mlp", "--task", "skid",
                         "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_NUMERIC

    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\nseed = 1\nwindow-length = 3\nmodels = linear,knn\nfit.knn_k = 7\n"
                       "transformer.max_epochs = 9\n")
        args = cli.build_parser().parse_args(["train", "--config", str(cfg), "--seed", "5"])
        rc = cli.build_run_config(args)
        assert rc.seed == 5 and rc.window_length == 3
        assert rc.models == ("linear", "knn") and rc.fit.knn_k == 7 and rc.transformer.max_epochs == 9

    def test_train_then_evaluate_and_compare(self, tmp_path):
        out = tmp_path / "t"
        cfg = tmp_path / "c.cfg"
        cfg.write_text("synthetic = 30\ntransformer.max_epochs = 2\n")
        assert cli.main(["train", "--config", str(cfg), "--models", "linear,tree,transformer",
                         "--task", "macrotexture", "--out", str(out)]) == 0
        assert not (out / "reports" / "macrotexture.csv").exists()
        stem = tmp_path / "rep"
        assert cli.main(["evaluate", str(out / "checkpoints"), "--windows",
                         str(out / "windows" / "macrotexture_test.csv"), "--out", str(stem)]) == 0
        assert len(load_report(stem.with_suffix(".csv")).rows) == 3
        assert cli.main(["compare", str(stem.with_suffix(".csv"))]) == 0
