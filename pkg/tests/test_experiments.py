import csv
import io
import json

import numpy as np
import pytest

from srgcl import __version__
from srgcl.cli import main
from srgcl.encoder import EncoderConfig
from srgcl.experiments import (
    AblationGrid,
    ExperimentSpec,
    apply_axis,
    bench_overhead,
    load_dataset,
    run_ablation,
    run_experiment,
)
from srgcl.graph import Graph, GraphDataset, write_tudataset
from srgcl.selector import DistanceKind
from srgcl.trainer import PairMode, TrainConfig

from conftest import motif_dataset

SMALL = dict(layers=2, hidden_dim=8, embed_dim=8)


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = motif_dataset()
    (root / "MOTIF").mkdir()
    write_tudataset(ds, root / "MOTIF", "MOTIF")
    bare = GraphDataset("BARE", [Graph(g.node_count, g.edges, np.zeros((g.node_count, 0)), g.label) for g in ds.graphs], 2, 0)
    (root / "BARE").mkdir()
    write_tudataset(bare, root / "BARE", "BARE")
    return root


def _spec(root, out, **train):
    tr = TrainConfig(epochs=2, eval_every=1, batch_size=8, **train)
    tr.uppg.c = 6
    return ExperimentSpec("MOTIF", str(root), EncoderConfig(**SMALL), tr, folds=2, repeats=2, out=str(out))


class TestSpec:
    def test_k_above_c_names_fields(self, tmp_path):
        spec = _spec(tmp_path, tmp_path)
        spec.train.selector.k = 9
        with pytest.raises(ValueError, match=r"selector\.k.*uppg\.c"):
            spec.validate()

    def test_view_view_needs_k2(self, tmp_path):
        spec = _spec(tmp_path, tmp_path, pair_mode=PairMode.VIEW_VIEW)
        spec.train.selector.k = 1
        with pytest.raises(ValueError, match="selector.k"):
            spec.validate()

    def test_featureless_needs_cap(self, data_root, tmp_path):
        spec = _spec(data_root, tmp_path)
        spec.dataset, spec.degree_cap = "BARE", None
        with pytest.raises(ValueError, match="degree_cap"):
            load_dataset(spec)
        spec.degree_cap = 4
        assert load_dataset(spec).d_feat == 5

    def test_id_ignores_output_location(self, tmp_path):
        a = _spec(tmp_path, tmp_path / "a")
        b = _spec(tmp_path, tmp_path / "b")
        assert a.experiment_id == b.experiment_id
        b.train.seed = 1
        assert a.experiment_id != b.experiment_id

    def test_round_trip(self, tmp_path):
        spec = _spec(tmp_path, tmp_path)
        assert ExperimentSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()

    def test_axes(self, tmp_path):
        spec = _spec(tmp_path, tmp_path)
        assert apply_axis(spec, "distance", "kl").train.selector.distance is DistanceKind.KL
        assert [k.value for k in apply_axis(spec, "augmentations", "N+E").train.uppg.kinds] == ["N", "E"]
        assert apply_axis(spec, "candidate_c", 9).train.uppg.c == 9
        assert apply_axis(spec, "temperature_s", 0.3).train.selector.s == 0.3
        with pytest.raises(ValueError):
            apply_axis(spec, "learning_rate", 1)


class TestRuns:
    def test_run_layout_and_reproducibility(self, data_root, tmp_path):
        spec = _spec(data_root, tmp_path / "one")
        rep, run_dir = run_experiment(spec)
        assert run_dir.name == spec.experiment_id
        for name in ("spec.json", "trace.json", "report.json", "report.csv"):
            assert (run_dir / name).exists()
        assert len(list((run_dir / "checkpoint").glob("*.npz"))) == 4
        report = json.loads((run_dir / "report.json").read_text())
        assert report["version"] == __version__
        assert report["spec"] == spec.resolved()
        again, _ = run_experiment(_spec(data_root, tmp_path / "two"))
        assert again.to_dict(timing=False) == rep.to_dict(timing=False)

    def test_ablation_distance(self, data_root, tmp_path):
        grid = AblationGrid("distance", ["l2", "cos", "kl", "wd"], _spec(data_root, tmp_path))
        rows, text = run_ablation(grid)
        assert len(rows) == 4
        assert all(r["error"] == "" and r["finite_losses"] for r in rows)
        parsed = list(csv.DictReader(io.StringIO(text)))
        assert float(parsed[0]["normalized"]) == pytest.approx(1.0)

    def test_ablation_featureless_all_distances(self, data_root, tmp_path):
        spec = _spec(data_root, tmp_path)
        spec.dataset = "BARE"
        rows, _ = run_ablation(AblationGrid("distance", [d.value for d in DistanceKind], spec))
        assert all(r["finite_losses"] for r in rows)

    def test_ablation_grid_validation(self, tmp_path):
        with pytest.raises(ValueError):
            AblationGrid("distance", [], _spec(tmp_path, tmp_path)).validate()
        with pytest.raises(ValueError):
            AblationGrid("candidate_c", [1], _spec(tmp_path, tmp_path)).validate()

    def test_bench_overhead(self, data_root, tmp_path):
        rows = bench_overhead(_spec(data_root, tmp_path), [4, 12], epochs=1)
        assert [r["c"] for r in rows] == [2, 4, 12]
        assert rows[0]["normalized"] == 1.0
        for r in rows:
            assert r["phase_gap"] < 0.05

    def test_bench_rejects_small_c(self, data_root, tmp_path):
        with pytest.raises(ValueError, match="selector.k"):
            bench_overhead(_spec(data_root, tmp_path), [1])


class TestCli:
    def _flags(self, root, out):
        return ["--dataset-dir", str(root), "--dataset", "MOTIF", "--epochs", "2", "--folds", "2", "--repeats", "1",
                "--candidates", "6", "--layers", "2", "--hidden-dim", "8", "--embed-dim", "8", "--out", str(out)]

    def test_train(self, data_root, tmp_path, capsys):
        assert main(["train", *self._flags(data_root, tmp_path), "--selector", "prob", "--distance", "cos"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert 0 <= out["mean"] <= 1

    def test_env_root(self, data_root, tmp_path, monkeypatch):
        monkeypatch.setenv("SRGCL_DATA", str(data_root))
        assert main(["train", *self._flags(data_root, tmp_path)[2:]]) == 0

    def test_validation_exit_code(self, data_root, tmp_path, capsys):
        assert main(["train", *self._flags(data_root, tmp_path), "--top-k", "9"]) == 1
        assert "selector.k" in capsys.readouterr().err

    def test_missing_dataset_exit_code(self, tmp_path, capsys):
        assert main(["train", "--dataset-dir", str(tmp_path), "--dataset", "NONE"]) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_runtime_exit_code(self, data_root, tmp_path):
        assert main(["train", *self._flags(data_root, tmp_path), "--lr", "1e300"]) == 2

    def test_config_file_with_override(self, data_root, tmp_path):
        spec = _spec(data_root, tmp_path)
        spec.train.selector.k = 3
        cfg = tmp_path / "exp.json"
        cfg.write_text(json.dumps(spec.to_dict()))
        parser_flags = ["--config", str(cfg), "--top-k", "2"]
        from srgcl.cli import build_spec, make_parser

        args = make_parser().parse_args(["train", *parser_flags])
        built = build_spec(args)
        assert built.train.selector.k == 2
        assert built.train.uppg.c == 6

    def test_ablate_and_bench(self, data_root, tmp_path, capsys):
        assert main(["ablate", *self._flags(data_root, tmp_path), "--axis", "augmentations", "--values", "N,N+E"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 3
        assert main(["bench-overhead", *self._flags(data_root, tmp_path), "--c-values", "4,8", "--bench-epochs", "1"]) == 0
        assert "reference" in capsys.readouterr().out

    def test_oracle(self, data_root, tmp_path, capsys):
        assert main(["oracle", *self._flags(data_root, tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"augmented", "oracle", "oracle_wins"}

    def test_gradcheck(self, capsys):
        assert main(["gradcheck", "--trials", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["max_relative_error"] < 1e-4
