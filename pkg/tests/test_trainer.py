import math

import numpy as np
import pytest

from srgcl.augment import UPPGConfig
from srgcl.encoder import EncoderConfig, init_params
from srgcl.selector import SelectionMode, SelectorConfig
from srgcl.trainer import (
    AdamState,
    OraclePositives,
    PairMode,
    TrainConfig,
    TrainingDiverged,
    anchor_rng,
    optimizer_step,
    train,
)
from srgcl.graph import GraphDataset

from conftest import motif_dataset

SMALL = EncoderConfig(layers=2, hidden_dim=8, embed_dim=8)


def _cfg(mode="topk", epochs=3, c=6, k=2, s=0.4, batch=8, **kw):
    return TrainConfig(
        epochs=epochs,
        batch_size=batch,
        eval_every=epochs,
        selector=SelectorConfig(SelectionMode(mode), k, s=s),
        uppg=UPPGConfig(c=c),
        **kw,
    )


@pytest.fixture(scope="module")
def motifs():
    return motif_dataset()


class TestConfig:
    def test_epochs_zero(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=0, eval_every=1).validate()

    def test_eval_every_bound(self):
        with pytest.raises(ValueError, match="eval_every"):
            TrainConfig(epochs=5, eval_every=6).validate()

    def test_view_view_needs_two(self):
        cfg = _cfg(k=1, pair_mode=PairMode.VIEW_VIEW)
        with pytest.raises(ValueError, match="k >= 2"):
            cfg.validate()

    def test_k_exceeds_c(self):
        with pytest.raises(ValueError, match="selector.k .* uppg.c"):
            _cfg(c=2, k=3).validate()

    def test_selection_space_values(self):
        with pytest.raises(ValueError, match="selection_space"):
            _cfg(selection_space="hidden").validate()

    def test_round_trip(self):
        cfg = _cfg("prob", pair_mode=PairMode.VIEW_VIEW)
        back = TrainConfig.from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()


class TestOptimizer:
    def test_zero_gradient(self):
        p = init_params(SMALL, 2, 0)
        before = p.vector.copy()
        optimizer_step(p, np.zeros(len(p)), AdamState.zeros(len(p)), 1e-2)
        np.testing.assert_array_equal(p.vector, before)

    def test_constant_gradient_step(self):
        # bias correction makes m_hat = g and v_hat = g^2 exactly, so each step is lr * g / (|g| + eps)
        p = init_params(SMALL, 2, 0)
        g = np.where(np.arange(len(p)) % 2 == 0, 0.5, -2.0)
        state = AdamState.zeros(len(p))
        lr = 1e-3
        for _ in range(50):
            before = p.vector.copy()
            optimizer_step(p, g, state, lr)
        expected = -lr * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.vector - before, expected, rtol=1e-9)

    def test_shape_and_finiteness(self):
        p = init_params(SMALL, 2, 0)
        with pytest.raises(ValueError):
            optimizer_step(p, np.zeros(3), AdamState.zeros(len(p)), 1e-3)
        bad = np.zeros(len(p))
        bad[0] = np.nan
        with pytest.raises(FloatingPointError):
            optimizer_step(p, bad, AdamState.zeros(len(p)), 1e-3)


class TestTrain:
    def test_single_step(self, motifs):
        cfg = _cfg(epochs=1, batch=len(motifs))
        _, trace = train(motifs, SMALL, cfg)
        assert trace.steps == 1

    def test_trailing_singleton_merged(self, motifs):
        _, trace = train(motifs, SMALL, _cfg(epochs=1, batch=19))
        assert trace.steps == 1

    def test_trace_shape_and_counts(self, motifs):
        cfg = _cfg("prob", epochs=4)
        _, trace = train(motifs, SMALL, cfg)
        assert len(trace.epoch_loss) == len(trace.temperature) == len(trace.kind_counts) == 4
        for counts, per in zip(trace.kind_counts, trace.positives_per_anchor):
            assert sum(counts.values()) == len(motifs) * 2
            assert per == [2]
        np.testing.assert_allclose(np.array(trace.temperature[1:]) / trace.temperature[:-1], math.exp(-0.4), rtol=1e-9)

    def test_topk_deterministic(self, motifs):
        cfg = _cfg(epochs=2)
        pa, ta = train(motifs, SMALL, cfg)
        pb, tb = train(motifs, SMALL, cfg)
        assert pa.vector.tobytes() == pb.vector.tobytes()
        assert ta.to_dict(timing=False) == tb.to_dict(timing=False)

    def test_random_ignores_decay(self, motifs):
        a = train(motifs, SMALL, _cfg("random", s=0.0))[0]
        b = train(motifs, SMALL, _cfg("random", s=0.9))[0]
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_view_view(self, motifs):
        _, trace = train(motifs, SMALL, _cfg(pair_mode=PairMode.VIEW_VIEW, k=3))
        assert all(np.isfinite(trace.epoch_loss))

    def test_selection_space_changes_choices(self, motifs):
        _, proj = train(motifs, SMALL, _cfg())
        _, pooled = train(motifs, SMALL, _cfg(selection_space="graph"))
        assert all(np.isfinite(pooled.epoch_loss))
        # same candidates, different metric space, so the recorded distances differ
        assert pooled.mean_chosen_distance != proj.mean_chosen_distance

    def test_cached_candidates(self, motifs):
        _, trace = train(motifs, SMALL, _cfg(cache_candidates=True))
        assert all(np.isfinite(trace.epoch_loss))

    def test_eval_callback_cadence(self, motifs):
        seen = []
        cfg = _cfg(epochs=5)
        cfg.eval_every = 2
        train(motifs, SMALL, cfg, on_eval=lambda e, p: seen.append(e))
        assert seen == [2, 4, 5]

    def test_loss_decreases(self, motifs):
        wins = 0
        for seed in range(5):
            cfg = _cfg(epochs=30, c=10, seed=seed)
            _, trace = train(motifs, SMALL, cfg)
            wins += trace.epoch_loss[-1] < trace.epoch_loss[0]
        assert wins >= 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_context(self, motifs):
        cfg = _cfg(epochs=1, learning_rate=1e300)
        with pytest.raises(TrainingDiverged, match="epoch 0, batch"):
            train(motifs, SMALL, cfg)

    def test_anchor_streams_independent(self):
        a = anchor_rng(0, 1, 2, 0).random(3)
        b = anchor_rng(0, 1, 2, 1).random(3)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, anchor_rng(0, 1, 2, 0).random(3))


class TestOracle:
    def test_same_label_positives(self, motifs):
        oracle = OraclePositives(motifs)
        rng = np.random.default_rng(0)
        for i in range(len(motifs)):
            drawn = oracle.draw(i, 2, rng)
            assert all(g.label == motifs[i].label for g in drawn)
            assert all(g is not motifs[i] for g in drawn)

    def test_single_member_falls_back(self, motifs):
        ds = GraphDataset("x", [motifs[0], motifs[2], motifs[4], motifs[1]], 2, 2)
        oracle = OraclePositives(ds)
        assert oracle.draw(3, 1, np.random.default_rng(0)) is None
        assert oracle.fallbacks == 1
        _, trace = train(ds, SMALL, _cfg("random", epochs=1, k=1), oracle=OraclePositives(ds))
        assert trace.kind_counts[0]["oracle"] == 3

    def test_single_class_dataset(self, motifs):
        ds = GraphDataset("one", [g for g in motifs.graphs if g.label == 0], 2, 2)
        _, trace = train(ds, SMALL, _cfg("random", epochs=1), oracle=OraclePositives(ds))
        assert trace.kind_counts[0] == {"oracle": len(ds) * 2}
