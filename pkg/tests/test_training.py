import hashlib

import numpy as np
import pytest

from betagraph import training as tr
from betagraph.evaluation import evaluate
from conftest import quick_config


def buffer_hashes(state):
    return {name: hashlib.sha256(t.data.tobytes()).hexdigest()
            for name, t in state.all_tensors().items()}


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = tr.TrainConfig()
        assert cfg.rounds == 5 and cfg.epochs_p1 == 200

    @pytest.mark.parametrize("bad", [
        dict(lr_p1=0.0), dict(lr_p2=-1.0), dict(dropout_p1=1.0),
        dict(gamma=0.0), dict(rounds=0), dict(dtype="float16"),
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            tr.TrainConfig(**bad)

    def test_variant_presets(self):
        base = quick_config()
        a = tr.variant_config(base, "a")
        assert not a.use_beta_reasoning and not a.learned_prior
        d = tr.variant_config(base, "d")
        assert d.use_beta_reasoning and not d.learned_prior
        assert d.context_propagation
        e = tr.variant_config(base, "e")
        assert e == base
        no_at = tr.variant_config(base, "no_at")
        assert no_at.rounds == 1
        assert no_at.epochs_p1 == base.epochs_p1 * base.rounds
        with pytest.raises(ValueError):
            tr.variant_config(base, "z")


class TestPhases:
    def test_zero_epochs_identity(self, small_ppm, small_split):
        cfg = quick_config()
        ctx = tr.build_context(small_ppm, small_split, cfg)
        state = tr.init_model(small_ppm.feature_dim, ctx.class_count, cfg)
        before = buffer_hashes(state)
        tr.train_phase1(state, ctx, 0)
        tr.train_phase2(state, ctx, 0)
        assert buffer_hashes(state) == before

    def test_phase1_only_touches_reasoning_params(self, small_ppm, small_split):
        cfg = quick_config()
        ctx = tr.build_context(small_ppm, small_split, cfg)
        state = tr.init_model(small_ppm.feature_dim, ctx.class_count, cfg)
        before = buffer_hashes(state)
        tr.train_phase1(state, ctx, 3)
        after = buffer_hashes(state)
        for name in state.phase2_tensors():
            assert after[name] == before[name], name
        changed = [n for n in state.phase1_tensors() if after[n] != before[n]]
        assert changed

    def test_phase2_only_touches_heads(self, small_ppm, small_split):
        cfg = quick_config()
        ctx = tr.build_context(small_ppm, small_split, cfg)
        state = tr.init_model(small_ppm.feature_dim, ctx.class_count, cfg)
        tr.train_phase1(state, ctx, 3)
        before = buffer_hashes(state)
        tr.train_phase2(state, ctx, 3)
        after = buffer_hashes(state)
        for name in state.phase1_tensors():
            assert after[name] == before[name], name
        changed = [n for n in state.phase2_tensors() if after[n] != before[n]]
        assert changed

    def test_losses_descend(self, small_ppm, small_split):
        cfg = quick_config()
        ctx = tr.build_context(small_ppm, small_split, cfg)
        state = tr.init_model(small_ppm.feature_dim, ctx.class_count, cfg)
        first_bl = tr.train_phase1(state, ctx, 1)
        later_bl = tr.train_phase1(state, ctx, 60)
        assert later_bl < first_bl
        first_dl = tr.train_phase2(state, ctx, 1)
        later_dl = tr.train_phase2(state, ctx, 60)
        assert later_dl < first_dl

    def test_divergence_detected(self, small_ppm, small_split):
        cfg = quick_config(lr_p1=1e18, epochs_p1=60)
        ctx = tr.build_context(small_ppm, small_split, cfg)
        state = tr.init_model(small_ppm.feature_dim, ctx.class_count, cfg)
        with np.errstate(all="ignore"):
            with pytest.raises(tr.TrainingDivergence):
                tr.train_phase1(state, ctx, 60)


class TestAlternating:
    def test_single_round(self, small_ppm, small_split):
        state, history = tr.train_alternating(small_ppm, small_split,
                                              quick_config(rounds=1))
        assert len(history) == 1
        assert state.best_round == 0

    def test_deterministic_history(self, small_ppm, small_split):
        cfg = quick_config(epochs_p1=10, epochs_p2=10)
        _, h1 = tr.train_alternating(small_ppm, small_split, cfg)
        _, h2 = tr.train_alternating(small_ppm, small_split, cfg)
        assert h1 == h2

    def test_best_snapshot_attains_max_score(self, small_ppm, small_split):
        cfg = quick_config(epochs_p1=10, epochs_p2=10, rounds=3)
        state, history = tr.train_alternating(small_ppm, small_split, cfg)
        best = max(h["selection_score"] for h in history)
        assert state.best_score == best
        assert history[state.best_round]["selection_score"] == best

    def test_restored_snapshot_reproduces_validation(self, small_ppm,
                                                     small_split):
        cfg = quick_config(epochs_p1=10, epochs_p2=10, rounds=3)
        state, history = tr.train_alternating(small_ppm, small_split, cfg)
        ctx = tr.build_context(small_ppm, small_split, cfg)
        acc, rc, roc = tr.validation_metrics(state, ctx)
        score = tr.selection_score(acc, roc, rc, cfg)
        assert score == pytest.approx(state.best_score, abs=1e-9)

    def test_direct_variant_trains(self, small_ppm, small_split):
        cfg = tr.variant_config(quick_config(epochs_p2=40), "a")
        state, history = tr.train_alternating(small_ppm, small_split, cfg)
        assert state.direct is not None
        assert np.isnan(history[0]["bl_loss"])
        rep = evaluate(state, small_ppm, small_split)
        assert rep.acc > 0.5


class TestSelectionScore:
    def test_perfect_model(self):
        cfg = tr.TrainConfig()
        assert tr.selection_score(1.0, 1.0, 0.0, cfg) == 2.0

    def test_arith_example(self):
        cfg = tr.TrainConfig()
        assert tr.selection_score(0.9, 0.95, 0.02, cfg) == pytest.approx(1.65)

    def test_monotone_in_each_metric(self):
        cfg = tr.TrainConfig()
        base = tr.selection_score(0.8, 0.8, 0.1, cfg)
        assert tr.selection_score(0.9, 0.8, 0.1, cfg) > base
        assert tr.selection_score(0.8, 0.9, 0.1, cfg) > base
        assert tr.selection_score(0.8, 0.8, 0.05, cfg) > base

    def test_missing_ood_drops_term(self):
        cfg = tr.TrainConfig()
        assert tr.selection_score(1.0, None, 0.0, cfg) == 1.0


class TestCheckpoint:
    def test_roundtrip_preserves_scores(self, tmp_path, small_ppm, small_split):
        cfg = quick_config(epochs_p1=10, epochs_p2=10)
        state, _ = tr.train_alternating(small_ppm, small_split, cfg)
        rep = evaluate(state, small_ppm, small_split)
        path = tmp_path / "ckpt.npz"
        tr.save_checkpoint(path, state)
        loaded, meta = tr.load_checkpoint(path)
        rep2 = evaluate(loaded, small_ppm, small_split)
        assert rep2.acc == rep.acc
        assert rep2.aurc == rep.aurc
        assert rep2.auroc == rep.auroc
        assert meta["config"]["gamma"] == cfg.gamma

    def test_shape_mismatch_rejected(self, tmp_path, small_ppm, small_split):
        cfg = quick_config(epochs_p1=2, epochs_p2=2, rounds=1)
        state, _ = tr.train_alternating(small_ppm, small_split, cfg)
        path = tmp_path / "ckpt.npz"
        tr.save_checkpoint(path, state)
        import numpy as _np
        import json as _json
        with _np.load(path) as zf:
            arrays = {k: zf[k] for k in zf.files}
        meta = _json.loads(bytes(arrays["__meta__"]).decode())
        meta["feature_dim"] = 3
        arrays["__meta__"] = _np.frombuffer(
            _json.dumps(meta).encode(), dtype=_np.uint8)
        with open(path, "wb") as fh:
            _np.savez(fh, **arrays)
        with pytest.raises(ValueError, match="shape"):
            tr.load_checkpoint(path)
