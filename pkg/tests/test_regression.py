import logging
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_scored
from oracles import iou_continuous, smooth_l1_direct
from propkit.errors import FormatError, ToolkitError, ValidationError
from propkit.geometry import BBox, NormalizedBBox, denormalize, normalize
from propkit.regression import (
    PseudoLabel,
    RegressorParams,
    TrainConfig,
    TrainingPair,
    apply_replacement,
    batch_loss_and_grads,
    build_feature,
    build_training_pairs,
    forward,
    init_params,
    load_params,
    mine_pseudo_labels,
    refine_image,
    save_params,
    smooth_l1,
    train,
    write_loss_history,
)
from propkit.selection import ScoringContext, SelectionConfig


class TestParams:
    def test_init_shapes_and_determinism(self):
        params = init_params(12, hidden=(8, 6), seed=3)
        assert params.w1.shape == (8, 12)
        assert params.b1.shape == (8,)
        assert params.w2.shape == (6, 8)
        assert params.w3.shape == (4, 6)
        assert params.running_var1.tolist() == [1.0] * 8
        again = init_params(12, hidden=(8, 6), seed=3)
        np.testing.assert_array_equal(params.w1, again.w1)
        np.testing.assert_array_equal(params.w3, again.w3)
        different = init_params(12, hidden=(8, 6), seed=4)
        assert not np.array_equal(params.w1, different.w1)

    def test_output_layer_starts_small(self):
        params = init_params(12, hidden=(8, 6), seed=0)
        assert np.abs(params.w3).max() < 0.1
        assert params.b3.tolist() == [0.0] * 4

    def test_shape_chain_validated(self):
        params = init_params(12, hidden=(8, 6), seed=0)
        broken = params.copy()
        broken.w2 = np.zeros((6, 9))
        with pytest.raises(ValidationError):
            RegressorParams(*(getattr(broken, f) for f in (
                "w1", "b1", "gamma1", "beta1", "running_mean1", "running_var1",
                "w2", "b2", "gamma2", "beta2", "running_mean2", "running_var2",
                "w3", "b3",
            )))

    def test_copy_is_deep(self):
        params = init_params(6, hidden=(4, 3), seed=0)
        dup = params.copy()
        dup.w1[0, 0] += 1.0
        assert params.w1[0, 0] != dup.w1[0, 0]


class TestForward:
    def test_matches_manual_inference_pass(self):
        rng = np.random.default_rng(5)
        params = init_params(2 * 3 + 4, hidden=(5, 4), seed=1)
        params.running_mean1 = rng.normal(size=5) * 0.1
        params.running_var1 = rng.uniform(0.5, 2.0, 5)
        params.running_mean2 = rng.normal(size=4) * 0.1
        params.running_var2 = rng.uniform(0.5, 2.0, 4)
        region = rng.normal(size=3)
        image = rng.normal(size=3)
        coords = NormalizedBBox(0.1, 0.2, 0.6, 0.7)

        x = np.concatenate([region, image, [0.1, 0.2, 0.6, 0.7]])
        z1 = params.w1 @ x + params.b1
        a1 = params.gamma1 * (z1 - params.running_mean1) / np.sqrt(params.running_var1 + 1e-5) + params.beta1
        h1 = np.maximum(a1, 0)
        z2 = params.w2 @ h1 + params.b2
        a2 = params.gamma2 * (z2 - params.running_mean2) / np.sqrt(params.running_var2 + 1e-5) + params.beta2
        h2 = np.maximum(a2, 0)
        logits = params.w3 @ h2 + params.b3
        sig = 1.0 / (1.0 + np.exp(-logits))
        want_x = sorted((sig[0], sig[2]))
        want_y = sorted((sig[1], sig[3]))

        out = forward(params, region, image, coords)
        assert out.as_tuple() == pytest.approx(
            (want_x[0], want_y[0], want_x[1], want_y[1]), abs=1e-12
        )

    def test_feature_layout(self):
        feature = build_feature(np.array([1.0, 2.0]), np.array([3.0, 4.0]), NormalizedBBox(0.0, 0.1, 0.5, 0.9))
        assert feature.tolist() == [1.0, 2.0, 3.0, 4.0, 0.0, 0.1, 0.5, 0.9]

    def test_dimension_mismatch(self):
        params = init_params(10, hidden=(4, 3), seed=0)
        with pytest.raises(ValidationError, match="dimension"):
            forward(params, np.ones(4), np.ones(4), NormalizedBBox(0, 0, 1, 1))

    def test_degenerate_output_rejected(self):
        params = init_params(8, hidden=(4, 3), seed=0)
        # zero output weights: all four sigmoids emit exactly 0.5
        params.w3 = np.zeros_like(params.w3)
        with pytest.raises(ValidationError, match="degenerate"):
            forward(params, np.ones(2), np.ones(2), NormalizedBBox(0, 0, 1, 1))


class TestSmoothL1:
    @given(
        st.lists(st.floats(-3, 3), min_size=4, max_size=4),
        st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_direct(self, p, t):
        assert smooth_l1(np.array(p), np.array(t)) == pytest.approx(
            smooth_l1_direct(p, t), abs=1e-12
        )

    def test_regions(self):
        # |d| < 1: quadratic; |d| >= 1: linear minus half
        assert smooth_l1(np.array([0.5, 0, 0, 0]), np.zeros(4)) == pytest.approx(0.5 * 0.25 / 4)
        assert smooth_l1(np.array([2.0, 0, 0, 0]), np.zeros(4)) == pytest.approx(1.5 / 4)
        assert smooth_l1(np.zeros(4), np.zeros(4)) == 0.0


class TestGradients:
    def test_loss_matches_manual_batch_forward(self):
        rng = np.random.default_rng(9)
        params = init_params(6, hidden=(5, 4), seed=2)
        x = rng.normal(size=(8, 6))
        y = rng.uniform(0.2, 0.8, size=(8, 4))
        loss, _, stats = batch_loss_and_grads(params, x, y)

        z1 = x @ params.w1.T + params.b1
        x1h = (z1 - z1.mean(0)) / np.sqrt(z1.var(0) + 1e-5)
        h1 = np.maximum(params.gamma1 * x1h + params.beta1, 0)
        z2 = h1 @ params.w2.T + params.b2
        x2h = (z2 - z2.mean(0)) / np.sqrt(z2.var(0) + 1e-5)
        h2 = np.maximum(params.gamma2 * x2h + params.beta2, 0)
        p = 1.0 / (1.0 + np.exp(-(h2 @ params.w3.T + params.b3)))
        d = np.abs(p - y)
        want = float(np.where(d < 1, 0.5 * d * d, d - 0.5).mean())
        assert loss == pytest.approx(want, abs=1e-12)
        np.testing.assert_allclose(stats["mean1"], z1.mean(0), atol=1e-12)
        np.testing.assert_allclose(stats["var2"], z2.var(0), atol=1e-12)

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(17)
        params = init_params(6, hidden=(5, 4), seed=7)
        # move off initialization so ReLU/loss kinks are unlikely at eps scale
        params.w3 = rng.normal(size=params.w3.shape) * 0.3
        params.b3 = rng.normal(size=4) * 0.1
        x = rng.normal(size=(10, 6))
        y = rng.uniform(0.2, 0.8, size=(10, 4))
        _, grads, _ = batch_loss_and_grads(params, x, y)

        eps = 1e-6
        worst = 0.0
        for name in ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3"):
            tensor = getattr(params, name)
            flat = tensor.reshape(-1)
            idx = rng.choice(flat.shape[0], size=min(10, flat.shape[0]), replace=False)
            for i in idx:
                original = flat[i]
                flat[i] = original + eps
                up, _, _ = batch_loss_and_grads(params, x, y)
                flat[i] = original - eps
                down, _, _ = batch_loss_and_grads(params, x, y)
                flat[i] = original
                numeric = (up - down) / (2 * eps)
                analytic = grads[name].reshape(-1)[i]
                # floor keeps finite-difference roundoff on near-zero
                # gradients from dominating the relative error
                scale = max(abs(numeric), abs(analytic), 1e-6)
                worst = max(worst, abs(numeric - analytic) / scale)
        assert worst < 1e-4

    def test_batch_of_one_rejected(self):
        params = init_params(6, hidden=(5, 4), seed=0)
        with pytest.raises(ValidationError):
            batch_loss_and_grads(params, np.ones((1, 6)), np.full((1, 4), 0.5))


def _shift_task(n=120, dim=6, seed=0):
    """Inputs are targets shifted by -0.1 in x; a constant correction solves it."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        cx = rng.uniform(0.35, 0.55)
        cy = rng.uniform(0.35, 0.55)
        half = rng.uniform(0.1, 0.18)
        target = np.array([cx - half, cy - half, cx + half, cy + half])
        source = target.copy()
        source[[0, 2]] -= 0.1
        feature = np.concatenate([rng.normal(size=dim - 4), source])
        pairs.append(TrainingPair(feature=feature, target=target))
    return pairs


class TestTrain:
    def test_loss_decreases_on_learnable_task(self):
        pairs = _shift_task(n=150, dim=8)
        config = TrainConfig(epochs=12, learning_rate=2e-3, batch_size=32, hidden=(16, 8), seed=0)
        params, history = train(pairs, config)
        assert len(history) == 12
        assert history[-1] < history[0]
        assert params.input_dim == 8

    def test_zero_learning_rate_freezes_history(self):
        pairs = _shift_task(n=64, dim=8)
        config = TrainConfig(epochs=5, learning_rate=0.0, batch_size=16, hidden=(8, 6), seed=1)
        _, history = train(pairs, config)
        assert len(set(history)) == 1

    def test_deterministic_for_fixed_seed(self):
        pairs = _shift_task(n=80, dim=8)
        config = TrainConfig(epochs=3, learning_rate=1e-3, batch_size=16, hidden=(8, 6), seed=5)
        a, hist_a = train(pairs, config)
        b, hist_b = train(pairs, config)
        assert hist_a == hist_b
        np.testing.assert_array_equal(a.w1, b.w1)
        np.testing.assert_array_equal(a.running_mean2, b.running_mean2)

    def test_seed_changes_outcome(self):
        pairs = _shift_task(n=80, dim=8)
        base = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=16, hidden=(8, 6), seed=0)
        other = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=16, hidden=(8, 6), seed=9)
        _, hist_a = train(pairs, base)
        _, hist_b = train(pairs, other)
        assert hist_a != hist_b

    def test_sgd_optimizer(self):
        pairs = _shift_task(n=80, dim=8)
        config = TrainConfig(
            epochs=6, learning_rate=0.05, batch_size=16, hidden=(8, 6),
            optimizer="sgd", seed=0,
        )
        _, history = train(pairs, config)
        assert history[-1] < history[0]

    def test_divergence_is_a_toolkit_error(self):
        # batch norm renormalizes exploded activations, so the loss only
        # goes non-finite once the weights themselves overflow float64
        pairs = _shift_task(n=40, dim=8)
        config = TrainConfig(
            epochs=30, learning_rate=1e200, batch_size=8, hidden=(8, 6),
            optimizer="sgd", seed=0,
        )
        with np.errstate(all="ignore"):
            with pytest.raises(ToolkitError, match="non-finite"):
                train(pairs, config)

    def test_all_batches_undersized_rejected(self):
        pairs = _shift_task(n=1, dim=8)
        with pytest.raises(ValidationError):
            train(pairs, TrainConfig(batch_size=64))

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(epochs=0)
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=-1e-5)
        with pytest.raises(ValidationError):
            TrainConfig(batch_size=1)
        with pytest.raises(ValidationError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValidationError):
            TrainConfig(jitter_scale=(1.25, 0.8))
        TrainConfig(learning_rate=0.0)  # explicitly legal


class TestPseudoLabels:
    def _scored_pool(self):
        # entropies and SLs chosen so exactly one proposal sits in both the
        # lowest-entropy and highest-SL cuts
        def prop(box, score, confident):
            p = (0.9, 0.06, 0.04) if confident else (0.4, 0.35, 0.25)
            return make_scored(box=box, initial_score=score, probabilities=p)

        return {
            "b": [prop((0, 0, 10, 10), 9.0, True), prop((20, 0, 30, 10), 1.0, False)],
            "a": [prop((0, 0, 10, 10), 2.0, False), prop((5, 5, 15, 15), 0.5, True)],
        }

    def test_intersection_of_cuts(self):
        labels = mine_pseudo_labels(self._scored_pool(), p_entropy=0.5, p_score=0.25)
        # N=4: entropy cut = 2 lowest-entropy (the two confident ones),
        # score cut = 1 highest SL (the 9.0) -> intersection is b/(0,0,10,10)
        assert len(labels) == 1
        assert labels[0].image_id == "b"
        assert labels[0].box.as_tuple() == (0, 0, 10, 10)
        assert labels[0].initial_score == 9.0

    def test_oracle_on_random_pools(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            pool = {}
            flat = []
            for img in ("a", "b", "c"):
                rows = []
                for i in range(int(rng.integers(1, 9))):
                    weights = rng.dirichlet(np.ones(4) * 0.7)
                    prop = make_scored(
                        box=(i * 10, 0, i * 10 + 8, 8),
                        initial_score=float(rng.uniform(0, 5)),
                        probabilities=np.clip(weights, 1e-9, None),
                    )
                    rows.append(prop)
                    flat.append((img, prop))
                pool[img] = rows
            n = len(flat)
            p_entropy, p_score = 0.3, 0.4
            by_entropy = sorted(flat, key=lambda t: (t[1].entropy, t[0], t[1].box.as_tuple()))
            by_score = sorted(flat, key=lambda t: (-t[1].initial_score, t[0], t[1].box.as_tuple()))
            low = {(i, p.box.as_tuple()) for i, p in by_entropy[: math.ceil(p_entropy * n)]}
            high = {(i, p.box.as_tuple()) for i, p in by_score[: math.ceil(p_score * n)]}
            want = low & high
            got = mine_pseudo_labels(pool, p_entropy=p_entropy, p_score=p_score)
            assert {(l.image_id, l.box.as_tuple()) for l in got} == want

    def test_empty_intersection_warns(self, caplog):
        # confident proposals all have low SL, vague ones high SL
        pool = {
            "a": [
                make_scored(box=(0, 0, 10, 10), initial_score=0.1, probabilities=(0.9, 0.06, 0.04)),
                make_scored(box=(20, 0, 30, 10), initial_score=9.0, probabilities=(0.34, 0.33, 0.33)),
            ]
        }
        with caplog.at_level(logging.WARNING):
            labels = mine_pseudo_labels(pool, p_entropy=0.5, p_score=0.5)
        assert labels == []
        assert any("pseudo" in r.message.lower() for r in caplog.records)


class TestTrainingPairs:
    def _label(self):
        return PseudoLabel("a", BBox(20, 20, 60, 60), entropy=0.05, initial_score=3.0)

    def test_identity_plus_jitters(self):
        config = TrainConfig(jitters_per_label=8)
        calls = []

        def embed_region(image_id, box):
            calls.append(box.as_tuple())
            return np.ones(4)

        pairs = build_training_pairs(
            [self._label()], embed_region, lambda i: np.ones(4), {"a": (100.0, 100.0)}, config
        )
        assert len(pairs) == 9  # identity + 8 jitters
        target = normalize(BBox(20, 20, 60, 60), 100, 100).as_tuple()
        for pair in pairs:
            assert pair.target.tolist() == pytest.approx(list(target))
            assert pair.feature.shape == (4 + 4 + 4,)
        # the identity pair's coords equal the target
        assert pairs[0].feature[-4:].tolist() == pytest.approx(list(target))
        # jitters actually move the box
        assert any(tuple(c) != calls[0] for c in calls[1:])

    def test_jitters_deterministic_per_seed(self):
        config = TrainConfig(jitters_per_label=4, seed=3)
        make = lambda: build_training_pairs(
            [self._label()], lambda i, b: np.ones(2), lambda i: np.ones(2),
            {"a": (100.0, 100.0)}, config,
        )
        a, b = make(), make()
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.feature, pb.feature)

    def test_jittered_boxes_stay_inside_image(self):
        config = TrainConfig(jitters_per_label=20, jitter_shift=0.5, seed=1)
        seen = []
        build_training_pairs(
            [PseudoLabel("a", BBox(5, 5, 35, 35), 0.1, 1.0)],
            lambda i, b: seen.append(b) or np.ones(2),
            lambda i: np.ones(2),
            {"a": (60.0, 40.0)},
            config,
        )
        for box in seen:
            assert 0 <= box.x_min < box.x_max <= 60
            assert 0 <= box.y_min < box.y_max <= 40

    def test_unknown_image_size_rejected(self):
        with pytest.raises(ValidationError, match="image size"):
            build_training_pairs(
                [self._label()], lambda i, b: np.ones(2), lambda i: np.ones(2), {}, TrainConfig()
            )


def _replacement_context(entropy_by_box, embeddings):
    texts = [np.eye(3)[i] for i in range(3)]

    def embed(box):
        return embeddings[box.as_tuple()]

    originals = [p for p in entropy_by_box]
    return ScoringContext.from_retained(originals, embed, texts, SelectionConfig())


class TestReplacement:
    def _setup(self, refined_probs):
        original = make_scored(
            box=(10, 10, 60, 60), initial_score=1.0, probabilities=(0.5, 0.3, 0.2)
        )
        refined_norm = NormalizedBBox(0.12, 0.12, 0.60, 0.60)
        refined_box = denormalize(refined_norm, 100, 100)
        sharp = np.asarray(refined_probs, dtype=float)
        sharp = sharp / np.linalg.norm(sharp)
        embeddings = {
            original.box.as_tuple(): np.array([1.0, 0.0, 0.0]),
            refined_box.as_tuple(): sharp,
        }
        texts = [np.eye(3)[i] for i in range(3)]
        context = ScoringContext.from_retained(
            [original], lambda b: embeddings[b.as_tuple()], texts,
            SelectionConfig(temperature=5.0),
        )
        return original, refined_norm, refined_box, context

    def test_replaces_when_entropy_drops_and_iou_high(self):
        original, refined_norm, refined_box, context = self._setup((1.0, 0.0, 0.0))
        assert iou_continuous(original.box.as_tuple(), refined_box.as_tuple()) > 0.75
        out = apply_replacement(original, refined_norm, (100.0, 100.0), context)
        assert out.box.as_tuple() == refined_box.as_tuple()
        assert out.provenance == "refined"
        assert out.entropy < original.entropy
        assert out.initial_score == original.initial_score

    def test_keeps_original_when_entropy_rises(self):
        original, refined_norm, _, context = self._setup((0.6, 0.55, 0.55))
        out = apply_replacement(original, refined_norm, (100.0, 100.0), context)
        assert out is original

    def test_keeps_original_when_iou_low(self):
        original, _, _, _ = self._setup((1.0, 0.0, 0.0))
        far = NormalizedBBox(0.7, 0.7, 0.95, 0.95)
        far_box = denormalize(far, 100, 100)
        texts = [np.eye(3)[i] for i in range(3)]
        embeddings = {
            original.box.as_tuple(): np.array([1.0, 0.0, 0.0]),
            far_box.as_tuple(): np.array([1.0, 0.0, 0.0]),
        }
        context = ScoringContext.from_retained(
            [original], lambda b: embeddings[b.as_tuple()], texts,
            SelectionConfig(temperature=5.0),
        )
        out = apply_replacement(original, far, (100.0, 100.0), context)
        assert out is original

    def test_scoring_failure_keeps_original(self, caplog):
        from propkit.errors import BackendError

        original, refined_norm, _, _ = self._setup((1.0, 0.0, 0.0))

        def embed(box):
            if box.as_tuple() != original.box.as_tuple():
                raise BackendError("no embedding here")
            return np.array([1.0, 0.0, 0.0])

        texts = [np.eye(3)[i] for i in range(3)]
        context = ScoringContext.from_retained([original], embed, texts, SelectionConfig())
        with caplog.at_level(logging.WARNING):
            out = apply_replacement(original, refined_norm, (100.0, 100.0), context)
        assert out is original
        assert any("refine" in r.message.lower() or "replace" in r.message.lower() for r in caplog.records)

    def test_randomized_invariants(self):
        rng = np.random.default_rng(33)
        original = make_scored(
            box=(20, 20, 70, 70), initial_score=1.0, probabilities=(0.5, 0.3, 0.2)
        )
        texts = [np.eye(3)[i] for i in range(3)]
        for _ in range(60):
            x0, y0 = rng.uniform(0.0, 0.5, 2)
            w, h = rng.uniform(0.1, 0.5, 2)
            refined_norm = NormalizedBBox(x0, y0, min(1.0, x0 + w), min(1.0, y0 + h))
            refined_box = denormalize(refined_norm, 100, 100)
            weights = rng.dirichlet(np.ones(3))
            vec = np.clip(weights, 1e-6, None)

            def embed(box, vec=vec):
                if box.as_tuple() == original.box.as_tuple():
                    return np.array([1.0, 0.0, 0.0])
                return vec / np.linalg.norm(vec)

            context = ScoringContext.from_retained(
                [original], embed, texts, SelectionConfig(temperature=8.0)
            )
            out = apply_replacement(original, refined_norm, (100.0, 100.0), context)
            if out is not original:
                assert out.entropy < original.entropy
                assert iou_continuous(original.box.as_tuple(), out.box.as_tuple()) > 0.75
            else:
                replacement_entropy = context.score_box(refined_box, 1.0, "refined").entropy
                qualifies = (
                    replacement_entropy < original.entropy
                    and iou_continuous(original.box.as_tuple(), refined_box.as_tuple()) > 0.75
                )
                assert not qualifies


class TestRefineImage:
    def test_runs_and_preserves_count(self):
        texts = [np.eye(3)[i] for i in range(3)]
        proposals = [
            make_scored(box=(10, 10, 50, 50), initial_score=1.0, probabilities=(0.6, 0.25, 0.15)),
            make_scored(box=(40, 40, 90, 90), initial_score=0.5, probabilities=(0.45, 0.3, 0.25)),
        ]
        context = ScoringContext.from_retained(
            proposals, lambda b: np.array([0.8, 0.15, 0.05]), texts, SelectionConfig()
        )
        params = init_params(2 * 3 + 4, hidden=(6, 5), seed=0)
        out = refine_image(proposals, params, np.array([0.5, 0.3, 0.2]), (100.0, 100.0), context)
        assert len(out) == 2
        for p in out:
            assert p.provenance in ("initial", "refined")


class TestParamsFile:
    def test_roundtrip_is_exact(self, tmp_path):
        params = init_params(10, hidden=(6, 5), seed=8)
        params.running_mean1 += 0.25  # make running stats non-trivial
        path = tmp_path / "model.pcrg"
        save_params(path, params)
        loaded = load_params(path)
        for name in ("w1", "b1", "gamma1", "beta1", "running_mean1", "running_var1",
                     "w2", "b2", "gamma2", "beta2", "running_mean2", "running_var2",
                     "w3", "b3"):
            np.testing.assert_array_equal(getattr(params, name).astype(np.float32),
                                          getattr(loaded, name).astype(np.float32))
        assert loaded.input_dim == 10
        assert loaded.hidden == (6, 5)

    def test_header_layout(self, tmp_path):
        params = init_params(7, hidden=(5, 4), seed=0)
        path = tmp_path / "model.pcrg"
        save_params(path, params)
        raw = path.read_bytes()
        assert raw[:4] == b"PCRG"
        assert struct.unpack_from("<H", raw, 4)[0] == 1
        assert struct.unpack_from("<4I", raw, 6) == (7, 5, 4, 4)

    def test_corruption_errors_name_offsets(self, tmp_path):
        params = init_params(7, hidden=(5, 4), seed=0)
        path = tmp_path / "model.pcrg"
        save_params(path, params)
        raw = bytearray(path.read_bytes())

        bad = tmp_path / "bad.pcrg"
        bad.write_bytes(b"NOPE" + bytes(raw[4:]))
        with pytest.raises(FormatError, match="byte 0"):
            load_params(bad)

        version = bytearray(raw)
        struct.pack_into("<H", version, 4, 7)
        bad.write_bytes(bytes(version))
        with pytest.raises(FormatError, match="byte 4"):
            load_params(bad)

        wrong_out = bytearray(raw)
        struct.pack_into("<I", wrong_out, 18, 5)
        bad.write_bytes(bytes(wrong_out))
        with pytest.raises(FormatError, match="byte 18"):
            load_params(bad)

        bad.write_bytes(bytes(raw[:-7]))
        with pytest.raises(FormatError, match="byte"):
            load_params(bad)

        bad.write_bytes(bytes(raw) + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_params(bad)


def test_write_loss_history(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_history(path, [0.5, 0.25, 0.125])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert lines[1].startswith("1,0.5")
    assert len(lines) == 4
