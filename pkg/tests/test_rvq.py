import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rvqtok.errors import EmptyInput, IndexOutOfRange, InvalidConfig, ShapeMismatch
from rvqtok.mel import FeatureSequence
from rvqtok.rvq import (
    DEFAULT_LAYER_SIZES,
    GUMBEL_OFF,
    INACTIVE,
    Codebook,
    DropoutConfig,
    GumbelConfig,
    RvqStack,
    StepRecord,
    TrainingReport,
    TrainingSchedule,
    apply_norm_constraint,
    commitment_loss,
    decode_frames,
    ema_update,
    encode_frames,
    init_rvq_stack,
    mean_commitment_loss,
    pairwise_sqdist,
    quantize,
    quantize_batch,
    restart_dead_entries,
    total_loss,
    train_rvq,
    vq_replacement_gate,
)


def small_stack(seed=0, sizes=(4, 4, 4), dim=3):
    rng = np.random.Generator(np.random.PCG64(seed))
    return RvqStack([Codebook(rng.standard_normal((k, dim))) for k in sizes])


class TestCodebook:
    def test_default_profile(self):
        assert DEFAULT_LAYER_SIZES == (8192, 4096, 2048, 1024, 1024, 1024, 1024, 1024)

    def test_shape_check(self):
        with pytest.raises(ShapeMismatch):
            Codebook(np.zeros(5))

    def test_finite_check(self):
        with pytest.raises(InvalidConfig):
            Codebook(np.array([[np.inf, 0.0]]))

    def test_decay_bounds(self):
        Codebook(np.zeros((2, 2)), ema_decay=0.0)
        Codebook(np.zeros((2, 2)), ema_decay=1.0)
        with pytest.raises(InvalidConfig):
            Codebook(np.zeros((2, 2)), ema_decay=1.1)

    def test_norm_beta_bounds(self):
        Codebook(np.zeros((2, 2)), norm_beta=0.0)
        with pytest.raises(InvalidConfig):
            Codebook(np.zeros((2, 2)), norm_beta=1.0)

    def test_counter_defaults(self):
        book = Codebook(np.zeros((3, 2)))
        assert book.usage_counts.tolist() == [0, 0, 0]
        assert book.cluster_size_ema.tolist() == [0.0, 0.0, 0.0]

    def test_counter_validation(self):
        with pytest.raises(InvalidConfig):
            Codebook(np.zeros((2, 2)), usage_counts=np.array([-1, 0]))
        with pytest.raises(ShapeMismatch):
            Codebook(np.zeros((2, 2)), cluster_size_ema=np.zeros(3))

    def test_copy_is_deep(self):
        book = Codebook(np.ones((2, 2)))
        dup = book.copy()
        dup.vectors[0, 0] = 9.0
        dup.usage_counts[0] = 5
        assert book.vectors[0, 0] == 1.0
        assert book.usage_counts[0] == 0


class TestRvqStack:
    def test_needs_layers(self):
        with pytest.raises(InvalidConfig):
            RvqStack([])

    def test_dim_agreement(self):
        with pytest.raises(ShapeMismatch):
            RvqStack([Codebook(np.zeros((2, 2))), Codebook(np.zeros((2, 3)))])

    def test_properties(self):
        stack = small_stack(sizes=(8, 4), dim=5)
        assert stack.n_layers == 2
        assert stack.dim == 5
        assert stack.layer_sizes == (8, 4)


class TestConfigs:
    def test_gumbel_temperature(self):
        with pytest.raises(InvalidConfig):
            GumbelConfig(temperature=0.0, enabled=True)
        GumbelConfig(temperature=0.0, enabled=False)  # inert when off

    def test_dropout_bounds(self):
        with pytest.raises(InvalidConfig):
            DropoutConfig(keep_prob_per_layer=1.5)
        with pytest.raises(InvalidConfig):
            DropoutConfig(mode="random")

    def test_schedule_bounds(self):
        with pytest.raises(InvalidConfig):
            TrainingSchedule(replace_start=0.8, replace_end=0.2)
        with pytest.raises(InvalidConfig):
            TrainingSchedule(total_steps=-1)
        with pytest.raises(InvalidConfig):
            TrainingSchedule(commit_weight_schedule=())
        with pytest.raises(InvalidConfig):
            TrainingSchedule(granularity="token")

    def test_replace_fraction_linear(self):
        sched = TrainingSchedule(replace_start=0.1, replace_end=0.9, total_steps=100)
        assert sched.replace_fraction_at(0) == pytest.approx(0.1)
        assert sched.replace_fraction_at(50) == pytest.approx(0.5)
        assert sched.replace_fraction_at(100) == pytest.approx(0.9)
        with pytest.raises(InvalidConfig):
            sched.replace_fraction_at(101)

    def test_replace_fraction_zero_steps(self):
        sched = TrainingSchedule(total_steps=0)
        assert sched.replace_fraction_at(0) == sched.replace_end

    def test_commit_weight_stages(self):
        sched = TrainingSchedule(
            total_steps=90, commit_weight_schedule=(0.1, 0.2, 0.3)
        )
        assert sched.commit_weight_at(0) == 0.1
        assert sched.commit_weight_at(29) == 0.1
        assert sched.commit_weight_at(30) == 0.2
        assert sched.commit_weight_at(89) == 0.3
        assert sched.commit_weight_at(90) == 0.3


class TestPairwiseSqdist:
    def test_brute_force_oracle(self, rng):
        x = rng.standard_normal((7, 5))
        c = rng.standard_normal((11, 5))
        got = pairwise_sqdist(x, c)
        for t in range(7):
            for k in range(11):
                want = float(np.sum((x[t] - c[k]) ** 2))
                assert got[t, k] == pytest.approx(want, abs=1e-10)

    def test_zero_on_self(self, rng):
        c = rng.standard_normal((4, 3))
        d = pairwise_sqdist(c, c)
        assert np.allclose(np.diag(d), 0.0, atol=1e-10)

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=25)
    def test_nonnegative(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        # large offsets stress the expansion's cancellation
        x = rng.standard_normal((5, 4)) + 1e6
        d = pairwise_sqdist(x, x + rng.standard_normal((5, 4)) * 1e-4)
        assert (d >= 0).all()


class TestQuantize:
    def test_picks_nearest(self):
        book = Codebook(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]))
        stack = RvqStack([book])
        res = quantize(stack, np.array([9.0, 1.0]))
        assert res.indices == (1,)
        assert np.array_equal(res.quantized, [10.0, 0.0])

    def test_residual_telescoping(self, rng):
        stack = small_stack(seed=3, sizes=(6, 6, 6, 6), dim=4)
        x = rng.standard_normal(4)
        res = quantize(stack, x)
        running = x.copy()
        for layer, idx in enumerate(res.indices):
            assert idx != INACTIVE
            running = running - stack.layers[layer].vectors[idx]
            assert np.allclose(res.residuals[layer], running, atol=1e-12)
        assert np.allclose(x - res.quantized, res.residuals[-1], atol=1e-12)
        assert res.active_layers == (0, 1, 2, 3)

    def test_rejects_matrix(self):
        with pytest.raises(ShapeMismatch):
            quantize(small_stack(), np.zeros((2, 3)))

    def test_dim_mismatch(self):
        with pytest.raises(ShapeMismatch):
            quantize(small_stack(dim=3), np.zeros(4))

    def test_batch_matches_single(self, rng):
        stack = small_stack(seed=5, sizes=(8, 8), dim=3)
        batch = rng.standard_normal((10, 3))
        indices, quantized = quantize_batch(stack, batch)
        for t in range(10):
            res = quantize(stack, batch[t])
            assert tuple(indices[t]) == res.indices
            assert np.allclose(quantized[t], res.quantized, atol=1e-12)

    def test_batch_rejects_vector(self):
        with pytest.raises(ShapeMismatch):
            quantize_batch(small_stack(), np.zeros(3))


class TestGumbel:
    def test_tiny_temperature_matches_argmin(self, rng):
        stack = small_stack(seed=7, sizes=(16, 16), dim=5)
        batch = rng.standard_normal((200, 5))
        hard, _ = quantize_batch(stack, batch)
        soft, _ = quantize_batch(
            stack, batch, GumbelConfig(temperature=1e-6, enabled=True, seed=1)
        )
        assert np.array_equal(hard, soft)

    def test_high_temperature_diversifies(self, rng):
        # one vector quantized many times should reach several codewords
        book = Codebook(rng.standard_normal((8, 3)) * 0.01)
        stack = RvqStack([book])
        batch = np.tile(rng.standard_normal(3), (500, 1))
        g = GumbelConfig(temperature=10.0, enabled=True, seed=2)
        indices, _ = quantize_batch(stack, batch, g)
        assert np.unique(indices).size >= 4

    def test_seed_reproducible(self, rng):
        stack = small_stack(seed=9, sizes=(8,), dim=3)
        batch = rng.standard_normal((50, 3))
        g = GumbelConfig(temperature=1.0, enabled=True, seed=42)
        a, _ = quantize_batch(stack, batch, g)
        b, _ = quantize_batch(stack, batch, g)
        assert np.array_equal(a, b)


class TestDropout:
    def test_first_layer_never_dropped(self):
        stack = small_stack(sizes=(4, 4, 4, 4))
        drop = DropoutConfig(keep_prob_per_layer=0.0, seed=0)
        for seed in range(20):
            res = quantize(
                stack,
                np.ones(3),
                dropout=drop,
                dropout_rng=np.random.Generator(np.random.PCG64(seed)),
            )
            assert res.indices[0] != INACTIVE
            assert res.indices[1:] == (INACTIVE,) * 3
            assert res.active_layers == (0,)

    def test_keep_prob_one_keeps_all(self):
        stack = small_stack(sizes=(4, 4, 4))
        res = quantize(stack, np.ones(3), dropout=DropoutConfig(keep_prob_per_layer=1.0))
        assert INACTIVE not in res.indices

    def test_inactive_layers_skip_reconstruction(self, rng):
        stack = small_stack(seed=11, sizes=(4, 4, 4), dim=3)
        x = rng.standard_normal(3)
        res = quantize(stack, x, dropout=DropoutConfig(keep_prob_per_layer=0.0))
        assert np.allclose(res.quantized, stack.layers[0].vectors[res.indices[0]])
        # residual is frozen across inactive layers
        assert np.array_equal(res.residuals[0], res.residuals[2])

    @given(seed=st.integers(0, 500))
    @settings(max_examples=40)
    def test_suffix_mode_is_prefix(self, seed):
        stack = small_stack(sizes=(4,) * 6)
        drop = DropoutConfig(keep_prob_per_layer=0.5, seed=seed, mode="suffix")
        res = quantize(stack, np.ones(3), dropout=drop)
        # active layers must form a contiguous prefix 0..m
        assert res.active_layers == tuple(range(len(res.active_layers)))

    def test_independent_mode_can_leave_holes(self):
        stack = small_stack(sizes=(4,) * 6)
        hole = False
        for seed in range(40):
            drop = DropoutConfig(keep_prob_per_layer=0.5, seed=seed, mode="independent")
            res = quantize(stack, np.ones(3), dropout=drop)
            act = res.active_layers
            if act != tuple(range(len(act))):
                hole = True
                break
        assert hole


class TestCommitmentLoss:
    def test_oracle(self, rng):
        stack = small_stack(seed=13, sizes=(8, 8), dim=4)
        x = rng.standard_normal(4)
        res = quantize(stack, x)
        want = float(np.sum((x - res.quantized) ** 2))
        assert commitment_loss(x, res) == pytest.approx(want, abs=1e-12)

    def test_shape_mismatch(self, rng):
        stack = small_stack(seed=13, sizes=(8,), dim=4)
        res = quantize(stack, rng.standard_normal(4))
        with pytest.raises(ShapeMismatch):
            commitment_loss(np.zeros(5), res)

    def test_batch_mean_oracle(self, rng):
        x = rng.standard_normal((6, 3))
        q = rng.standard_normal((6, 3))
        want = float(np.mean(np.sum((x - q) ** 2, axis=1)))
        assert mean_commitment_loss(x, q) == pytest.approx(want, abs=1e-12)


class TestEmaUpdate:
    def setup_method(self):
        self.book = Codebook(
            np.array([[1.0, 0.0], [0.0, 1.0]]), ema_decay=0.99, norm_beta=0.01
        )
        self.assignments = {0: [np.array([3.0, 0.0]), np.array([5.0, 0.0])]}

    def test_paper_literal_closed_form(self):
        new = ema_update(self.book, self.assignments, mode="paper_literal")
        # assigned: (alpha*c + mean) * (1-beta) = (0.99 + 4.0) * 0.99
        assert new.vectors[0, 0] == pytest.approx(4.9401, abs=1e-12)
        assert new.vectors[0, 1] == 0.0
        # unassigned: alpha * c * (1-beta)
        assert new.vectors[1, 1] == pytest.approx(0.99 * 0.99, abs=1e-12)

    def test_standard_ema_closed_form(self):
        new = ema_update(self.book, self.assignments, mode="standard_ema")
        # (alpha*c + (1-alpha)*mean) * (1-beta) = (0.99 + 0.01*4) * 0.99
        assert new.vectors[0, 0] == pytest.approx(1.03 * 0.99, abs=1e-12)
        assert new.vectors[1, 1] == pytest.approx(0.99 * 0.99, abs=1e-12)

    def test_usage_counters(self):
        book = Codebook(np.zeros((3, 2)), usage_counts=np.array([7, 7, 7]))
        new = ema_update(book, {1: [np.zeros(2)]})
        assert new.usage_counts.tolist() == [8, 0, 8]

    def test_cluster_size_ema(self):
        new = ema_update(self.book, self.assignments)
        assert new.cluster_size_ema[0] == pytest.approx(0.01 * 2, abs=1e-12)
        assert new.cluster_size_ema[1] == 0.0

    def test_input_untouched(self):
        before = self.book.vectors.copy()
        ema_update(self.book, self.assignments)
        assert np.array_equal(self.book.vectors, before)

    def test_empty_assignments_decay_all(self):
        new = ema_update(self.book, {})
        assert np.allclose(new.vectors, self.book.vectors * 0.99 * 0.99)

    def test_bad_mode(self):
        with pytest.raises(InvalidConfig):
            ema_update(self.book, {}, mode="fancy")

    def test_entry_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            ema_update(self.book, {5: [np.zeros(2)]})

    def test_vector_dim_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ema_update(self.book, {0: [np.zeros(3)]})

    def test_mean_not_sum(self):
        # duplicating every assigned vector must not change the update
        doubled = {0: self.assignments[0] * 2}
        a = ema_update(self.book, self.assignments)
        b = ema_update(self.book, doubled)
        assert np.allclose(a.vectors, b.vectors)


class TestNormConstraint:
    def test_scales_vectors(self):
        book = Codebook(np.ones((2, 2)), norm_beta=0.25)
        new = apply_norm_constraint(book)
        assert np.allclose(new.vectors, 0.75)

    def test_beta_zero_identity(self):
        book = Codebook(np.ones((2, 2)), norm_beta=0.0)
        assert np.array_equal(apply_norm_constraint(book).vectors, book.vectors)

    def test_counters_preserved(self):
        book = Codebook(np.ones((2, 2)), norm_beta=0.5, usage_counts=np.array([3, 4]))
        assert apply_norm_constraint(book).usage_counts.tolist() == [3, 4]

    def test_norms_bounded_under_iteration(self, rng):
        # repeated update-with-assignments keeps norms under m/beta scale
        book = Codebook(rng.standard_normal((4, 3)), ema_decay=0.99, norm_beta=0.05)
        batch = rng.standard_normal((32, 3))
        bound = np.abs(batch).max() * 100  # generous; divergence would blow past
        for step in range(500):
            idx = np.argmin(pairwise_sqdist(batch, book.vectors), axis=1)
            groups = {j: list(batch[idx == j]) for j in np.unique(idx)}
            book = ema_update(book, groups)
            assert np.linalg.norm(book.vectors, axis=1).max() < bound


class TestRestart:
    def test_replaces_only_dead(self, rng):
        book = Codebook(
            np.zeros((4, 2)), usage_counts=np.array([0, 10, 3, 10])
        )
        batch = rng.standard_normal((6, 2))
        new, replaced = restart_dead_entries(book, batch, dead_threshold=5, rng_seed=1)
        assert replaced == [1, 3]
        assert np.array_equal(new.vectors[0], book.vectors[0])
        assert np.array_equal(new.vectors[2], book.vectors[2])
        for j in replaced:
            assert any(np.array_equal(new.vectors[j], row) for row in batch)
            assert new.usage_counts[j] == 0
            assert new.cluster_size_ema[j] == 0.0

    def test_no_dead_returns_input(self):
        book = Codebook(np.zeros((2, 2)))
        new, replaced = restart_dead_entries(book, np.zeros((0, 2)), 5, 0)
        assert new is book
        assert replaced == []

    def test_empty_batch_with_dead_raises(self):
        book = Codebook(np.zeros((2, 2)), usage_counts=np.array([9, 9]))
        with pytest.raises(EmptyInput):
            restart_dead_entries(book, np.zeros((0, 2)), 5, 0)

    def test_batch_dim_mismatch(self):
        book = Codebook(np.zeros((2, 2)), usage_counts=np.array([9, 9]))
        with pytest.raises(ShapeMismatch):
            restart_dead_entries(book, np.zeros((3, 4)), 5, 0)

    def test_seed_reproducible(self, rng):
        book = Codebook(np.zeros((8, 2)), usage_counts=np.full(8, 99))
        batch = rng.standard_normal((50, 2))
        a, _ = restart_dead_entries(book, batch, 5, rng_seed=7)
        b, _ = restart_dead_entries(book, batch, 5, rng_seed=7)
        assert np.array_equal(a.vectors, b.vectors)


class TestTotalLoss:
    def test_weighted_sum(self):
        assert total_loss(2.0, 3.0, 4.0, 1.0, 0.5, 0.25) == pytest.approx(4.5)

    def test_zero_weights(self):
        assert total_loss(2.0, 3.0, 4.0, 0.0, 0.0, 0.0) == 0.0

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidConfig):
            total_loss(1.0, 1.0, 1.0, -0.1, 1.0, 1.0)

    def test_nonfinite_weight_rejected(self):
        with pytest.raises(InvalidConfig):
            total_loss(1.0, 1.0, 1.0, 1.0, np.inf, 1.0)


class TestReplacementGate:
    def test_p_zero(self):
        sched = TrainingSchedule(replace_start=0.0, replace_end=0.0, total_steps=10)
        assert not vq_replacement_gate(sched, 5, 0, 1000).any()

    def test_p_one(self):
        sched = TrainingSchedule(replace_start=1.0, replace_end=1.0, total_steps=10)
        assert vq_replacement_gate(sched, 5, 0, 1000).all()

    def test_fraction_tracks_ramp(self):
        sched = TrainingSchedule(replace_start=0.2, replace_end=0.8, total_steps=100)
        mask = vq_replacement_gate(sched, 50, 3, 20000)
        assert mask.mean() == pytest.approx(0.5, abs=0.02)

    def test_deterministic(self):
        sched = TrainingSchedule()
        a = vq_replacement_gate(sched, 10, 42, 100)
        b = vq_replacement_gate(sched, 10, 42, 100)
        assert np.array_equal(a, b)


class TestInit:
    def test_layer_sizes(self, rng):
        x = rng.standard_normal((100, 6))
        stack = init_rvq_stack((16, 8, 4), x, seed=1)
        assert stack.layer_sizes == (16, 8, 4)
        assert stack.dim == 6

    def test_first_layer_from_data(self, rng):
        x = rng.standard_normal((50, 4))
        stack = init_rvq_stack((8,), x, seed=2)
        for row in stack.layers[0].vectors:
            assert any(np.array_equal(row, v) for v in x)

    def test_params_propagate(self, rng):
        x = rng.standard_normal((20, 3))
        stack = init_rvq_stack((4, 4), x, ema_decay=0.5, norm_beta=0.1, seed=0)
        for book in stack.layers:
            assert book.ema_decay == 0.5
            assert book.norm_beta == 0.1

    def test_kmeanspp_spreads(self, rng):
        # two far clusters: kmeans++ with k=2 should hit both
        a = rng.standard_normal((30, 2)) * 0.01
        b = rng.standard_normal((30, 2)) * 0.01 + 100.0
        x = np.vstack([a, b])
        stack = init_rvq_stack((2,), x, seed=3, method="kmeans++")
        centers = stack.layers[0].vectors
        assert abs(centers[0, 0] - centers[1, 0]) > 50.0

    def test_empty_features(self):
        with pytest.raises(EmptyInput):
            init_rvq_stack((4,), np.zeros((0, 3)))

    def test_bad_method(self, rng):
        with pytest.raises(InvalidConfig):
            init_rvq_stack((4,), rng.standard_normal((10, 2)), method="zeros")

    def test_bad_layer_size(self, rng):
        with pytest.raises(InvalidConfig):
            init_rvq_stack((4, 0), rng.standard_normal((10, 2)))

    def test_deterministic(self, rng):
        x = rng.standard_normal((40, 3))
        a = init_rvq_stack((8, 8), x, seed=5)
        b = init_rvq_stack((8, 8), x, seed=5)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.vectors, lb.vectors)


class TestEncodeDecode:
    def test_round_trip_matches_quantize(self, rng):
        stack = small_stack(seed=17, sizes=(8, 8, 8), dim=4)
        x = rng.standard_normal((20, 4))
        indices = encode_frames(stack, x)
        assert indices.shape == (20, 3)
        assert indices.dtype == np.int64
        _, quantized = quantize_batch(stack, x)
        assert np.allclose(decode_frames(stack, indices), quantized, atol=1e-12)

    def test_decode_rejects_out_of_range(self):
        stack = small_stack(sizes=(4, 4))
        with pytest.raises(IndexOutOfRange):
            decode_frames(stack, np.array([[0, 4]]))
        with pytest.raises(IndexOutOfRange):
            decode_frames(stack, np.array([[INACTIVE, 0]]))

    def test_decode_shape_check(self):
        stack = small_stack(sizes=(4, 4))
        with pytest.raises(ShapeMismatch):
            decode_frames(stack, np.zeros((3, 5), dtype=int))

    def test_decode_sums_codewords(self):
        books = [
            Codebook(np.array([[1.0, 0.0], [2.0, 0.0]])),
            Codebook(np.array([[0.0, 10.0], [0.0, 20.0]])),
        ]
        stack = RvqStack(books)
        out = decode_frames(stack, np.array([[1, 0]]))
        assert np.array_equal(out[0], [2.0, 10.0])


class TestTrainingReport:
    def test_jsonl_round_trip(self):
        report = TrainingReport(
            steps=(
                StepRecord(0, 1.5, 0.3, (0.5, 0.25)),
                StepRecord(1, 1.2, 0.2, (0.75, 0.5)),
            )
        )
        back = TrainingReport.from_jsonl(report.to_jsonl())
        assert back == report

    def test_empty_round_trip(self):
        assert TrainingReport.from_jsonl("") == TrainingReport()

    def test_blank_lines_skipped(self):
        report = TrainingReport(steps=(StepRecord(0, 1.0, 0.1, (1.0,)),))
        assert TrainingReport.from_jsonl("\n" + report.to_jsonl() + "\n\n") == report


def seq(vectors):
    return FeatureSequence(
        vectors=np.asarray(vectors, dtype=np.float64), frame_rate=12.5, stack_factor=8
    )


class TestTrainRvq:
    def make_corpus(self, rng, n_seqs=4, n_vecs=30, dim=3):
        return [seq(rng.standard_normal((n_vecs, dim))) for _ in range(n_seqs)]

    def test_epochs_zero_identity(self, rng):
        stack = small_stack()
        out, report = train_rvq(
            stack, self.make_corpus(rng), TrainingSchedule(), epochs=0
        )
        assert out is stack
        assert report.steps == ()

    def test_negative_epochs(self, rng):
        with pytest.raises(InvalidConfig):
            train_rvq(small_stack(), self.make_corpus(rng), TrainingSchedule(), epochs=-1)

    def test_empty_corpus(self):
        with pytest.raises(EmptyInput):
            train_rvq(small_stack(), [], TrainingSchedule())

    def test_dim_mismatch(self, rng):
        corpus = [seq(rng.standard_normal((10, 5)))]
        with pytest.raises(ShapeMismatch):
            train_rvq(small_stack(dim=3), corpus, TrainingSchedule())

    def test_input_stack_unmodified(self, rng):
        stack = small_stack()
        before = [book.vectors.copy() for book in stack.layers]
        train_rvq(stack, self.make_corpus(rng), TrainingSchedule(), epochs=2, seed=1)
        for book, prev in zip(stack.layers, before):
            assert np.array_equal(book.vectors, prev)

    def test_deterministic(self, rng):
        corpus = self.make_corpus(rng)
        kwargs = dict(
            gumbel=GumbelConfig(temperature=1.0, enabled=True, seed=5),
            dropout=DropoutConfig(keep_prob_per_layer=0.8, seed=6),
            epochs=3,
            seed=7,
        )
        a, ra = train_rvq(small_stack(), corpus, TrainingSchedule(), **kwargs)
        b, rb = train_rvq(small_stack(), corpus, TrainingSchedule(), **kwargs)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.vectors, lb.vectors)
            assert np.array_equal(la.usage_counts, lb.usage_counts)
        assert ra == rb

    def test_report_length_and_fields(self, rng):
        corpus = self.make_corpus(rng, n_seqs=3)
        _, report = train_rvq(small_stack(), corpus, TrainingSchedule(), epochs=2)
        assert len(report.steps) == 6
        assert [r.step for r in report.steps] == list(range(6))
        for rec in report.steps:
            assert rec.commit_loss >= 0
            assert rec.feature_mae >= 0
            assert len(rec.utilization) == 3
            assert all(0 <= u <= 1 for u in rec.utilization)

    def test_gate_off_freezes_codebooks(self, rng):
        stack = small_stack()
        sched = TrainingSchedule(replace_start=0.0, replace_end=0.0, total_steps=10)
        out, report = train_rvq(stack, self.make_corpus(rng), sched, epochs=2)
        for src, dst in zip(stack.layers, out.layers):
            assert np.array_equal(src.vectors, dst.vectors)
        assert len(report.steps) == 8  # still reported every step

    def test_training_tightens_fit(self, rng):
        # full replacement on clusterable data must shrink commit loss
        centers = rng.standard_normal((4, 3)) * 5
        x = centers[rng.integers(0, 4, 200)] + rng.standard_normal((200, 3)) * 0.05
        stack = init_rvq_stack((4,), x[:4], ema_decay=0.2, seed=0)
        sched = TrainingSchedule(replace_start=1.0, replace_end=1.0, total_steps=10)
        _, report = train_rvq(
            stack, [seq(x)], sched, epochs=10, mode="standard_ema", seed=2
        )
        assert report.steps[-1].commit_loss < report.steps[0].commit_loss

    def test_restart_revives_dead_entries(self, rng):
        # all codewords identical: without restart only one entry is used
        x = rng.standard_normal((100, 3))
        dup = Codebook(np.tile(x[0], (8, 1)), ema_decay=0.95)
        sched = TrainingSchedule(replace_start=1.0, replace_end=1.0, total_steps=50)
        out, report = train_rvq(
            RvqStack([dup]),
            [seq(x)],
            sched,
            epochs=40,
            mode="standard_ema",
            dead_threshold=3,
            restart=True,
            seed=3,
        )
        assert report.steps[-1].utilization[0] > report.steps[0].utilization[0]
