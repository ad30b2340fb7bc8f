import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contrel.model import (ClassifierHead, Encoder, HeadStates, Model, apply_head_gradients,
                           empty_head, encode, encode_batch, forward, grow, init_encoder,
                           init_head_states, load_checkpoint, restore_prev, save_checkpoint,
                           snapshot_prev)
from contrel.numerics import adam_step, init_adam_state

# produced once from init_encoder(4, 3, 5, seed=7) on the input below and pinned
GOLDEN_INPUT = np.array([0.5, -1.0, 2.0, 0.25])
GOLDEN_OUTPUT = np.array([
    -0.20781982388280137, -1.2473527851365582, -0.7054049207135322,
    -0.830811984126408, -0.4109053608217757,
])


def small_head(seed=0, boundary=2, total=5, d=4):
    rng = np.random.default_rng(seed)
    return ClassifierHead(weights=rng.normal(size=(d, total)), boundary=boundary,
                          relation_ids=list(range(total)))


class TestEncoder:
    def test_zero_weights_give_zero_vector(self):
        enc = Encoder(w1=np.zeros((3, 4)), b1=np.zeros(4), w2=np.zeros((4, 2)),
                      b2=np.zeros(2), activation="tanh")
        assert np.allclose(encode(enc, np.array([1.0, -2.0, 3.0])), 0.0)

    def test_identity_passthrough_without_activation(self):
        enc = Encoder(w1=np.eye(3), b1=np.zeros(3), w2=np.eye(3), b2=np.zeros(3),
                      activation="identity")
        x = np.array([0.3, -1.2, 4.0])
        assert np.allclose(encode(enc, x), x)

    def test_golden_vector_seed7(self):
        enc = init_encoder(4, 3, 5, seed=7)
        assert np.allclose(encode(enc, GOLDEN_INPUT), GOLDEN_OUTPUT, rtol=0, atol=1e-14)

    def test_same_seed_bit_identical(self):
        a = init_encoder(6, 5, 4, seed=123)
        b = init_encoder(6, 5, 4, seed=123)
        assert a.w1.tobytes() == b.w1.tobytes()
        assert a.w2.tobytes() == b.w2.tobytes()

    def test_dim_mismatch(self):
        enc = init_encoder(4, 3, 5, seed=0)
        with pytest.raises(ValueError):
            encode(enc, np.zeros(5))

    def test_unknown_activation_rejected(self):
        with pytest.raises(ValueError):
            Encoder(w1=np.eye(2), b1=np.zeros(2), w2=np.eye(2), b2=np.zeros(2),
                    activation="relu")


class TestForward:
    def test_zero_head_gives_uniform(self):
        enc = init_encoder(3, 3, 4, seed=1)
        head = ClassifierHead(weights=np.zeros((4, 5)), boundary=0, relation_ids=list(range(5)))
        probs = forward(enc, head, np.array([1.0, 2.0, 3.0]))
        assert np.allclose(probs, 0.2)

    def test_single_column_head(self):
        enc = init_encoder(3, 3, 4, seed=1)
        head = ClassifierHead(weights=np.ones((4, 1)), boundary=0, relation_ids=[9])
        assert np.allclose(forward(enc, head, np.array([1.0, 2.0, 3.0])), [1.0])

    def test_empty_head_rejected(self):
        enc = init_encoder(3, 3, 4, seed=1)
        with pytest.raises(ValueError):
            forward(enc, empty_head(4), np.zeros(3))

    def test_distribution_sums_to_one(self):
        enc = init_encoder(3, 3, 4, seed=2)
        head = small_head(d=4)
        probs = forward(enc, head, np.array([0.5, -0.5, 1.0]))
        assert abs(probs.sum() - 1.0) < 1e-12


class TestGrow:
    def test_grow_empty(self):
        head = grow(empty_head(6), [10, 11, 12, 13], init_seed=0)
        assert head.boundary == 0
        assert head.weights.shape == (6, 4)
        assert head.relation_ids == [10, 11, 12, 13]

    def test_preserves_old_columns_bitwise(self):
        head = grow(empty_head(6), [0, 1], init_seed=0)
        first = head.weights.copy()
        head2 = grow(head, [2, 3, 4], init_seed=1)
        assert head2.weights[:, :2].tobytes() == first.tobytes()
        assert head2.boundary == 2

    def test_same_seed_same_columns(self):
        a = grow(empty_head(5), [1, 2], init_seed=42)
        b = grow(empty_head(5), [1, 2], init_seed=42)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_duplicate_relation_rejected(self):
        head = grow(empty_head(5), [1, 2], init_seed=0)
        with pytest.raises(ValueError):
            grow(head, [2, 3], init_seed=0)
        with pytest.raises(ValueError):
            grow(head, [4, 4], init_seed=0)

    @given(st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=5),
           st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=25)
    def test_growth_sequences_never_touch_old_columns(self, sizes, seed):
        head = empty_head(3)
        next_id = 0
        snapshots = []
        for i, size in enumerate(sizes):
            head = grow(head, range(next_id, next_id + size), init_seed=seed + i)
            next_id += size
            snapshots.append(head.weights.copy())
        # every earlier snapshot is a bitwise prefix of the final weights
        for snap in snapshots:
            assert head.weights[:, :snap.shape[1]].tobytes() == snap.tobytes()


class TestSnapshotRestore:
    def test_empty_snapshot(self):
        snap = snapshot_prev(grow(empty_head(4), [0, 1], init_seed=0))
        assert snap.columns.shape == (4, 0)
        assert snap.relation_ids == ()

    def test_snapshot_immune_to_head_mutation(self):
        head = small_head(boundary=3)
        snap = snapshot_prev(head)
        before = snap.columns.copy()
        head.weights[:, :] = 99.0
        assert np.array_equal(snap.columns, before)

    def test_snapshot_is_readonly(self):
        snap = snapshot_prev(small_head(boundary=2))
        with pytest.raises(ValueError):
            snap.columns[0, 0] = 1.0

    def test_round_trip_bit_exact(self):
        head = small_head(boundary=3)
        snap = snapshot_prev(head)
        restored = restore_prev(head, snap)
        assert restored.weights.tobytes() == head.weights.tobytes()

    def test_restore_after_mutation_recovers_prev_only(self):
        head = small_head(boundary=3)
        snap = snapshot_prev(head)
        mutated = ClassifierHead(weights=head.weights + 1.0, boundary=3,
                                 relation_ids=list(head.relation_ids))
        restored = restore_prev(mutated, snap)
        assert restored.weights[:, :3].tobytes() == snap.columns.tobytes()
        assert np.array_equal(restored.weights[:, 3:], head.weights[:, 3:] + 1.0)

    def test_empty_snapshot_noop(self):
        head = grow(empty_head(4), [0, 1], init_seed=0)
        snap = snapshot_prev(head)
        restored = restore_prev(head, snap)
        assert restored.weights.tobytes() == head.weights.tobytes()

    def test_mismatched_count_rejected(self):
        head = small_head(boundary=3)
        other = snapshot_prev(small_head(boundary=2))
        with pytest.raises(ValueError):
            restore_prev(head, other)

    def test_mismatched_ids_rejected(self):
        head = small_head(boundary=2)
        bad = snapshot_prev(ClassifierHead(weights=head.weights.copy(), boundary=2,
                                           relation_ids=[7, 8, 2, 3, 4]))
        with pytest.raises(ValueError):
            restore_prev(head, bad)


class TestApplyHeadGradients:
    def test_zero_alpha_prev_freezes_previous_group(self):
        head = small_head(boundary=2)
        states = init_head_states(head)
        before = head.weights[:, :2].copy()
        rng = np.random.default_rng(0)
        for _ in range(5):
            head, states = apply_head_gradients(head, rng.normal(size=head.weights.shape),
                                                states, alpha_prev=0.0, alpha_cur=1e-3)
        assert head.weights[:, :2].tobytes() == before.tobytes()
        assert not np.array_equal(head.weights[:, 2:], small_head(boundary=2).weights[:, 2:])

    def test_equal_rates_match_single_group_update(self):
        # merged-state oracle: one Adam over the whole matrix
        head = small_head(boundary=2)
        merged_w = head.weights.copy()
        merged_state = init_adam_state(merged_w)
        states = init_head_states(head)
        rng = np.random.default_rng(1)
        for _ in range(4):
            grads = rng.normal(size=head.weights.shape)
            head, states = apply_head_gradients(head, grads, states,
                                                alpha_prev=1e-3, alpha_cur=1e-3)
            merged_w, merged_state = adam_step(merged_w, grads, merged_state, lr=1e-3)
        assert head.weights.tobytes() == merged_w.tobytes()

    def test_zero_gradient_keeps_both_groups(self):
        head = small_head(boundary=2)
        states = init_head_states(head)
        before = head.weights.copy()
        head, _ = apply_head_gradients(head, np.zeros_like(before), states,
                                       alpha_prev=1e-3, alpha_cur=1e-3)
        assert head.weights.tobytes() == before.tobytes()

    def test_shape_mismatch(self):
        head = small_head()
        with pytest.raises(ValueError):
            apply_head_gradients(head, np.zeros((2, 2)), init_head_states(head),
                                 alpha_prev=0.0, alpha_cur=0.0)

    def test_boundary_zero_works(self):
        head = grow(empty_head(3), [0, 1], init_seed=0)
        states = init_head_states(head)
        out, _ = apply_head_gradients(head, np.ones_like(head.weights), states,
                                      alpha_prev=1e-3, alpha_cur=1e-3)
        assert out.weights.shape == head.weights.shape


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        enc = init_encoder(4, 3, 5, seed=9)
        head = grow(grow(empty_head(5), [3, 1], init_seed=0), [7], init_seed=1)
        model = Model(encoder=enc, head=head,
                      opt_states={"head_cur": init_adam_state(head.weights[:, 2:])})
        model.opt_states["head_cur"].t = 17
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.encoder.w1.tobytes() == enc.w1.tobytes()
        assert loaded.encoder.b2.tobytes() == enc.b2.tobytes()
        assert loaded.head.weights.tobytes() == head.weights.tobytes()
        assert loaded.head.boundary == head.boundary
        assert loaded.head.relation_ids == head.relation_ids
        assert loaded.opt_states["head_cur"].t == 17
        assert loaded.opt_states["head_cur"].m.tobytes() == model.opt_states["head_cur"].m.tobytes()

    def test_version_check(self, tmp_path):
        enc = init_encoder(2, 2, 2, seed=0)
        model = Model(encoder=enc, head=empty_head(2))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        import json
        import numpy as np
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        meta = json.loads(bytes(arrays["meta"]).decode())
        meta["version"] = 999
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)


class TestEncodeBatch:
    def test_matches_single_encode(self):
        enc = init_encoder(4, 3, 5, seed=3)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 4))
        batch = encode_batch(enc, x)
        for i in range(6):
            assert np.allclose(batch[i], encode(enc, x[i]), rtol=1e-12)
