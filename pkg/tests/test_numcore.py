import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plnmt.errors import ContractError, DimensionError, NumericError
from plnmt.numcore import ParamStore, Tape, Tensor, check_gradients
from plnmt.numcore.gradcheck import relative_error
from plnmt.numcore.tape import log_softmax, sample_gumbel, softmax

from oracles import scalar_lstm


def _store(**arrays):
    return ParamStore.from_arrays({k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()})


class TestParamStore:
    def test_uniform_init_range_and_zero_bias(self):
        p = ParamStore(seed=3)
        p.add_affine("a", 5, 7)
        assert p["a.W"].shape == (7, 5)
        assert np.all(np.abs(p["a.W"]) <= 0.08)
        assert np.all(p["a.b"] == 0)

    def test_duplicate_name_rejected(self):
        p = ParamStore()
        p.add("w", (2,))
        with pytest.raises(ContractError):
            p.add("w", (2,))

    def test_shape_frozen(self):
        p = ParamStore()
        p.add("w", (2, 3))
        with pytest.raises(DimensionError):
            p.set("w", np.zeros((3, 2)))

    def test_seed_determinism(self):
        a, b = ParamStore(seed=11), ParamStore(seed=11)
        a.add_lstm("l", 3, 4)
        b.add_lstm("l", 3, 4)
        np.testing.assert_array_equal(a["l.W"], b["l.W"])

    def test_copy_is_independent(self):
        p = ParamStore()
        p.add("w", (2,))
        q = p.copy()
        q["w"][0] = 5.0
        assert p["w"][0] != 5.0


class TestAffine:
    def test_identity(self):
        tape = Tape(_store(**{"m.W": np.eye(2), "m.b": np.zeros(2)}))
        y = tape.affine(Tensor(np.array([[1.0, 2.0]])), "m")
        np.testing.assert_array_equal(y.value, [[1.0, 2.0]])

    def test_constant_map(self):
        tape = Tape(_store(**{"m.W": np.zeros((1, 4)), "m.b": [3.0]}))
        y = tape.affine(Tensor(np.random.default_rng(0).normal(size=(1, 4))), "m")
        np.testing.assert_array_equal(y.value, [[3.0]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(7)
        W, b, x = rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(2, 4))
        y = Tape(_store(**{"m.W": W, "m.b": b})).affine(Tensor(x), "m").value
        for n in range(2):
            for r in range(3):
                expect = b[r] + sum(W[r, j] * x[n, j] for j in range(4))
                assert abs(y[n, r] - expect) < 1e-12

    def test_dimension_error_names_parameter(self):
        tape = Tape(_store(**{"proj.W": np.zeros((2, 3)), "proj.b": np.zeros(2)}))
        with pytest.raises(DimensionError, match="proj.W"):
            tape.affine(Tensor(np.zeros((1, 4))), "proj")


class TestSoftmaxXent:
    def test_uniform_logits_give_log_v(self):
        tape = Tape(ParamStore())
        loss = tape.softmax_xent(Tensor(np.zeros(7)), 3)
        assert abs(float(loss.value) - math.log(7)) < 1e-12

    def test_saturated(self):
        loss = Tape(ParamStore()).softmax_xent(Tensor(np.array([30.0, -30.0])), 0)
        assert float(loss.value) < 1e-9

    def test_formula_oracle(self):
        z = np.random.default_rng(3).normal(size=9)
        loss = Tape(ParamStore()).softmax_xent(Tensor(z), 4)
        denom = 0.0
        for v in z:
            denom += math.exp(v)
        assert abs(float(loss.value) - (-(z[4] - math.log(denom)))) < 1e-12

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            Tape(ParamStore()).softmax_xent(Tensor(np.zeros(3)), 3)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
    def test_softmax_rows_sum_to_one(self, values):
        z = np.array(values)
        assert abs(softmax(z).sum() - 1.0) < 1e-9
        assert abs(np.exp(log_softmax(z)).sum() - 1.0) < 1e-9

    def test_softmax_float32(self):
        z = np.random.default_rng(0).normal(size=(5, 40)).astype(np.float32)
        np.testing.assert_allclose(softmax(z).sum(axis=-1), 1.0, atol=1e-5)


class TestLstmCell:
    def _cell(self, W, b, x, h, c, name="l"):
        tape = Tape(_store(**{f"{name}.W": W, f"{name}.b": b}))
        h2, c2 = tape.lstm_cell(Tensor(x[None]), Tensor(h[None]), Tensor(c[None]), name)
        return h2.value[0], c2.value[0]

    def test_zero_network(self):
        # from a zero state the candidate tanh(0) keeps the cell at zero
        H, X = 3, 2
        x = np.random.default_rng(0).normal(size=X)
        h, c = self._cell(np.zeros((4 * H, X + H)), np.zeros(4 * H), x, np.zeros(H), np.zeros(H))
        np.testing.assert_array_equal(h, np.zeros(H))
        np.testing.assert_array_equal(c, np.zeros(H))

    def test_gate_saturation_keeps_cell(self):
        H, X = 2, 3
        rng = np.random.default_rng(1)
        b = np.zeros(4 * H)
        b[:H] = -30.0          # input gate shut
        b[H:2 * H] = 30.0      # forget gate open
        c = rng.normal(size=H)
        _, c2 = self._cell(np.zeros((4 * H, X + H)), b, rng.normal(size=X), rng.normal(size=H), c)
        assert np.max(np.abs(c2 - c)) < 1e-6

    def test_scalar_oracle(self):
        rng = np.random.default_rng(11)
        H, X = 3, 4
        W, b = rng.normal(size=(4 * H, X + H)), rng.normal(size=4 * H)
        x, h, c = rng.normal(size=X), rng.normal(size=H), rng.normal(size=H)
        got_h, got_c = self._cell(W, b, x, h, c)
        want_h, want_c = scalar_lstm(x, h, c, W, b)
        np.testing.assert_allclose(got_h, want_h, atol=1e-12)
        np.testing.assert_allclose(got_c, want_c, atol=1e-12)

    def test_nonfinite_input(self):
        H = 2
        with pytest.raises(NumericError):
            self._cell(np.zeros((4 * H, 1 + H)), np.zeros(4 * H), np.array([np.nan]),
                       np.zeros(H), np.zeros(H))

    def test_keep_mask_carries_state(self):
        rng = np.random.default_rng(2)
        H, X = 2, 3
        store = _store(**{"l.W": rng.normal(size=(4 * H, X + H)), "l.b": np.zeros(4 * H)})
        h = rng.normal(size=(2, H))
        c = rng.normal(size=(2, H))
        tape = Tape(store)
        h2, c2 = tape.lstm_cell(Tensor(rng.normal(size=(2, X))), Tensor(h), Tensor(c), "l",
                                keep=np.array([1, 0]))
        np.testing.assert_array_equal(h2.value[1], h[1])
        np.testing.assert_array_equal(c2.value[1], c[1])
        assert not np.allclose(h2.value[0], h[0])


class TestBackward:
    def test_sum_of_weight_is_ones(self):
        p = ParamStore(seed=0)
        p.add("W", (3, 2))
        tape = Tape(p)
        grads = tape.backward(tape.sum(tape.param("W")))
        np.testing.assert_array_equal(grads["W"], np.ones((3, 2)))

    def test_untouched_parameter_gets_zero(self):
        p = ParamStore(seed=0)
        p.add("W", (2,))
        p.add("unused", (4,))
        tape = Tape(p)
        grads = tape.backward(tape.sum(tape.param("W")))
        np.testing.assert_array_equal(grads["unused"], np.zeros(4))

    def test_non_scalar_loss_rejected(self):
        p = ParamStore(seed=0)
        p.add("W", (2,))
        tape = Tape(p)
        with pytest.raises(ContractError):
            tape.backward(tape.param("W"))

    def test_shared_node_gradients_accumulate(self):
        p = _store(w=[2.0])
        tape = Tape(p)
        w = tape.param("w")
        loss = tape.sum(tape.mul(w, w))
        np.testing.assert_allclose(tape.backward(loss)["w"], [4.0])


class TestGradCheck:
    def _affine_closure(self):
        rng = np.random.default_rng(0)
        p = _store(**{"a.W": rng.normal(size=(3, 4)), "a.b": rng.normal(size=3)})
        x = rng.normal(size=(2, 4))

        def closure(params):
            tape = Tape(params)
            return tape, tape.sum(tape.tanh(tape.affine(Tensor(x), "a")))
        return closure, p

    def test_affine_passes_tight(self):
        closure, p = self._affine_closure()
        report = check_gradients(closure, p, tolerance=1e-6)
        assert report.passed, report.format()

    def test_lstm_two_steps(self):
        rng = np.random.default_rng(4)
        H, X = 3, 2
        p = _store(**{"l.W": rng.normal(0, 0.5, size=(4 * H, X + H)),
                      "l.b": rng.normal(0, 0.5, size=4 * H),
                      "o.W": rng.normal(size=(4, H)), "o.b": np.zeros(4)})
        xs = rng.normal(size=(2, 2, X))

        def closure(params):
            tape = Tape(params)
            h = c = tape.const(np.zeros((2, H)))
            for t in range(2):
                h, c = tape.lstm_cell(Tensor(xs[t]), h, c, "l")
            return tape, tape.cross_entropy(tape.affine(h, "o"), [1, 3], [0.5, 0.5])

        report = check_gradients(closure, p, tolerance=1e-4)
        assert report.passed, report.format()

    def test_corrupted_gradient_flags_only_that_parameter(self):
        closure, p = self._affine_closure()
        tape, loss = closure(p)
        grads = tape.backward(loss)
        grads["a.b"] = grads["a.b"] + 0.1
        report = check_gradients(closure, p, tolerance=1e-4, analytic=grads)
        assert report.failures == ["a.b"]
        assert not report.passed

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-9)[()] < 1e-2
        assert relative_error(1.0, 1.0)[()] == 0.0

    def test_composite_ops(self):
        rng = np.random.default_rng(8)
        p = _store(**{"q.W": rng.normal(size=(3, 3)), "q.b": rng.normal(size=3),
                      "emb": rng.normal(size=(5, 3))})
        keys = rng.normal(size=(2, 4, 3))
        mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)

        def closure(params):
            tape = Tape(params)
            e = tape.embed(np.array([1, 4]), "emb")
            q = tape.affine(e, "q")
            kv = tape.stack([e, e, q, q], axis=1)
            ctx, _ = tape.attention(q, tape.add(Tensor(keys), kv), kv, mask)
            mixed = tape.concat([ctx, tape.sigmoid(q)])
            mean = tape.masked_mean(tape.reshape(mixed, (2, 2, 3)), np.ones((2, 2)))
            return tape, tape.sum(tape.scale(tape.sub(tape.slice(mixed, 0, 3), mean), 0.7))

        report = check_gradients(closure, p, tolerance=1e-4)
        assert report.passed, report.format()


class TestDropout:
    def test_rate(self):
        tape = Tape(ParamStore(), train=True, rng=np.random.default_rng(0))
        out = tape.dropout(Tensor(np.ones(200_000)), 0.2).value
        assert abs(np.mean(out == 0) - 0.2) < 0.02
        # survivors are rescaled so the expectation is unchanged
        np.testing.assert_allclose(out[out != 0], 1.25)

    def test_identity_in_eval(self):
        x = np.random.default_rng(1).normal(size=(3, 4))
        out = Tape(ParamStore(), train=False).dropout(Tensor(x), 0.2).value
        np.testing.assert_array_equal(out, x)


class TestGumbel:
    def test_noise_is_gumbel(self):
        g = sample_gumbel(np.random.default_rng(0), (200_000,))
        # Gumbel(0, 1): mean is the Euler-Mascheroni constant, variance pi^2 / 6
        assert abs(g.mean() - 0.5772156649) < 0.01
        assert abs(g.var() - math.pi ** 2 / 6) < 0.02

    def test_bad_temperature(self):
        tape = Tape(ParamStore())
        with pytest.raises(ContractError):
            tape.gumbel_softmax(Tensor(np.zeros((1, 3))), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.1, 0.5, 1.0, 3.0]))
    def test_outputs_are_distributions(self, seed, tau):
        rng = np.random.default_rng(seed)
        logits = Tensor(rng.normal(size=(4, 6)))
        tape = Tape(ParamStore(), rng=rng)
        soft = tape.gumbel_softmax(logits, tau).value
        np.testing.assert_allclose(soft.sum(axis=-1), 1.0, atol=1e-9)
        assert np.all(soft >= 0)
        hard = tape.gumbel_softmax(logits, tau, hard=True).value
        assert set(np.unique(hard)) <= {0.0, 1.0}
        np.testing.assert_array_equal(hard.sum(axis=-1), 1.0)
