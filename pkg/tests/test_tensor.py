import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from senres.errors import FormatError, ShapeError, TapeError
from senres.tensor import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    dumps_params,
    grad_check,
    loads_params,
    ops,
    tape_grad,
)

from gradcases import PRIMITIVE_CASES


class TestMatmul:
    def test_identity(self):
        out = ops.matmul(np.eye(2), [[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_hand_arithmetic(self):
        assert ops.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]

    def test_sum_gradient_is_row_sums_of_b(self):
        rng = np.random.default_rng(0)
        a, b = Tensor(rng.standard_normal((4, 3)), requires_grad=True), Tensor(rng.standard_normal((3, 5)))
        with Tape() as tape:
            loss = ops.sum(ops.matmul(a, b))
        tape.backward(loss)
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data.sum(axis=1), (4, 3)), rtol=1e-12)
        err = grad_check(lambda a_: ops.sum(ops.matmul(a_, b)), a.data)
        assert err < 1e-4

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            ops.matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestConv1d:
    def test_constant_signal(self):
        k, cin = 3, 4
        out = ops.conv1d(np.ones((1, 6, cin)), np.ones((k, cin, 1)), np.zeros(1))
        assert out.shape == (1, 4, 1)
        np.testing.assert_array_equal(out.data, k * cin)

    def test_delta_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 8, 3))
        kern = np.zeros((4, 3, 3))
        kern[0] = np.eye(3)
        out = ops.conv1d(x, kern, np.zeros(3))
        np.testing.assert_array_equal(out.data, x[:, :5, :])

    def test_too_short(self):
        with pytest.raises(ShapeError):
            ops.conv1d(np.ones((1, 2, 1)), np.ones((3, 1, 1)), np.zeros(1))


class TestLSTM:
    def test_zero_network(self):
        x = np.random.default_rng(2).standard_normal((3, 4))
        h, c = ops.lstm_step(x, np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((4, 8)), np.zeros((2, 8)), np.zeros(8))
        np.testing.assert_array_equal(h.data, 0)
        np.testing.assert_array_equal(c.data, 0)

    def test_saturated_forget_gate_keeps_cell(self):
        rng = np.random.default_rng(3)
        hd = 3
        bias = np.zeros(4 * hd)
        bias[:hd] = -20.0
        bias[hd:2 * hd] = 20.0
        c_prev = rng.standard_normal((2, hd))
        _, c = ops.lstm_step(rng.standard_normal((2, 4)) * 0.1, rng.standard_normal((2, hd)) * 0.1, c_prev,
                             rng.standard_normal((4, 4 * hd)) * 0.1, rng.standard_normal((hd, 4 * hd)) * 0.1, bias)
        assert np.max(np.abs(c.data - c_prev)) < 1e-3

    def test_three_chained_steps_gradient(self):
        rng = np.random.default_rng(4)
        d, hd = 3, 2
        xs = [rng.standard_normal((2, d)) for _ in range(3)]
        wout = rng.standard_normal((2, hd))

        def f(w_x, w_h, b, h0):
            h, c = h0, Tensor(np.zeros((2, hd)))
            for x in xs:
                h, c = ops.lstm_step(x, h, c, w_x, w_h, b)
            return ops.sum(ops.mul(h, Tensor(wout)))

        err = grad_check(f, rng.standard_normal((d, 4 * hd)) * 0.5, rng.standard_normal((hd, 4 * hd)) * 0.5,
                         rng.standard_normal(4 * hd) * 0.5, rng.standard_normal((2, hd)))
        assert err < 1e-4

    def test_sequence_matches_chained_steps(self):
        rng = np.random.default_rng(5)
        b, t, d, hd = 3, 6, 4, 5
        x = rng.standard_normal((b, t, d))
        w_x, w_h, bias = rng.standard_normal((d, 4 * hd)), rng.standard_normal((hd, 4 * hd)), rng.standard_normal(4 * hd)
        hs = ops.lstm(x, w_x, w_h, bias).data
        h, c = np.zeros((b, hd)), np.zeros((b, hd))
        for step in range(t):
            h, c = ops.lstm_step(x[:, step], h, c, w_x, w_h, bias)
            np.testing.assert_allclose(hs[:, step], h.data, rtol=1e-12, atol=1e-14)

    def test_gate_layout_mismatch(self):
        with pytest.raises(ShapeError):
            ops.lstm_step(np.ones((1, 3)), np.zeros((1, 2)), np.zeros((1, 2)), np.ones((3, 6)), np.ones((2, 6)), np.zeros(6))


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(ops.l2_normalize([3.0, 4.0]).data, [0.6, 0.8], rtol=1e-15)

    def test_unit_vector_idempotent(self):
        v = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(ops.l2_normalize(v).data, v)

    def test_zero_vector(self):
        np.testing.assert_array_equal(ops.l2_normalize([0.0, 0.0]).data, [0.0, 0.0])

    @given(arrays(np.float64, (5, 3), elements=st.floats(-1e3, 1e3)))
    @settings(max_examples=100, deadline=None)
    def test_norms_are_zero_or_one(self, v):
        norms = np.linalg.norm(ops.l2_normalize(v).data, axis=-1)
        ok = (norms == 0) | (np.abs(norms - 1) <= 1e-12)
        assert ok.all()


class TestAdam:
    def test_zero_gradient_fresh_state(self):
        p = Tensor([1.0, -2.0])
        adam_step([p], [np.zeros(2)], AdamState(lr=0.1))
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        p = Tensor([1.0])
        state = AdamState(lr=0.1)
        adam_step([p], [np.array([1.0])], state)
        np.testing.assert_allclose(p.data, [0.9], atol=1e-8)
        assert state.step == 1

    def test_repeated_gradient_keeps_sign(self):
        p = Tensor([0.0])
        state = AdamState(lr=0.01)
        before = p.data.copy()
        deltas = []
        for _ in range(2):
            adam_step([p], [np.array([0.3])], state)
            deltas.append(float(p.data[0] - before[0]))
            before = p.data.copy()
        assert all(d < 0 for d in deltas)
        assert state.step == 2

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step([Tensor(np.zeros(3))], [np.zeros(2)], AdamState())


class TestTape:
    def test_square_at_three(self):
        assert grad_check(lambda x: ops.sum(ops.mul(x, x)), np.array(3.0)) < 1e-8

    def test_constant_function(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            out = ops.sum(Tensor(np.array([5.0, 6.0])))
            ops.mul(x, 2.0)
        tape.backward(out)
        np.testing.assert_array_equal(x.grad, 0.0)
        assert grad_check(lambda x_: ops.sum(ops.scale(ops.sub(x_, x_), 3.0)), np.array([1.0, 2.0])) == 0.0

    def test_second_backward_is_an_error(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        with Tape() as tape:
            y = ops.mul(x, x)
        tape.backward(y)
        with pytest.raises(TapeError):
            tape.backward(y)

    def test_reverse_order_visit(self):
        # y = exp(x) * x depends on two branches converging; both must arrive before exp's rule runs
        x0 = 0.7
        (g,) = tape_grad(lambda x: ops.mul(ops.exp(x), x), [Tensor(np.array(x0))])
        assert g == pytest.approx(np.exp(x0) * (1 + x0), rel=1e-14)

    def test_leaves_always_get_a_gradient(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            unused = ops.mul(b, 2.0)
            loss = ops.sum(a)
        tape.backward(loss)
        assert unused.requires_grad
        np.testing.assert_array_equal(b.grad, 0.0)

    def test_no_recording_outside_tape(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = ops.mul(x, x)
        assert not y.requires_grad

    def test_stop_gradient_is_exactly_zero(self):
        x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.mul(ops.stop_gradient(x), Tensor([2.0, 3.0])))
        tape.backward(loss)
        assert np.all(x.grad == 0.0)


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % (1 << 32))
    for _ in range(20):
        f, point = PRIMITIVE_CASES[name](rng)
        assert grad_check(f, *point) < 1e-4, name


class TestCheckpoint:
    def _params(self):
        rng = np.random.default_rng(7)
        return {"enc.conv0.weight": Tensor(rng.standard_normal((5, 6, 4))),
                "enc.conv0.bias": Tensor(np.zeros(4)),
                "cls.weight": Tensor(rng.standard_normal((4, 3)).astype(np.float32))}

    def test_round_trip_bit_exact(self):
        params = self._params()
        blob = dumps_params(params)
        back = loads_params(blob)
        assert list(back) == list(params)
        for k in params:
            assert back[k].data.tobytes() == params[k].data.astype(np.float64).tobytes()
        assert dumps_params(back) == blob

    def test_header_layout(self):
        blob = dumps_params({"w": Tensor([[1.0, 2.0]])})
        assert blob[:4] == b"SPRM"
        version, count = struct.unpack_from("<HI", blob, 4)
        assert (version, count) == (1, 1)
        (nlen,) = struct.unpack_from("<H", blob, 10)
        assert blob[12:12 + nlen] == b"w"
        assert blob[13] == 2 and struct.unpack_from("<II", blob, 14) == (1, 2)
        assert struct.unpack_from("<2d", blob, 22) == (1.0, 2.0)

    def test_bad_magic(self):
        blob = bytearray(dumps_params(self._params()))
        blob[0:4] = b"XXXX"
        with pytest.raises(FormatError):
            loads_params(bytes(blob))
