import numpy as np
import pytest

from hairgan import autodiff as ad
from hairgan.autodiff import kernels as K
from hairgan.errors import InvalidInput, NumericFault, ShapeError

from helpers import fd_rel_err

RNG = np.random.default_rng(42)
TOL = 1e-5


def r(*shape):
    return RNG.normal(size=shape)


class TestPrimitiveGradients:
    """Every primitive against central finite differences."""

    @pytest.mark.parametrize("name,f,shapes", [
        ("add", lambda a, b: ad.sum_all(ad.square(ad.add(a, b))),
         [(3, 4), (3, 4)]),
        ("add_scalar", lambda a, b: ad.sum_all(ad.square(ad.add(a, b))),
         [(3, 4), ()]),
        ("sub", lambda a, b: ad.sum_all(ad.square(ad.sub(a, b))),
         [(5,), (5,)]),
        ("mul", lambda a, b: ad.sum_all(ad.square(ad.mul(a, b))),
         [(4, 2), (4, 2)]),
        ("mul_scalar", lambda a, b: ad.sum_all(ad.square(ad.mul(a, b))),
         [(4, 2), ()]),
        ("scalar_mul", lambda a: ad.sum_all(ad.scalar_mul(ad.square(a), 1.7)),
         [(6,)]),
        ("square", lambda a: ad.sum_all(ad.square(ad.square(a))), [(7,)]),
        ("sum", lambda a: ad.square(ad.sum_all(a)), [(3, 5)]),
        ("mean", lambda a: ad.square(ad.mean_all(a)), [(4, 4)]),
        ("reshape", lambda a: ad.sum_all(ad.square(ad.reshape(a, (8,)))),
         [(2, 4)]),
        ("dim_expand", lambda a: ad.sum_all(ad.square(ad.dim_expand(a))),
         [(2, 3, 4)]),
        ("slice", lambda a: ad.sum_all(ad.square(
            ad.slice_tensor(a, (slice(1, 3), slice(None))))), [(4, 3)]),
        ("transpose", lambda a: ad.sum_all(ad.square(ad.transpose2d(a))),
         [(3, 5)]),
        ("matmul", lambda a, b: ad.sum_all(ad.square(ad.matmul(a, b))),
         [(3, 4), (4, 2)]),
        ("add_bias", lambda a, b: ad.sum_all(ad.square(ad.add_bias(a, b))),
         [(5, 4, 3), (3,)]),
        ("sum_leading", lambda a: ad.sum_all(ad.square(ad.sum_leading(a))),
         [(4, 5, 2)]),
        ("broadcast_full", lambda a: ad.sum_all(ad.square(
            ad.broadcast_full(a, (3, 3)))), [()]),
        ("dense", lambda x, w, b: ad.square(ad.dense(x, w, b)),
         [(3, 4), (12,), ()]),
        ("concat", lambda a, b: ad.sum_all(ad.square(
            ad.concat_channels([a, b]))), [(4, 2), (4, 3)]),
    ])
    def test_fd(self, name, f, shapes):
        xs = [r(*s) for s in shapes]
        assert fd_rel_err(f, xs) < TOL, name

    def test_sqrt(self):
        xs = [np.abs(r(6)) + 0.5]
        assert fd_rel_err(lambda a: ad.sum_all(ad.sqrt(a)), xs) < TOL

    def test_reciprocal(self):
        xs = [np.abs(r(6)) + 0.5]
        assert fd_rel_err(lambda a: ad.sum_all(ad.reciprocal(a)), xs) < TOL

    def test_relu(self):
        x = r(40)
        x[np.abs(x) < 1e-2] += 0.1  # stay clear of the kink
        assert fd_rel_err(lambda a: ad.sum_all(ad.square(ad.relu(a))),
                          [x]) < TOL

    @pytest.mark.parametrize("stride", [1, 2])
    def test_conv2d(self, stride):
        xs = [r(6, 5, 3), r(5, 5, 3, 2)]
        assert fd_rel_err(lambda x, w: ad.sum_all(ad.square(
            ad.conv2d(x, w, stride))), xs) < TOL

    @pytest.mark.parametrize("stride", [1, 2])
    def test_conv3d(self, stride):
        xs = [r(4, 5, 3, 2), r(3, 3, 3, 2, 2)]
        assert fd_rel_err(lambda x, w: ad.sum_all(ad.square(
            ad.conv3d(x, w, stride))), xs) < TOL


class TestConvExamples:
    def test_identity_kernel(self):
        x = r(9, 9, 1)
        w = np.zeros((5, 5, 1, 1))
        w[2, 2, 0, 0] = 1.0
        out = ad.conv2d(ad.Tensor(x), ad.Tensor(w), 1)
        assert np.array_equal(out.data, x)

    def test_all_ones_sums(self):
        # full kernel coverage at the center gives 25, corner clips to 9
        out = ad.conv2d(ad.Tensor(np.ones((5, 5, 1))),
                        ad.Tensor(np.ones((5, 5, 1, 1))), 1).data
        assert out[2, 2, 0] == 25.0
        assert out[0, 0, 0] == 9.0

    def test_shape_rule_1024(self):
        out = ad.conv2d(ad.Tensor(np.zeros((8, 1024, 1))),
                        ad.Tensor(np.zeros((5, 5, 1, 1))), 2)
        assert out.shape == (4, 512, 1)

    def test_conv3d_identity(self):
        x = r(4, 4, 4, 2)
        w = np.zeros((3, 3, 3, 2, 2))
        w[1, 1, 1, 0, 0] = 1.0
        w[1, 1, 1, 1, 1] = 1.0
        out = ad.conv3d(ad.Tensor(x), ad.Tensor(w), 1)
        assert np.allclose(out.data, x)

    def test_conv3d_table_shape(self):
        out = ad.conv3d(ad.Tensor(np.zeros((128, 16, 96, 1))),
                        ad.Tensor(np.zeros((3, 3, 3, 1, 1))), 2)
        assert out.shape == (64, 8, 48, 1)

    def test_conv3d_linearity(self):
        x, w = r(4, 4, 3, 2), r(3, 3, 3, 2, 1)
        a = ad.conv3d(ad.Tensor(3.5 * x), ad.Tensor(w), 1).data
        b = 3.5 * ad.conv3d(ad.Tensor(x), ad.Tensor(w), 1).data
        assert np.allclose(a, b)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            ad.conv2d(ad.Tensor(np.zeros((4, 4, 3))),
                      ad.Tensor(np.zeros((5, 5, 2, 1))), 1)


class TestDimExpandDense:
    def test_dim_expand_shape_and_bits(self):
        x = r(12, 12, 9)
        out = ad.dim_expand(ad.Tensor(x))
        assert out.shape == (12, 12, 9, 1)
        assert np.array_equal(out.data.reshape(12, 12, 9), x)

    def test_dim_expand_gradient_is_reshape(self):
        x = ad.Tensor(r(3, 3, 2))
        out = ad.sum_all(ad.mul(ad.dim_expand(x), ad.dim_expand(x)))
        (g,) = ad.backward(out, [x])
        assert g.shape == (3, 3, 2)
        assert np.allclose(g.data, 2 * x.data)

    def test_dense_one_hot(self):
        x = ad.Tensor(r(2, 3))
        w = np.zeros(6)
        w[4] = 1.0
        out = ad.dense(x, ad.Tensor(w), ad.Tensor(np.zeros(())))
        assert np.isclose(out.item(), x.data.reshape(-1)[4])

    def test_dense_zero_input_gives_bias(self):
        out = ad.dense(ad.Tensor(np.zeros((3, 2))), ad.Tensor(r(6)),
                       ad.Tensor(np.asarray(0.7)))
        assert np.isclose(out.item(), 0.7)

    def test_dense_grad_wrt_x_is_w(self):
        x = ad.Tensor(r(2, 3))
        w = ad.Tensor(r(6))
        out = ad.dense(x, w, ad.Tensor(np.zeros(())))
        (g,) = ad.backward(out, [x])
        assert np.allclose(g.data, w.data.reshape(2, 3))


class TestBackward:
    def test_sum_of_squares(self):
        x = ad.Tensor(np.array([1.0, 2.0, 3.0]))
        (g,) = ad.backward(ad.sum_all(ad.square(x)), [x])
        assert np.array_equal(g.data, [2.0, 4.0, 6.0])

    def test_unreachable_gets_zeros(self):
        x = ad.Tensor(np.array([1.0]))
        z = ad.Tensor(np.array([5.0, 5.0]))
        (gz,) = ad.backward(ad.sum_all(ad.square(x)), [z])
        assert np.array_equal(gz.data, [0.0, 0.0])

    def test_root_must_be_scalar(self):
        x = ad.Tensor(np.ones(3))
        with pytest.raises(InvalidInput):
            ad.backward(ad.square(x), [x])

    def test_second_order(self):
        # d/dx of d(x^3)/dx at x=2: derivative of 3x^2 is 6x = 12
        x = ad.Tensor(np.asarray(2.0))
        y = ad.mul(ad.mul(x, x), x)
        (g1,) = ad.backward(y, [x])
        (g2,) = ad.backward(g1, [x])
        assert np.isclose(g2.item(), 12.0)

    def test_double_backprop_penalty_vs_fd(self):
        # gradient of (||grad_x D(x)|| - 1)^2 w.r.t. weights of a 2-layer D
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=(4, 4, 3, 1))
        w1 = rng.normal(size=(3, 3, 3, 1, 2)) * 0.5
        wfc = rng.normal(size=(4 * 4 * 3 * 2)) * 0.3

        def penalty(w1t, wfct):
            x = ad.Tensor(x0)
            h = ad.relu(ad.conv3d(x, w1t, 1))
            s = ad.dense(h, wfct, ad.constant(np.zeros(())))
            (gx,) = ad.backward(s, [x], create_graph=True)
            n = ad.sqrt(ad.add(ad.sum_all(ad.square(gx)),
                               ad.constant(1e-12)))
            return ad.square(ad.sub(n, ad.constant(np.ones(()))))

        from helpers import sampled_fd_rel_err
        err = sampled_fd_rel_err(penalty, [w1, wfc], coords_per_array=10)
        assert err < 1e-4

    def test_determinism_bitwise(self):
        def run():
            rng = np.random.default_rng(11)
            x = ad.Tensor(rng.normal(size=(6, 6, 2)))
            w = ad.Tensor(rng.normal(size=(5, 5, 2, 3)))
            out = ad.sum_all(ad.square(ad.relu(ad.conv2d(x, w, 2))))
            (g,) = ad.backward(out, [w])
            return out.item(), g.data.copy()

        a, ga = run()
        b, gb = run()
        assert a == b
        assert np.array_equal(ga, gb)


class TestGraphAndFaults:
    def test_graph_topological(self):
        x = ad.Tensor(np.ones(3))
        y = ad.sum_all(ad.square(ad.add(x, x)))
        g = ad.Graph.from_root(y)
        pos = {t.nid: i for i, t in enumerate(g.nodes)}
        for node in g.nodes:
            for p in node.parents:
                assert pos[p.nid] < pos[node.nid]

    def test_tensor_invariant(self):
        t = ad.Tensor(np.zeros((3, 4)))
        assert t.size == 12 and t.shape == (3, 4)

    def test_nan_trips_numeric_fault(self):
        with pytest.raises(NumericFault):
            ad.Tensor(np.array([1.0, np.nan]))

    def test_sqrt_negative_faults(self):
        with pytest.raises(NumericFault):
            ad.sqrt(ad.Tensor(np.array([-1.0])))

    def test_reciprocal_zero_faults(self):
        with pytest.raises(NumericFault):
            ad.reciprocal(ad.Tensor(np.array([0.0])))

    def test_no_grad_produces_leaves(self):
        x = ad.Tensor(np.ones(3))
        with ad.no_grad():
            y = ad.square(x)
        assert y.parents == ()


try:
    from hairgan.autodiff import _convkernels as _ext_mod
except ImportError:
    _ext_mod = None


@pytest.mark.skipif(_ext_mod is None, reason="compiled extension not built")
class TestBackendParity:
    def test_all_kernels_agree(self):
        ext = _ext_mod
        rng = np.random.default_rng(5)
        x = rng.normal(size=(11, 9, 4))
        w = rng.normal(size=(5, 5, 4, 3))
        for s in (1, 2):
            a = K._np_conv2d_fwd(x, w, s)
            b = np.asarray(ext.conv2d_fwd(x, w, s))
            assert np.allclose(a, b, atol=1e-12)
            dy = rng.normal(size=a.shape)
            assert np.allclose(K._np_conv2d_dgrad(dy, w, s, x.shape),
                               ext.conv2d_dgrad(dy, w, s, 11, 9), atol=1e-12)
            assert np.allclose(K._np_conv2d_wgrad(x, dy, s, w.shape),
                               ext.conv2d_wgrad(x, dy, s, 5, 5), atol=1e-12)
        x3 = rng.normal(size=(7, 6, 5, 3))
        w3 = rng.normal(size=(3, 3, 3, 3, 2))
        for s in (1, 2):
            a = K._np_conv3d_fwd(x3, w3, s)
            assert np.allclose(a, ext.conv3d_fwd(x3, w3, s), atol=1e-12)
            dy = rng.normal(size=a.shape)
            assert np.allclose(K._np_conv3d_dgrad(dy, w3, s, x3.shape),
                               ext.conv3d_dgrad(dy, w3, s, 7, 6, 5),
                               atol=1e-12)
            assert np.allclose(K._np_conv3d_wgrad(x3, dy, s, w3.shape),
                               ext.conv3d_wgrad(x3, dy, s, 3, 3, 3),
                               atol=1e-12)
