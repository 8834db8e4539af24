"""Central finite-difference oracle for gradient tests (float64)."""
import numpy as np

from masc.diffcore import Tensor, no_grad, ops


def numeric_grads(fn, arrays, h=1e-4):
    """d fn / d array for every input array, by central differences."""
    grads = []
    for i, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            with no_grad():
                up = float(fn(*[Tensor(a, dtype=np.float64) for a in arrays]).data)
            flat[j] = keep - h
            with no_grad():
                down = float(fn(*[Tensor(a, dtype=np.float64) for a in arrays]).data)
            flat[j] = keep
            g.reshape(-1)[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic_grads(fn, arrays):
    ts = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    fn(*ts).backward()
    return [t.grad for t in ts]


def max_rel_error(fn, arrays, h=1e-4):
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    num = numeric_grads(fn, arrays, h)
    ana = analytic_grads(fn, arrays)
    worst = 0.0
    for a, n in zip(ana, num):
        scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
        worst = max(worst, float(np.linalg.norm(a - n) / scale))
    return worst


def weighted(op, shape_out, seed=0, keep=None):
    """Wrap a tensor-valued op into a scalar via a fixed random projection.
    ``keep`` zeroes projection weights (used for masked, -1e30-filled entries)."""
    r = np.random.default_rng(seed).standard_normal(shape_out)
    if keep is not None:
        r = r * keep

    def fn(*ts):
        return ops.sum(ops.mul(op(*ts), Tensor(r, dtype=np.float64)))

    return fn


def _rand(rng, *shape, positive=False):
    a = rng.standard_normal(shape)
    return np.abs(a) + 0.5 if positive else a


def gradcheck_cases():
    """(name, scalar fn, input arrays) covering every differentiable operator."""
    rng = np.random.default_rng(1234)
    r = lambda *s, **k: _rand(rng, *s, **k)  # noqa: E731
    mask = np.ones((3, 5), bool)
    mask[0, [1, 3]] = False
    mask[2, 0] = False
    idx = np.array([0, 4, 2])
    cases = [
        ("add", weighted(ops.add, (3, 4)), [r(3, 4), r(3, 4)]),
        ("add_scalar", weighted(lambda a: ops.add(a, 0.7), (3, 4)), [r(3, 4)]),
        ("sub", weighted(ops.sub, (3, 4)), [r(3, 4), r(3, 4)]),
        ("mul", weighted(ops.mul, (3, 4)), [r(3, 4), r(3, 4)]),
        ("div", weighted(ops.div, (3, 4)), [r(3, 4), r(3, 4, positive=True)]),
        ("neg", weighted(ops.neg, (3, 4)), [r(3, 4)]),
        ("reciprocal", weighted(ops.reciprocal, (3, 4)), [r(3, 4, positive=True)]),
        ("exp", weighted(ops.exp, (3, 4)), [r(3, 4)]),
        ("log", weighted(ops.log, (3, 4)), [r(3, 4, positive=True)]),
        ("abs", weighted(ops.abs, (3, 4)), [r(3, 4)]),
        ("square", weighted(ops.square, (3, 4)), [r(3, 4)]),
        ("relu", weighted(ops.relu, (3, 4)), [r(3, 4)]),
        ("clip", weighted(lambda a: ops.clip(a, -0.5, 0.5), (3, 4)), [r(3, 4)]),
        ("minimum", weighted(ops.minimum, (3, 4)), [r(3, 4), r(3, 4)]),
        ("sum_axis", weighted(lambda a: ops.sum(a, 1), (3,)), [r(3, 4)]),
        ("mean", lambda a: ops.mean(ops.square(a)), [r(3, 4)]),
        ("mean_axis", weighted(lambda a: ops.mean(a, (1, 2)), (2, 5)), [r(2, 3, 4, 5)]),
        ("reshape", weighted(lambda a: ops.reshape(a, (4, 3)), (4, 3)), [r(3, 4)]),
        ("concat", weighted(lambda a, b: ops.concat([a, b]), (2, 4, 4, 5)), [r(2, 4, 4, 2), r(2, 4, 4, 3)]),
        ("pick", weighted(lambda a: ops.pick(a, idx), (3,)), [r(3, 5)]),
        ("linear", weighted(ops.linear, (3, 2)), [r(3, 4), r(2, 4), r(2)]),
        ("conv2d_narrow", weighted(ops.conv2d, (2, 6, 8, 3)), [r(2, 6, 8, 2), r(3, 3, 2, 3), r(3)]),
        ("conv2d_wide", weighted(ops.conv2d, (2, 6, 4, 3)), [r(2, 6, 4, 5), r(3, 3, 5, 3), r(3)]),
        ("conv2d_nobias", weighted(lambda x, w: ops.conv2d(x, w), (1, 4, 4, 2)), [r(1, 4, 4, 6), r(3, 3, 6, 2)]),
        ("max_pool2d", weighted(ops.max_pool2d, (2, 2, 3, 3)), [r(2, 4, 6, 3)]),
        ("upsample2x", weighted(ops.upsample2x, (2, 6, 8, 2)), [r(2, 3, 4, 2)]),
        ("local_mean", weighted(lambda a: ops.local_mean(a, 5, 1.0), (2, 3, 4)), [r(2, 7, 8)]),
        ("instance_norm", weighted(ops.instance_norm, (2, 4, 4, 3)), [r(2, 4, 4, 3), r(3), r(3)]),
        ("instance_norm_plain", weighted(lambda a: ops.instance_norm(a), (2, 4, 4, 3)), [r(2, 4, 4, 3)]),
        ("softmax", weighted(lambda a: ops.softmax(a, -1), (3, 5)), [r(3, 5)]),
        ("log_softmax_masked", weighted(lambda a: ops.log_softmax(a, mask), (3, 5), keep=mask), [r(3, 5)]),
    ]
    return cases
