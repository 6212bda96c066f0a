"""Scalar-valued probe builders for every differentiable op.

Each entry is (name, leaf tensors, fn) where fn() deterministically rebuilds
a scalar from the leaves; reducing through a fixed random vector makes every
output coordinate contribute, so one gradient check covers the whole op.
Probe points are drawn away from ReLU/abs kinks where central differences
would be invalid.
"""

import numpy as np

from gdsrec import autodiff as ad


def _leaf(rng, shape, avoid_kink=False):
    x = rng.uniform(-1.5, 1.5, size=shape)
    if avoid_kink:
        x = np.where(np.abs(x) < 0.15, x + np.sign(x + 1e-9) * 0.3, x)
    return ad.Tensor(x, requires_grad=True)


def _reducer(rng, shape):
    w = ad.constant(rng.normal(size=shape))
    return lambda t: ad.tsum(ad.mul(t, w))


def op_probes(seed: int):
    """List of (name, leaves, fn) triples for one random draw."""
    rng = np.random.default_rng(seed)
    probes = []

    x = _leaf(rng, (3,))
    w = _leaf(rng, (4, 3))
    b = _leaf(rng, (4,))
    red = _reducer(rng, (4,))
    probes.append(("affine_vec", [x, w, b], lambda: red(ad.affine(x, w, b))))

    xm = _leaf(rng, (5, 3))
    wm = _leaf(rng, (2, 3))
    bm = _leaf(rng, (2,))
    red_m = _reducer(rng, (5, 2))
    probes.append(("affine_mat", [xm, wm, bm], lambda: red_m(ad.affine(xm, wm, bm))))

    xr = _leaf(rng, (6,), avoid_kink=True)
    red_r = _reducer(rng, (6,))
    probes.append(("relu", [xr], lambda: red_r(ad.relu(xr))))

    xs = _leaf(rng, (6,))
    red_s = _reducer(rng, (6,))
    probes.append(("sigmoid", [xs], lambda: red_s(ad.sigmoid(xs))))

    xa = _leaf(rng, (6,), avoid_kink=True)
    red_a = _reducer(rng, (6,))
    probes.append(("absval", [xa], lambda: red_a(ad.absval(xa))))

    sm = _leaf(rng, (5,))
    red_sm = _reducer(rng, (5,))
    probes.append(("softmax", [sm], lambda: red_sm(ad.softmax(sm))))

    # keep a clear argmax margin so the max index is stable under +/- eps
    bx_data = rng.uniform(-1.0, 1.0, size=4)
    bx_data[int(rng.integers(4))] += 2.0
    bx = ad.Tensor(bx_data, requires_grad=True)
    red_bx = _reducer(rng, (4,))
    probes.append(("broadcast_max", [bx], lambda: red_bx(ad.broadcast_max(bx))))

    table = _leaf(rng, (7, 3))
    idx = rng.integers(0, 7, size=5)
    red_g = _reducer(rng, (5, 3))
    probes.append(("gather", [table], lambda: red_g(ad.gather(table, idx))))

    ca = _leaf(rng, (3,))
    cb = _leaf(rng, (4,))
    red_c = _reducer(rng, (7,))
    probes.append(("concat", [ca, cb], lambda: red_c(ad.concat(ca, cb))))

    ha = _leaf(rng, (3, 2))
    hb = _leaf(rng, (3, 4))
    red_h = _reducer(rng, (3, 6))
    probes.append(("hstack", [ha, hb], lambda: red_h(ad.hstack(ha, hb))))

    tv = _leaf(rng, (4,))
    red_t = _reducer(rng, (3, 4))
    probes.append(("tile_rows", [tv], lambda: red_t(ad.tile_rows(tv, 3))))

    wv = _leaf(rng, (4,))
    vm = _leaf(rng, (4, 3))
    red_ws = _reducer(rng, (3,))
    probes.append(("weighted_sum", [wv, vm], lambda: red_ws(ad.weighted_sum(wv, vm))))

    da = _leaf(rng, (5,))
    db = _leaf(rng, (5,))
    probes.append(("dot", [da, db], lambda: ad.dot(da, db)))

    sa = [_leaf(rng, (1,)) for _ in range(4)]
    red_st = _reducer(rng, (4,))
    probes.append(("stack", sa, lambda: red_st(ad.stack(sa))))

    rx = _leaf(rng, (6,))
    red_re = _reducer(rng, (2, 3))
    probes.append(("reshape", [rx], lambda: red_re(ad.reshape(rx, (2, 3)))))

    ea = _leaf(rng, (4,))
    eb = _leaf(rng, (4,))
    red_e = _reducer(rng, (4,))
    shift = rng.normal(size=4)
    probes.append(("add", [ea, eb], lambda: red_e(ad.add(ea, eb))))
    probes.append(("sub", [ea, eb], lambda: red_e(ad.sub(ea, eb))))
    probes.append(("mul", [ea, eb], lambda: red_e(ad.mul(ea, eb))))
    probes.append(("scale", [ea], lambda: red_e(ad.scale(ea, 1.7))))
    probes.append(("add_const", [ea], lambda: red_e(ad.add_const(ea, shift))))
    probes.append(("sub_const", [ea], lambda: red_e(ad.sub_const(ea, shift))))

    mm = _leaf(rng, (3, 4))
    probes.append(("tsum", [mm], lambda: ad.tsum(mm)))
    probes.append(("tmean", [mm], lambda: ad.tmean(mm)))

    return probes
