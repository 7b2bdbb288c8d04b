"""Finite-difference checks of every analytic gradient in the package.

Each check draws random points, rejects those within ``KINK_MARGIN`` of a
hinge or argmin switch, and reports the worst norm-wise relative error.
"""

from __future__ import annotations

import numpy as np

from .geometry import pairwise_sq_distances
from .losses import (
    ClassCenters,
    assign_magnet_clusters,
    center_loss,
    combined_loss,
    magnet_loss,
    softmax_ce,
    tcl_loss,
    triplet_loss,
)
from .mining import enumerate_all_triplets, mine_semi_hard
from .network import ConvSpec, NetConfig, backward, forward, init_params
from .tensor import finite_diff_grad, make_rng, relative_error

KINK_MARGIN = 1e-3
# ReLU pre-activations move by ~step * |input| under a parameter perturbation
RELU_MARGIN = 1e-4
TOLERANCE = 1e-4
COMPONENTS = ("softmax", "triplet-hard", "triplet-soft", "center", "tcl", "magnet", "network")


def _labels(rng, b, n_classes):
    while True:
        y = rng.integers(0, n_classes, size=b)
        counts = np.bincount(y, minlength=n_classes)
        if (counts >= 2).all():
            return y


def _softmax_point(rng, perturb):
    z = rng.normal(0, 2, size=(6, 4))
    y = rng.integers(0, 4, size=6)
    g = softmax_ce(z, y).grad_logits * (1 + perturb)
    num = finite_diff_grad(lambda v: softmax_ce(v, y).value, z)
    return relative_error(g, num)


def _triplet_point(rng, perturb, soft):
    while True:
        x = rng.normal(size=(8, 4))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = _labels(rng, 8, 3)
        trip = enumerate_all_triplets(y)
        pick = rng.choice(len(trip), size=min(12, len(trip)), replace=False)
        t = trip.triplets[np.sort(pick)]
        d = pairwise_sq_distances(x)
        arg = d[t[:, 0], t[:, 1]] - d[t[:, 0], t[:, 2]] + (0.0 if soft else 0.2)
        if soft or np.abs(arg).min() > KINK_MARGIN:
            break
    g = triplet_loss(x, t, 0.2, soft).grad_embeddings * (1 + perturb)
    num = finite_diff_grad(lambda v: triplet_loss(v, t, 0.2, soft).value, x)
    return relative_error(g, num)


def _center_point(rng, perturb):
    x = rng.normal(size=(8, 3))
    y = rng.integers(0, 3, size=8)
    c = ClassCenters(rng.normal(size=(3, 3)), 0.5)
    g = center_loss(x, y, c).grad_embeddings * (1 + perturb)
    num = finite_diff_grad(lambda v: center_loss(v, y, c).value, x)
    return relative_error(g, num)


def _tcl_point(rng, perturb):
    while True:
        x = rng.normal(size=(8, 3))
        y = rng.integers(0, 4, size=8)
        c = ClassCenters(rng.normal(size=(4, 3)), 0.5)
        diff = x[:, None, :] - c.centers[None]
        d = np.einsum("bkd,bkd->bk", diff, diff)
        rows = np.arange(8)
        own = d[rows, y]
        d[rows, y] = np.inf
        srt = np.sort(d, axis=1)
        arg = own - srt[:, 0] + 0.2
        if np.abs(arg).min() > KINK_MARGIN and (srt[:, 1] - srt[:, 0]).min() > KINK_MARGIN:
            break
    g = tcl_loss(x, y, c, 0.2).grad_embeddings * (1 + perturb)
    num = finite_diff_grad(lambda v: tcl_loss(v, y, c, 0.2).value, x)
    return relative_error(g, num)


def _magnet_point(rng, perturb):
    y = np.repeat(np.arange(3), 4)
    x = rng.normal(size=(12, 3)) + 2.0 * y[:, None]
    cfg = assign_magnet_clusters(x, y, 2, rng, alpha_margin=float(rng.uniform(0, 1)))
    var = magnet_loss(x, y, cfg).parts["variance"]
    g = magnet_loss(x, y, cfg, var).grad_embeddings * (1 + perturb)
    num = finite_diff_grad(lambda v: magnet_loss(v, y, cfg, var).value, x)
    return relative_error(g, num)


GRADCHECK_NET = NetConfig((6, 6, 2), 3, 4, (ConvSpec(3, 3, 2, 1), ConvSpec(3, 2, 1, 0)))


def _network_point(rng, perturb, lam=1.0, margin=0.2):
    """Combined softmax + semi-hard triplet loss on a 4-sample batch, all parameters."""
    y = np.array([0, 0, 1, 1])
    while True:
        net = init_params(GRADCHECK_NET, rng)
        for name in net.params:
            if name.endswith(".b"):
                net.params[name] = rng.normal(0, 0.1, size=net.params[name].shape)
        inputs = rng.normal(size=(4, 6, 6, 2))
        tr = forward(net, inputs)
        if min(np.abs(z).min() for z in tr.pre_acts) < RELU_MARGIN:
            continue
        d = pairwise_sq_distances(tr.embedding)
        trip = mine_semi_hard(d, y, margin)
        t = trip.triplets
        arg = d[t[:, 0], t[:, 1]] - d[t[:, 0], t[:, 2]] + margin
        if np.abs(arg).min() > KINK_MARGIN:
            break

    def loss_of(n):
        trace = forward(n, inputs)
        return trace, combined_loss(softmax_ce(trace.logits, y), triplet_loss(trace.embedding, trip, margin), lam)

    _, total = loss_of(net)
    grads, _ = backward(net, tr, total.grad_logits, total.grad_embeddings)
    names = sorted(net.params)
    analytic = np.concatenate([grads[k].ravel() for k in names]) * (1 + perturb)
    flat = np.concatenate([net.params[k].ravel() for k in names])
    shapes = [net.params[k].shape for k in names]

    def f(v):
        n = net.copy()
        off = 0
        for k, shp in zip(names, shapes):
            size = int(np.prod(shp))
            n.params[k] = v[off:off + size].reshape(shp)
            off += size
        return loss_of(n)[1].value

    return relative_error(analytic, finite_diff_grad(f, flat))


def run_gradcheck(seed: int = 0, n_points: int = 100, perturb: float = 0.0,
                  components=COMPONENTS) -> dict:
    """Worst relative error per component over ``n_points`` random points.

    ``perturb`` scales every analytic gradient by ``1 + perturb`` and exists
    to confirm the check can fail.
    """
    checks = {
        "softmax": lambda r: _softmax_point(r, perturb),
        "triplet-hard": lambda r: _triplet_point(r, perturb, soft=False),
        "triplet-soft": lambda r: _triplet_point(r, perturb, soft=True),
        "center": lambda r: _center_point(r, perturb),
        "tcl": lambda r: _tcl_point(r, perturb),
        "magnet": lambda r: _magnet_point(r, perturb),
        "network": lambda r: _network_point(r, perturb),
    }
    out = {}
    for i, name in enumerate(components):
        rng = make_rng(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        out[name] = max(checks[name](rng) for _ in range(n_points))
    return out
