"""Shared generators for tests."""

import numpy as np

from zonalrad.core import Modality, PairedSample, Patch


def random_patch(rng, size, kind=None):
    """A random patch drawn from one of several intensity families, some tie-heavy."""
    kind = kind if kind is not None else rng.integers(5)
    if kind == 0:
        return rng.normal(rng.uniform(-500, 2000), rng.uniform(0.1, 300), (size, size))
    if kind == 1:
        return rng.integers(0, rng.integers(2, 8), (size, size)).astype(np.float64)
    if kind == 2:
        return rng.gamma(rng.uniform(0.5, 4), rng.uniform(1, 100), (size, size))
    if kind == 3:
        base = rng.normal(0, 1, (size, size))
        return np.cumsum(np.cumsum(base, axis=0), axis=1) * rng.uniform(0.1, 10)
    return np.round(rng.uniform(0, 4096, (size, size)))


def random_sample(rng, zone="PZ", label=0, sample_id="s"):
    kw = dict(zone=zone, label=label, case_id="c", sample_id=sample_id)
    t2 = Patch(random_patch(rng, 16).astype(np.float32), Modality.T2W, **kw)
    adc = Patch(random_patch(rng, 6).astype(np.float32), Modality.ADC, **kw)
    return PairedSample(t2, adc, sample_id)


def close(a, b, rel=1e-10, floor=1e-12):
    """Relative agreement with an absolute floor for values near zero."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) <= np.maximum(rel * np.abs(b), floor)


# --- finite-difference checks for the network ------------------------------

def rel_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def perturbed_net(net, rng):
    """Give batch-norm layers non-trivial affine parameters and running statistics."""
    for key, value in net.parameters().items():
        if key.endswith(".gamma"):
            net.set_array(key, rng.uniform(0.5, 1.5, value.shape))
        elif key.endswith(".beta") or key.endswith(".bias"):
            net.set_array(key, rng.normal(0, 0.1, value.shape))
    for key, value in net.buffers().items():
        if key.endswith("running_mean"):
            net.set_array(key, rng.normal(0, 0.3, value.shape))
        else:
            net.set_array(key, rng.uniform(0.5, 2.0, value.shape))
    return net


def check_parameter_gradients(net, x, labels, rng, n_random=20, n_top=10, h=1e-5):
    """Worst relative error per parameter tensor, eval mode and dropout off.

    Each tensor is probed at ``n_random`` random elements plus its ``n_top``
    largest-magnitude analytic gradients.
    """
    from zonalrad.net import cross_entropy

    def loss():
        return cross_entropy(net.forward(x, "eval"), labels)[0]

    _, grads = net.loss_and_grads(x, labels, mode="eval")
    worst = {}
    for key, param in net.parameters().items():
        g = grads[key].ravel()
        flat = param.reshape(-1)
        pick = set(rng.choice(flat.size, min(n_random, flat.size), replace=False).tolist())
        pick |= set(np.argsort(-np.abs(g))[:n_top].tolist())
        errs = []
        for i in sorted(pick):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            errs.append(rel_error(g[i], (up - down) / (2 * h)))
        worst[key] = float(max(errs))
    return worst


def check_saliency(net, patch, h=1e-5):
    """Worst per-pixel relative error of the saliency map against central differences."""
    sal = net.saliency_map(patch)
    x = np.array(patch, dtype=np.float64)
    num = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = net.forward(x[None], "eval")[0, 1]
        x[idx] = old - h
        down = net.forward(x[None], "eval")[0, 1]
        x[idx] = old
        num[idx] = abs((up - down) / (2 * h))
    return float(rel_error(sal, num).max()), sal
