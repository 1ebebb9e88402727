import math

import numpy as np
import pytest


def naive_conv2d(x, k, padding="same", bias=None):
    """Direct-definition cross-correlation: explicit loops, float64, no vectorization."""
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    if padding == "same":
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
    else:
        ph = pw = 0
    ho, wo = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    out = np.zeros((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    acc = 0.0
                    for di in range(kh):
                        for dj in range(kw):
                            yi, xj = i + di - ph, j + dj - pw
                            if 0 <= yi < h and 0 <= xj < w:
                                for c in range(cin):
                                    acc += float(x[b, yi, xj, c]) * float(k[di, dj, c, o])
                    out[b, i, j, o] = acc + (0.0 if bias is None else float(bias[o]))
    return out


def randomize(weights, rng, scale=0.3):
    """Replace every tensor with random values (slopes in [0, 0.5], others Gaussian)."""
    out = {}
    for name, w in weights.items():
        if name.endswith(".slope"):
            out[name] = rng.uniform(0, 0.5, w.shape).astype(w.dtype)
        else:
            out[name] = (rng.standard_normal(w.shape) * scale).astype(w.dtype)
    return out


def direct_psnr(a, b):
    total = 0.0
    for u, v in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += (u - v) ** 2
    mse = total / a.size
    return 10 * math.log10(255 ** 2 / mse)


def direct_ssim(a, b):
    """Window-by-window SSIM with an explicit 2-D Gaussian, no separable filtering."""
    r = np.arange(11) - 5
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * 1.5 ** 2))
    g /= g.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(a.shape[0] - 10):
        for j in range(a.shape[1] - 10):
            x, y = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
            mx, my = (g * x).sum(), (g * y).sum()
            vx = (g * (x - mx) ** 2).sum()
            vy = (g * (y - my) ** 2).sum()
            cxy = (g * (x - mx) * (y - my)).sum()
            vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference_errors(spec, seed=0, h=1e-5, size=6):
    """Max relative error between backward() and central differences over every weight entry.

    Uses a random float64 net, random input and random upstream gradient, so
    the scalar objective is ``sum(forward(x) * g)``.
    """
    from sesr.graph import build_training_graph, forward
    from sesr.train import backward

    rng = np.random.default_rng(seed)
    graph, weights = build_training_graph(spec, seed, np.float64)
    weights = randomize(weights, rng, scale=0.5)
    x = rng.random((1, size, size, 1))
    g = rng.standard_normal((1, size * spec.scale, size * spec.scale, 1))
    grads = backward(graph, weights, x, g)
    worst = {}
    for name, w in weights.items():
        err = 0.0
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = (forward(graph, weights, x) * g).sum()
            w[idx] = orig - h
            down = (forward(graph, weights, x) * g).sum()
            w[idx] = orig
            num = (up - down) / (2 * h)
            ana = grads[name][idx]
            err = max(err, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
        worst[name] = err
    return worst


def matches_printed(value, printed):
    """True if ``value`` is within one unit of the third significant figure of ``printed``.

    ``printed`` is a table string such as "3.11G" or "28G". Published figures
    mix rounding and truncation, so one unit either way is accepted.
    """
    scale = {"K": 1e3, "M": 1e6, "G": 1e9}[printed[-1]]
    shown = float(printed[:-1]) * scale
    unit = 10.0 ** (math.floor(math.log10(shown)) - 2)
    return abs(value - shown) <= unit * (1 + 1e-9)
