import numpy as np
import pytest

from scengan.nn import LayerSpec, MlpNetwork


def fd_grad(f, theta, h=1e-6):
    """Central finite differences of a scalar function."""
    theta = np.array(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        fp = f(theta)
        theta[i] = old - h
        fm = f(theta)
        theta[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


GRAD_FLOOR = 1e-8


def rel_err(analytic, numeric):
    """Max-norm relative error of ``analytic`` against ``numeric``.

    The scale never drops below ``GRAD_FLOOR``: central differences at h=1e-6
    cannot resolve gradients smaller than ~1e-10 (e.g. a saturated sigmoid),
    so smaller scales would only measure round-off.
    """
    scale = max(np.max(np.abs(numeric)), GRAD_FLOOR)
    return float(np.max(np.abs(analytic - numeric)) / scale)


ACTS = ["linear", "relu", "leaky_relu", "tanh", "sigmoid"]


def random_net(rng, role="generator", max_params=500, in_width=None, out_width=None):
    """Random dense net with at most 3 hidden layers and <= max_params weights."""
    while True:
        n_hidden = int(rng.integers(0, 4))
        widths = [in_width or int(rng.integers(1, 9))]
        widths += [int(rng.integers(1, 17)) for _ in range(n_hidden)]
        widths.append(1 if role == "discriminator" else (out_width or int(rng.integers(1, 9))))
        layers = []
        for k in range(len(widths) - 1):
            last = k == len(widths) - 2
            if last:
                act = "sigmoid" if role == "generator" else "linear"
            else:
                act = ACTS[int(rng.integers(len(ACTS)))]
            layers.append(LayerSpec(widths[k], widths[k + 1], act, float(rng.uniform(0.05, 0.5))))
        net = MlpNetwork(tuple(layers), role=role)
        if net.n_params <= max_params:
            return net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str):
    """Remember one acceptance verdict and echo it."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
