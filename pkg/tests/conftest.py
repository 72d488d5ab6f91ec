import numpy as np
import pytest


def central_difference_grads(loss_fn, params, step=1e-5):
    """Numerical gradient oracle: perturbs every parameter entry in place.

    loss_fn() must evaluate the loss with the current params values.
    Returns gradients shaped like params.
    """
    grads = []
    for layer in params:
        layer_grads = []
        for arr in layer:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                original = arr[ix]
                arr[ix] = original + step
                plus = loss_fn()
                arr[ix] = original - step
                minus = loss_fn()
                arr[ix] = original
                g[ix] = (plus - minus) / (2.0 * step)
            layer_grads.append(g)
        grads.append(tuple(layer_grads))
    return grads


def gradient_check_passes(analytic, numeric, rel_tol=1e-4, abs_tol=1e-8):
    """True when every entry matches within rel_tol (relative) or abs_tol."""
    for layer_a, layer_n in zip(analytic, numeric):
        for a, n in zip(layer_a, layer_n):
            diff = np.abs(a - n)
            denom = np.maximum(np.abs(a), np.abs(n))
            ok = (diff <= abs_tol) | (diff <= rel_tol * denom)
            if not np.all(ok):
                return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
