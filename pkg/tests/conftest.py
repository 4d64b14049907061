import numpy as np
import pytest

from pyramidlstm.clstm import CLSTMParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_params(rng, cin, hidden, k=3, scale=0.5):
    return CLSTMParams(rng.uniform(-scale, scale, (k, k, cin, 4 * hidden)),
                       rng.uniform(-scale, scale, (k, k, hidden, 4 * hidden)),
                       rng.uniform(-scale, scale, 4 * hidden))


def max_rel_err(analytic, numeric, floor=1e-8):
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
