"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from mcre_lab import model_zoo


@pytest.fixture(scope="session")
def zoo():
    return model_zoo()


def random_pair_configs(entry, count, gen, spread=0.5):
    """Valid (x, q, q') configurations around a zoo entry's reference pair:
    environment rows from the model's own environment, states jittered
    around the reference with 0 < d(q, q') <= pair_radius."""
    x_ref, y1_ref, _ = entry.check_pair
    dim = entry.model.dim
    configs = []
    while len(configs) < count:
        x = entry.env.sample_marginal(gen, 1)[0]
        q = np.asarray(y1_ref, dtype=float) + spread * gen.standard_normal(dim)
        direction = gen.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        lam = gen.uniform(0.05, 0.95)
        qp = q + lam * entry.minor.pair_radius * direction
        d = float(entry.minor.metric.distance(q, qp))
        if 0.0 < d <= entry.minor.pair_radius:
            configs.append((x, q, qp))
    return configs
