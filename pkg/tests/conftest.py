import numpy as np
import pytest

from poreid.extraction import Pore, PoreTemplate
from poreid.synthetic import default_params, generate


@pytest.fixture(scope="session")
def clean_print():
    return generate(default_params(seed=5), source_id="print5")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cloud(rng, n, size=300.0, ppi=1000, sid="cloud", min_sep=4.0):
    """Random pore template with points at least ``min_sep`` apart."""
    pts = []
    while len(pts) < n:
        p = rng.uniform(0, size, 2)
        if all(np.hypot(*(p - q)) >= min_sep for q in pts):
            pts.append(p)
    return PoreTemplate(sid, ppi, tuple(Pore(float(x), float(y), 20.0, 0.8, 0.8) for x, y in pts))
