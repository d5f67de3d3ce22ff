import numpy as np
import pytest

from tsinterp import timebase as tb


def make_dataset(values, stamps=None, names=None, delta=1, roles=None, name="d"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, c = values.shape
    names = names or [f"c{j}" for j in range(c)]
    roles = roles or ["both"] * c
    stamps = np.arange(n) * delta if stamps is None else np.asarray(stamps)
    meta = {"name": name, "delta_seconds": delta,
            "components": [{"name": nm, "role": r} for nm, r in zip(names, roles)]}
    return tb.import_dataset(stamps, {nm: values[:, j] for j, nm in enumerate(names)}, meta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
