import numpy as np
import pytest
from hypothesis import settings

from sigvol.tensor_algebra import TensorElement, tensor_dim

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_element(rng, order, scalar=True, complex_=False, sparsity=0.0):
    n = tensor_dim(order)
    c = rng.standard_normal(n)
    if complex_:
        c = c + 1j * rng.standard_normal(n)
    if sparsity:
        c[rng.random(n) < sparsity] = 0.0
    if not scalar:
        c[0] = 0.0
    return TensorElement(c, order)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
