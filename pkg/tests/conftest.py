import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from delayopt.graph import Graph
from delayopt.kernels import compiled_backend, python_backend

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@st.composite
def connected_graphs(draw, min_n=2, max_n=8):
    """A random spanning tree plus random extra edges."""
    n = draw(st.integers(min_n, max_n))
    edges = set()
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    for a, b in extra:
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return Graph(n, sorted(edges))


def random_graph(rng, n, prob=0.5):
    """Random connected graph: random tree plus Bernoulli extra edges."""
    edges = {(int(rng.integers(0, v)), v) for v in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < prob:
                edges.add((i, j))
    return Graph(n, sorted(edges))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = [pytest.param(python_backend, id="python")]
if compiled_backend is not None:
    BACKENDS.append(pytest.param(compiled_backend, id="compiled"))


ACCEPTANCE: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
