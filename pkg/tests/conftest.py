import numpy as np
import pytest

from switchkac.levy import StableLike
from switchkac.model import ModelSpec, ScalarField
from switchkac.model import constant, constant_generator, scaled_jump


def brownian_motion():
    return ModelSpec(1, 1, constant([0.0]), constant([1.0], kind="diffusion"),
                     constant_generator([[0.0]]), 0.0, name="bm")


def jump_model(drift=(0.0, 0.0)):
    """Two regimes, sigma = (1, 2), symmetric unit switching, stable-like marks on 0.05 < |z| <= 1."""
    return ModelSpec(
        1, 2,
        constant(list(drift)),
        constant([1.0, 2.0], kind="diffusion"),
        constant_generator([[-1.0, 1.0], [1.0, -1.0]]),
        1.0,
        scaled_jump([0.5, 1.0]),
        StableLike(0.5, inner=0.05, outer=1.0),
        name="jump",
    )


def field(fn):
    """Regime-blind scalar field from a function of x."""
    return ScalarField(lambda x, i: fn(np.asarray(x, float)[:, 0]))


@pytest.fixture
def bm():
    return brownian_motion()


@pytest.fixture
def jm():
    return jump_model()


# one summary line per acceptance criterion
_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n = mark.args[0]
    if rep.failed or rep.when == "call":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _criteria[n] = ("PASS" if rep.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, doc = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {doc}")
