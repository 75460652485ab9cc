import pytest

from biphoton_eraser import kernels
from biphoton_eraser.params import ApparatusGeometry, BiphotonPacket

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


@pytest.fixture
def geometry():
    return ApparatusGeometry()


@pytest.fixture
def packet():
    return BiphotonPacket.degenerate()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def write_config(path, **values):
    lines = ["# test config"] + [f"{k} = {v}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
