import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["python", "compiled"])
def conv_backend(request):
    """Run a test once per available convolution backend."""
    from n2ndenoise.nn import kernels

    if request.param not in kernels.BACKENDS:
        pytest.skip(f"{request.param} backend not built")
    old = kernels.backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


# ------------------------------------------------------- acceptance report
#
# Tests marked ``criterion(n, title)`` feed a per-criterion PASS/FAIL line
# printed in the terminal summary. Details come from the ``accept`` fixture.

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


def _entry(item):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return None
    n, title = mark.args
    return _CRITERIA.setdefault(n, {"title": title, "ok": [], "notes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    entry = _entry(item)
    if entry is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["ok"].append(rep.passed)


class _Notes:
    def __init__(self, entry):
        self.entry = entry

    def note(self, text):
        self.entry["notes"].append(text)


@pytest.fixture
def accept(request):
    entry = _entry(request.node)
    if entry is None:
        raise RuntimeError("accept fixture used outside a criterion test")
    return _Notes(entry)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] and all(e["ok"]) else "FAIL"
        line = f"[{status}] criterion {n}: {e['title']}"
        if e["notes"]:
            line += " | " + "; ".join(e["notes"])
        tr.write_line(line)
