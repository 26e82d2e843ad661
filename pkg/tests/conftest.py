import pytest

CRITERIA = {
    1: "loop-erasure exactness",
    2: "sampler uniformity",
    3: "ordering invariance",
    4: "structural invariants",
    5: "tightness trend (d=3)",
    6: "dimension contrast",
    7: "hittability exponent",
    8: "coarse-mesh bound",
    9: "determinism",
    10: "figure render",
}

_results: dict[int, list] = {}
_details: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the criterion of the running test."""
    marker = request.node.get_closest_marker("criterion")

    def put(text):
        _details[marker.args[0]] = text
    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        _results.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k, name in CRITERIA.items():
        runs = _results.get(k)
        status = "NOT RUN" if runs is None else ("PASS" if all(runs) else "FAIL")
        line = f"criterion {k:2d} {name}: {status}"
        if k in _details:
            line += f"  [{_details[k]}]"
        terminalreporter.write_line(line)
