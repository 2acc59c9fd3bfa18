import pytest

RESULTS = pytest.StashKey[dict]()
CRITERIA = {
    1: "gradient moment identities",
    2: "coefficient-space moments",
    3: "sampler distributions",
    4: "sketch error bound",
    5: "end-to-end guarantee, lambda = 0",
    6: "end-to-end guarantee, lambda = sigma_min^2",
    7: "sparsity law",
    8: "output sample-and-query access",
    9: "dimension independence",
    10: "||x*|| lower bound",
    11: "kaczmarz mode",
}


def pytest_configure(config):
    config.stash[RESULTS] = {}


@pytest.fixture
def record(request):
    """Store ``(passed, detail)`` for an acceptance criterion number."""
    results = request.config.stash[RESULTS]

    def _record(number, passed, detail):
        results[number] = (bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in results:
            ok, detail = results[number]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}: {detail}")
        else:
            terminalreporter.write_line(f"FAIL  {number:2d}. {title}: not run or errored")
