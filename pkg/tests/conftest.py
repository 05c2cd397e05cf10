import pytest

N_CRITERIA = 11
_results: dict[int, bool] = {}


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    # nothing a test runs may write into the working tree
    monkeypatch.setenv("PKS_OUTPUT_ROOT", str(tmp_path / "runs"))


def pytest_configure(config):
    for i in range(1, N_CRITERIA + 1):
        config.addinivalue_line("markers", f"criterion_{i}: acceptance criterion {i}")


def _criterion(keywords):
    for k in keywords:
        if k.startswith("criterion_"):
            return int(k.split("_")[1])
    return None


def pytest_runtest_logreport(report):
    crit = _criterion(report.keywords)
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _results[crit] = _results.get(crit, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_results):
        terminalreporter.write_line(f"{'PASS' if _results[crit] else 'FAIL'} criterion {crit}")
