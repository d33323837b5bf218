import json
from collections import defaultdict
from pathlib import Path

import pytest

CONFIGS = Path(__file__).parent / "configs"
GOLDEN_DIR = Path(__file__).parent / "golden"

# criterion number -> list of (nodeid, passed, detail)
_CRITERIA: dict[int, list] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test checks")
    config.addinivalue_line("markers", "slow: long Monte Carlo run")


@pytest.fixture
def config_path():
    return lambda name: CONFIGS / f"{name}.json"


@pytest.fixture
def load_config():
    return lambda name: json.loads((CONFIGS / f"{name}.json").read_text())


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the acceptance summary."""

    def add(text: str):
        request.node.user_properties.append(("detail", text))

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        det = "; ".join(v for k, v in item.user_properties if k == "detail")
        _CRITERIA[m.args[0]].append((item.nodeid, rep.passed, det))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        rows = _CRITERIA[n]
        ok = all(p for _, p, _ in rows)
        dets = [d for _, _, d in rows if d]
        tail = f"  ({' | '.join(dets)})" if dets else ""
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  [{len(rows)} test(s)]{tail}")
