import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hamur.config import ExperimentConfig  # noqa: E402
from hamur.data import prepare_synthetic  # noqa: E402

SMALL_MODEL = {"hidden": [16, 8], "embedding_dim": 4, "bottleneck": 3, "hyper_dim": 8, "rank": 3}


@pytest.fixture
def small_cfg(tmp_path):
    """Config over a 2000-row synthetic file; a few seconds per run at most."""
    csv = tmp_path / "syn.csv"
    prepare_synthetic(csv, n=2000, num_domains=3, seed=1)
    return ExperimentConfig().replace(data={"path": str(csv)}, model=SMALL_MODEL,
                                      train={"batch_size": 128, "max_epochs": 3, "patience": 2, "lr": 1e-2},
                                      output={"dir": str(tmp_path / "run")})


_criteria: dict[int, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            n, title = mark.args
            _criteria.setdefault(n, {"title": title, "ok": True, "ran": 0, "why": ""})
            item.user_properties.append(("criterion", n))


def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("criterion")
    if n is None or (report.when != "call" and report.passed):
        return
    c = _criteria[n]
    if report.when == "call":
        c["ran"] += 1
    if report.failed or report.skipped:
        c["ok"] = False
        if not c["why"]:
            msg = str(report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash")
                      else report.longrepr)
            c["why"] = msg.splitlines()[0][:110]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        ok = c["ok"] and c["ran"] > 0
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n}: {c['title']}"
        if not ok and c["why"]:
            line += f"  ({c['why']})"
        terminalreporter.write_line(line)
