import re
import textwrap

import pytest

from ultratongue.config import load_config

TINY_INI = """
[experiment]
out = out
seed = 5

[corpus]
n_utterances = 12
min_frames = 16
max_frames = 24

[eigentongue]
n_components = 8

[train]
optimizer = adam
batch_size = 16
max_epochs = 4
patience = 2

[systems]
names = 2x16+ET, 1x8+pixels

[evaluate]
dump_frames = yes

[sweep]
optimizers = sgd, rmsprop, adam
batch_sizes = 16, 32
widths = 1x8
"""


def write_tiny_config(directory, extra=""):
    path = directory / "tiny.ini"
    path.write_text(textwrap.dedent(TINY_INI) + textwrap.dedent(extra), encoding="utf-8")
    return path


@pytest.fixture
def tiny_cfg(tmp_path):
    return load_config(write_tiny_config(tmp_path))


@pytest.fixture(scope="session")
def prepared_tiny(tmp_path_factory):
    """A generated and prepared tiny corpus shared by read-only pipeline tests."""
    from ultratongue import pipeline

    cfg = load_config(write_tiny_config(tmp_path_factory.mktemp("tiny")))
    pipeline.run_gen(cfg)
    p, _ = pipeline.run_prepare(cfg)
    return cfg, p


# one summary line per acceptance criterion

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    name = m.group(2).replace("_", " ")
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _results.get(key, (name, "PASS"))[1]
    if report.when == "call" or failed:
        _results[key] = (name, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        name, status = _results[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {name}")
