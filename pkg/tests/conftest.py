import sys

import pytest

from metalcast import months
from metalcast.backtest import _load_context, build_window
from metalcast.config import load_config
from metalcast.nowcast import NowcastModelSpec, fill_missing_tail
from metalcast.synth import write_config, write_panel
from metalcast.vintages import transform_array


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    write_panel(d)
    write_config(d)
    return d


@pytest.fixture(scope="session")
def synth_window(synth_dir):
    """Copper window at the first synthetic origin, RW-D nowcast fill."""
    cfg = load_config(synth_dir / "backtest.ini")
    ctx = _load_context(cfg)
    T = cfg.first_origin
    snap = fill_missing_tail(ctx.panel, T, NowcastModelSpec("RWD"))
    transformed = {v: (snap.start[v], transform_array(snap.values[v], ctx.panel.meta[v].transform))
                   for v in ctx.panel.variables}
    cpi_id = ctx.manifest.cpi
    base = float(snap.values[cpi_id][months.diff(cfg.base_month, snap.start[cpi_id])])
    return build_window(ctx, snap, "copper", transformed, base)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
