import pytest

from eegame.channel import generate_channel_set
from eegame.game import GameConfig
from helpers import scalar_channels


@pytest.fixture
def scalar_game():
    """Single user, unit gain, unit noise and circuit power, 10 mW budget."""
    return GameConfig.symmetric(1, 1, 1, 10.0), scalar_channels(1.0)


@pytest.fixture
def random_2x2():
    cfg = GameConfig.symmetric(2, 2, 2, 10.0)
    return cfg, generate_channel_set(2, 2, 2, seed=12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted((k for k in results if k.isdigit()), key=int):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")
