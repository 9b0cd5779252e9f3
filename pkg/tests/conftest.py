import numpy as np
import pytest

from c2calib.bench import BenchSettings, run_table1
from c2calib.synthetic import generate_scene, random_scene_spec

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def clean_scene():
    return generate_scene(random_scene_spec(0, sigma=0.0))


@pytest.fixture(scope="session")
def clean_matches(clean_scene):
    return clean_scene.face_matches()


@pytest.fixture(scope="session")
def noisy_scene():
    return generate_scene(random_scene_spec(0, sigma=0.5))


@pytest.fixture(scope="session")
def table1_runs():
    """Cached 50-scene accuracy runs keyed by projector noise."""
    cache = {}

    def get(sigma: float):
        if sigma not in cache:
            cache[sigma] = run_table1(range(50), BenchSettings(sigma=sigma))
        return cache[sigma]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
