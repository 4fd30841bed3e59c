import numpy as np
import pytest

from groupdecode.dataio import SyntheticSpec, generate_synthetic

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)
    assert passed, f"criterion {number} ({title}): {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"[criterion {number:2d}] {status} - {title}"
        if detail:
            line += f" ({detail})"
        tr.write_line(line)


@pytest.fixture(scope="session")
def tiny_spec():
    return SyntheticSpec(
        n_subjects=2,
        n_classes=3,
        trials_per_class=10,
        n_channels=6,
        n_timesteps=64,
        sfreq=250.0,
        n_info_channels=3,
        info_window=(0.04, 0.12),
        mixing_angle=0.5,
        noise_amplitude=1.0,
        seed=7,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec):
    return generate_synthetic(tiny_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
