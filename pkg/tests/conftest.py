import numpy as np
import pytest

from rtcsp.data_io import SynthConfig, synth_generate


def random_spd(rng, n, cond=10.0):
    """SPD matrix with log-uniform spectrum spanning ``cond``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * w) @ Q.T


def random_spd_set(rng, n_mats, n, cond=10.0):
    return np.stack([random_spd(rng, n, cond) for _ in range(n_mats)])


def random_sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(n_subjects=3, trials_per_class=20, test_trials_per_class=20, seed=3)
    return synth_generate(cfg)


@pytest.fixture(scope="session")
def four_class_synth():
    cfg = SynthConfig(n_subjects=3, n_classes=4, trials_per_class=15, test_trials_per_class=10, seed=4)
    return synth_generate(cfg)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one ``criterion PASS/FAIL detail`` line for the run summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(criterion, ok, detail):
        lines.append(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
