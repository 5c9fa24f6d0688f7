import numpy as np
import pytest

from mirror_vlasov import (FieldConfig, Geometry, InitialDataParams, StepConfig,
                           restrict_to_cutoff, run, sample_ensemble)

DESK_SEED = 0
DESK_PER_SLAB = 64

ACCEPTANCE_LINES = []


class DeskRuns:
    """Default desk-scale ensemble and a cache of trajectories evolved from it.

    Runs are keyed on the surviving particle ids and the time step, so two
    cutoffs that keep the same particles share one trajectory.
    """

    def __init__(self):
        self.geometry = Geometry()
        self.params = InitialDataParams()
        self.base = sample_ensemble(self.geometry, self.params, DESK_PER_SLAB, DESK_SEED)
        self.field_config = FieldConfig().resolve(self.base)
        self._cache = {}

    def ensemble(self, N=None):
        return self.base if N is None else restrict_to_cutoff(self.base, N)

    def trajectory(self, N=None, dt=1e-3):
        ens = self.ensemble(N)
        key = (ens.ids.tobytes(), dt)
        if key not in self._cache:
            every = int(round(0.1 / dt))
            self._cache[key] = run(ens, self.field_config,
                                   StepConfig(dt=dt, t_end=10.0, record_every=every))
        return self._cache[key]


@pytest.fixture(scope="session")
def desk():
    return DeskRuns()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def report():
    def _report(k, passed, detail):
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
