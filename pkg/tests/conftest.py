import numpy as np
import pytest

from nsbandits import EnvironmentSpec, MeanFunction, NoiseModel


def constant_env(means, T, noise="zero", mode="mean"):
    return EnvironmentSpec(
        len(means), T, tuple(MeanFunction.constant(m) for m in means), NoiseModel(noise), mode=mode
    )


def step_env(starts, values_per_arm, T, noise="zero", mode="mean"):
    return EnvironmentSpec(
        len(values_per_arm),
        T,
        tuple(MeanFunction.steps(starts, vals) for vals in values_per_arm),
        NoiseModel(noise),
        mode=mode,
        metadata={"change_points": list(starts) + [T + 1]},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One verdict line per acceptance criterion, repeated at the end of the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
