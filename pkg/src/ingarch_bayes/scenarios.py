"""Built-in simulation scenarios and their default priors."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mh import PriorSpec
from .model import Link, ModelSpec, ParamVector
from .proposal import GaussianPrior


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: ModelSpec
    params: ParamVector
    prior_cov_diag: tuple


SCENARIOS = {
    "A1": Scenario("A1", ModelSpec(Link.LOG_LINEAR),
                   ParamVector(0.3, 0.2, 0.6, 3.0), (1.0, 1.0, 1.0)),
    "A2": Scenario("A2", ModelSpec(Link.LOG_LINEAR),
                   ParamVector(0.2, 0.3, 0.4, 3.0), (1.0, 1.0, 1.0)),
    "B1": Scenario("B1", ModelSpec(Link.SOFTPLUS, 1.0),
                   ParamVector(0.3, 0.4, 0.25, 1.0),
                   (0.15 ** 2, 0.15 ** 2, 0.15 ** 2)),
    "B3": Scenario("B3", ModelSpec(Link.SOFTPLUS, 1.0),
                   ParamVector(0.25, 0.35, 0.4, 1.0),
                   (0.15 ** 2, 0.15 ** 2, 0.15 ** 2)),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        valid = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario {name!r}; valid ids: {valid}") \
            from None


def default_prior(scenario: Scenario) -> PriorSpec:
    return PriorSpec(GaussianPrior(np.zeros(3), np.diag(scenario.prior_cov_diag)))
