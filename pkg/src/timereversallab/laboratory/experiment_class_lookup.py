"""Helper module which determines the experiment class based on the configured experiment kind."""

from typing import Type

from .base_experiment import Experiment
from .config_schema import AvailableExperiments
from .experiments.arrival_map import ArrivalMapExperiment
from .experiments.blago_check import BlagoCheckExperiment
from .experiments.control import ControlExperiment
from .experiments.distance import DistanceExperiment
from .experiments.focus import FocusExperiment
from .experiments.noise_avg import NoiseAvgExperiment

# Lookup table which holds the experiment class indicated by the configuration literal
experiment_class_lookup: dict[AvailableExperiments, Type[Experiment]] = {
    "blago-check": BlagoCheckExperiment,
    "control": ControlExperiment,
    "focus": FocusExperiment,
    "distance": DistanceExperiment,
    "arrival-map": ArrivalMapExperiment,
    "noise-avg": NoiseAvgExperiment,
}


def get_experiment_class(config_str: AvailableExperiments) -> Type[Experiment]:
    """
    Get the experiment class based on the configuration literal.

    :param config_str: The configuration literal which indicates the experiment kind
    :returns: The experiment class which should be used
    """
    return experiment_class_lookup[config_str]
