"""Arrival times between boundary nodes and the boundary wave speed."""

import numpy as np

from ...distance import arrival_time_map, boundary_wavespeed
from ...logging_helper import get_logger
from ..base_experiment import Experiment
from ..config_schema import ArrivalMapExperimentConfig

logger = get_logger(__name__)


class ArrivalMapExperiment(Experiment):
    """Picks first arrivals from pulse responses; the wave speed needs the map over all boundary nodes."""

    experiment_config: ArrivalMapExperimentConfig

    def run(self):
        context = self.context
        config = self.experiment_config
        arrival = arrival_time_map(context.oracle, config.positions, config.half_width)
        context.metrics["asymmetry"] = arrival.asymmetry
        context.metrics["missing_pairs"] = int(arrival.flagged.sum())
        header = ["source"] + [f"b{b}" for b in arrival.positions]
        context.write_table(
            "arrival_times.csv",
            header,
            [[b] + list(row) for b, row in zip(arrival.positions, arrival.times)],
            pulse_center=arrival.pulse_center,
        )
        if config.positions is not None:
            return

        speed = boundary_wavespeed(arrival, context.grid)
        truth = context.medium.wave_speed[context.grid.boundary_nodes]
        context.metrics["wavespeed_max_relative_error"] = float(np.max(np.abs(speed - truth) / truth))
        context.write_table(
            "boundary_wavespeed.csv",
            ["position", "estimate", "true_speed"],
            [[b, s, c] for b, (s, c) in enumerate(zip(speed, truth))],
        )
