"""Inner products of final states from boundary data against the interior solver."""

import numpy as np

from ...boundary_ops import ProjectorSpec, smooth_random_signal
from ...logging_helper import get_logger
from ...measurement import blago_inner_product
from ..base_experiment import Experiment
from ..config_schema import BlagoCheckExperimentConfig

logger = get_logger(__name__)


class BlagoCheckExperiment(Experiment):
    """Evaluates <K f, h> and <u^f(T), u^h(T)> on random pairs of first-half signals."""

    experiment_config: BlagoCheckExperimentConfig

    def run(self):
        context = self.context
        grid = context.grid
        rng = context.rng
        rows = []
        first_half = ProjectorSpec.full_boundary(grid, grid.horizon_T)
        for pair in range(self.experiment_config.pairs):
            f, h = (
                smooth_random_signal(
                    grid, rng, correlation_time=0.1, correlation_length=0.2, support=first_half, taper=0.05
                )
                for _ in range(2)
            )
            boundary = blago_inner_product(context.oracle, f, h, context.convention)
            volume = context.validator.gram(f, h)
            scale = np.sqrt(context.validator.gram(f, f) * context.validator.gram(h, h))
            rows.append([pair, boundary, volume, abs(boundary - volume) / scale])
        errors = [row[3] for row in rows]
        context.metrics["max_relative_error"] = float(max(errors))
        logger.info(f"Largest relative inner product error {max(errors):.3e} over {len(rows)} pairs")
        context.write_table(
            "blago_check.csv",
            ["pair", "boundary_value", "volume_value", "relative_error"],
            rows,
            convention=str(context.convention),
        )
