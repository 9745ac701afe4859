"""Regularized controls along an alpha schedule."""

import numpy as np

from ...logging_helper import get_logger
from ...ptr import control_limit
from ..base_experiment import Experiment
from ..config_schema import ControlExperimentConfig
from ..field_sampler import sample_source

logger = get_logger(__name__)


class ControlExperiment(Experiment):
    """Computes h(alpha) for every alpha and compares u^h(T) with chi_N u^f(T)."""

    experiment_config: ControlExperimentConfig

    def run(self):
        context = self.context
        config = self.experiment_config
        projector = self.projector(config.windows)
        f = sample_source(context.grid, config.source, context.rng)

        path = control_limit(context.oracle, f, projector, config.alpha_schedule, context.iteration, context.validator)
        rows = []
        for entry in path.entries:
            context.record_solve(f"alpha={entry.alpha:g}", entry.result, alpha=entry.alpha)
            result = entry.result
            rows.append(
                [
                    entry.alpha,
                    result.steps,
                    result.query_count,
                    result.converged,
                    result.residual,
                    entry.control_error,
                    entry.functional,
                ]
            )
        context.metrics["control_errors"] = path.errors
        context.write_table(
            "control_path.csv",
            ["alpha", "steps", "queries", "converged", "residual", "control_error", "functional"],
            rows,
        )

        h = path.final()
        states = context.validator.final_states(np.stack([h, f]))
        target = np.where(context.validator.influence_mask(projector), states[1], 0.0)
        context.write_signal("control_signal.csv", h, alpha=path.alphas[-1])
        context.write_field("control_field.csv", states[0], time=context.grid.horizon_T)
        context.write_field("target_field.csv", target, time=context.grid.horizon_T)
