"""Averaging noisy PTR iterates."""

import numpy as np

from ...boundary_ops import boundary_norm
from ...logging_helper import get_logger
from ...measurement import NoiseCovarianceSpec, NoisyOracle
from ...ptr import averaged_noisy_iterate, resolve_omega, solve_control
from ..base_experiment import Experiment
from ..config_schema import NoiseAvgExperimentConfig
from ..field_sampler import sample_source

logger = get_logger(__name__)


class NoiseAvgExperiment(Experiment):
    """Measures |h_K^ave - h(alpha)| against the number K of averaged noisy iterates."""

    experiment_config: NoiseAvgExperimentConfig

    def run(self):
        context = self.context
        config = self.experiment_config
        grid = context.grid
        projector = self.projector(config.windows)
        mask = projector.mask(grid)
        f = sample_source(grid, config.source, context.rng)

        clean = solve_control(context.oracle, f, projector, context.iteration)
        context.record_solve("clean", clean)
        omega = clean.omega or resolve_omega(context.oracle, mask, context.iteration)
        settings = context.iteration.with_alpha(context.iteration.alpha, clean.h if config.warm_start else None)
        settings.omega = omega

        noise = NoiseCovarianceSpec(config.noise.sigma, config.noise.correlation_time, config.noise.correlation_length)
        k_values = sorted(set(config.k_values))
        errors = np.zeros((config.replicas, len(k_values)))
        queries = 0
        for replica in range(config.replicas):
            noisy = NoisyOracle(context.oracle, noise, seed=context.seed + replica + 1)
            averaged = averaged_noisy_iterate(noisy, f, mask, settings, max(k_values), checkpoints=k_values)
            queries += averaged.query_count
            for i, k in enumerate(k_values):
                errors[replica, i] = boundary_norm(grid, averaged.checkpoints[k] - clean.h)
        rms = np.sqrt(np.mean(errors**2, axis=0))
        slope, _ = np.polyfit(np.log(k_values), np.log(rms), 1)
        context.metrics["noisy_queries"] = queries
        context.metrics["omega"] = omega
        context.metrics["slope"] = float(slope)
        logger.info(f"Averaging error decays like K^{slope:.3f}")
        context.write_table("noise_average.csv", ["K", "rms_error"], list(zip(k_values, rms)), slope=slope)
