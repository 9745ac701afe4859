"""Focusing of waves at the end point of a normal geodesic."""

from ...focusing import (
    FocusSpec,
    analytic_probe,
    focusing_profile,
    focusing_source,
    point_value_recover,
    self_hosted_probe,
)
from ...logging_helper import get_logger
from ...medium import c0_constant
from ..base_experiment import Experiment
from ..config_schema import FocusExperimentConfig
from ..field_sampler import sample_source

logger = get_logger(__name__)


class FocusExperiment(Experiment):
    """Builds the focusing source, reports its concentration and optionally recovers u^f(x_hat, T)."""

    experiment_config: FocusExperimentConfig

    def run(self):
        context = self.context
        config = self.experiment_config
        grid = context.grid
        spec = FocusSpec(
            z_hat=config.z_hat,
            t_hat=config.t_hat,
            t0=config.t0,
            config=context.iteration,
            alpha_schedule=tuple(config.alpha_schedule or (context.iteration.alpha,)),
            patch_radius=config.patch_radius,
            j_max=config.j_max,
            form=config.form,
        )
        f = sample_source(grid, config.source, context.rng)

        source = focusing_source(context.oracle, f, spec)
        context.metrics["focusing_queries"] = source.query_count
        context.metrics["focusing_converged"] = bool(source.converged)
        profile = focusing_profile(context.validator, source.signal, spec)
        report = profile.report
        context.metrics["slab_fraction"] = report.slab_fraction
        context.metrics["x_hat"] = report.x_hat.tolist()
        context.metrics["minimizing"] = bool(report.minimizing)
        context.write_table(
            "concentration.csv",
            ["radius", "mass_fraction"],
            report.rows(),
            normalization=report.normalization,
            normalized_norm=report.normalized_norm,
            j=spec.j_max,
        )
        context.write_field("focused_field.csv", profile.field, time=grid.horizon_T)
        context.write_signal("focusing_source.csv", source.signal)

        if config.probe == "none":
            return
        if config.probe == "analytic":
            probe = analytic_probe(grid, context.medium, spec)
        else:
            probe = self_hosted_probe(context.oracle, f, spec)
        c0 = c0_constant(grid, context.medium, spec.z_hat, spec.t_hat).value if probe.value else None
        estimate = point_value_recover(context.oracle, f, spec, probe, c0=c0)
        truth = context.validator.point_value(context.validator.final_states(f), report.x_hat)
        context.metrics["point_value"] = {
            "estimate": estimate.value,
            "spread": estimate.spread,
            "unreliable": bool(estimate.unreliable),
            "relative": estimate.relative,
            "absolute": estimate.absolute,
            "solver_value": truth,
        }
        context.write_table(
            "point_value.csv",
            ["thickness", "estimate"],
            list(zip(estimate.thicknesses, estimate.values)),
            probe=probe.description,
            solver_value=truth,
        )
