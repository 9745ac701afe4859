"""Boundary distance function of a point on a normal geodesic."""

from ...distance import DistanceQuery, boundary_distance_function
from ...logging_helper import get_logger
from ...medium import normal_geodesic_point, travel_time_distance
from ..base_experiment import Experiment
from ..config_schema import DistanceExperimentConfig
from ..field_sampler import sample_source

logger = get_logger(__name__)


class DistanceExperiment(Experiment):
    """Bisects d(x, y) for every target y and compares with the eikonal distance."""

    experiment_config: DistanceExperimentConfig

    def run(self):
        context = self.context
        config = self.experiment_config
        grid = context.grid
        query = DistanceQuery(
            z=config.z,
            y=config.z,
            t1=config.t1,
            config=context.iteration,
            j=config.j,
            epsilon=config.epsilon,
            patch_radius=config.patch_radius,
            theta=config.theta,
        )
        f = sample_source(grid, config.source, context.rng)
        targets = range(grid.n_boundary) if config.targets is None else config.targets
        x = normal_geodesic_point(grid, context.medium, config.z, config.t1)

        sampled = boundary_distance_function(context.oracle, f, query, targets, check_cut=config.check_cut)
        rows, traces = [], []
        for y, estimate in zip(sampled.positions, sampled.estimates):
            truth = travel_time_distance(grid, context.medium, [grid.boundary_nodes[y]]).at(grid, x.point)
            rows.append([y, estimate.value, estimate.bracket[0], estimate.bracket[1], estimate.status, truth])
            traces.extend([y] + row for row in estimate.trace)
        context.metrics["geodesic_point"] = x.point.tolist()
        context.metrics["minimizing"] = bool(x.minimizing)
        context.metrics["beyond_cut"] = sampled.beyond_cut
        context.write_table(
            "boundary_distance.csv",
            ["target", "estimate", "lower", "upper", "status", "eikonal"],
            rows,
            z=config.z,
            t1=config.t1,
        )
        context.write_table("decision_trace.csv", ["target", "tau", "j", "eps", "value", "decision"], traces)
