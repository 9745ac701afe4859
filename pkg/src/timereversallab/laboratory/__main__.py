"""Run laboratory experiments from a configuration file."""

import argparse
import json
import os
import re
import sys
from pathlib import Path

from pydantic import ValidationError
from pydantic_settings import SettingsConfigDict

from ..exceptions import LaboratoryError, NumericalFailure
from ..logging_helper import get_logger, set_logging_level
from ..medium import build_grid, build_medium
from .config_schema import LaboratoryConfig
from .experiment_manager import ExperimentManager, RunManifest
from .field_sampler import field_function
from .media_presets import media_presets

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3


def load_config(config_path: Path) -> LaboratoryConfig:
    """
    Load a TOML configuration, or the resolved configuration embedded in a run manifest.

    :param config_path: TOML file or manifest.json of an earlier run
    :returns: the laboratory configuration
    """
    config_path = Path(config_path)
    if config_path.suffix == ".json":
        manifest = RunManifest.model_validate_json(config_path.read_text())
        configuration = dict(manifest.configuration)
        if "PTRLAB_OUTPUT_DIRECTORY" in os.environ:
            configuration.pop("output_directory", None)
        return LaboratoryConfig(**configuration)

    if not config_path.is_file():
        raise FileNotFoundError(f"Configuration file {config_path} does not exist.")

    class CustomLaboratoryConfig(LaboratoryConfig):
        """Laboratory configuration read from a custom file path."""

        model_config = SettingsConfigDict(toml_file=config_path, env_prefix="PTRLAB_")

    return CustomLaboratoryConfig()


def locate_toml_line(config_path: Path, location: tuple) -> int | None:
    """
    Find the line defining the offending key of a validation error.

    :param config_path: TOML file
    :param location: error location as reported by pydantic
    :returns: 1-based line number, or None when the key is not found
    """
    keys = [str(part) for part in location if isinstance(part, str)]
    if not keys or not Path(config_path).is_file() or Path(config_path).suffix == ".json":
        return None
    lines = Path(config_path).read_text().splitlines()
    for key in reversed(keys):
        pattern = re.compile(rf"^\s*(\[+[^\]]*\b{re.escape(key)}\]+|\"?{re.escape(key)}\"?\s*=)")
        for number, line in enumerate(lines, start=1):
            if pattern.search(line):
                return number
    return None


def describe_validation_error(error: ValidationError, config_path: Path | None) -> str:
    """One line per error, naming the field path and the TOML line."""
    messages = []
    for detail in error.errors():
        field = ".".join(str(part) for part in detail["loc"]) or "<root>"
        line = locate_toml_line(config_path, detail["loc"]) if config_path is not None else None
        where = f" (line {line})" if line is not None else ""
        messages.append(f"{field}{where}: {detail['msg']}")
    return "\n".join(messages)


def run(config_path: Path) -> int:
    """Run one experiment and map failures onto exit codes."""
    logger = get_logger(__name__)
    try:
        config = load_config(config_path)
        set_logging_level(config.log_level)
        logger = get_logger(__name__)
        manifest = ExperimentManager(config).run()
    except ValidationError as error:
        logger.error(f"Invalid configuration {config_path}:\n{describe_validation_error(error, config_path)}")
        return EXIT_CONFIG_ERROR
    except NumericalFailure as error:
        logger.error(f"Numerical failure: {error}")
        return EXIT_NUMERICAL_FAILURE
    except (LaboratoryError, FileNotFoundError) as error:
        logger.error(f"Invalid configuration {config_path}: {error}")
        return EXIT_CONFIG_ERROR
    logger.info(f"Wrote {len(manifest.outputs)} artifacts, {manifest.query_count} oracle queries")
    return EXIT_OK


def validate(config_path: Path) -> int:
    """Parse a configuration and build its lattice without running anything."""
    logger = get_logger(__name__)
    try:
        manager = ExperimentManager(load_config(config_path))
    except ValidationError as error:
        logger.error(f"Invalid configuration {config_path}:\n{describe_validation_error(error, config_path)}")
        return EXIT_CONFIG_ERROR
    except (LaboratoryError, FileNotFoundError) as error:
        logger.error(f"Invalid configuration {config_path}: {error}")
        return EXIT_CONFIG_ERROR
    grid = manager.grid
    print(f"{config_path}: valid, grid {grid.shape}, h={grid.h:.5g}, dt={grid.dt:.5g}, T={grid.horizon_T}")
    return EXIT_OK


def list_presets() -> list[dict]:
    """Catalog of bundled media with their speed range and recommended lattice."""
    catalog = []
    for preset in media_presets.values():
        wave_speed = field_function(preset.wave_speed)
        grid = build_grid(preset.extents, preset.default_resolution, preset.recommended_T, wave_speed)
        medium = build_medium(grid, wave_speed)
        catalog.append(
            {
                "name": preset.name,
                "description": preset.description,
                "c_min": medium.c_min,
                "c_max": medium.c_max,
                "recommended_T": preset.recommended_T,
                "default_resolution": preset.default_resolution,
            }
        )
    return catalog


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="timereversallab",
        description="Processed time reversal experiments on simulated boundary measurements.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    run_parser = commands.add_parser("run", help="Run the experiment of a TOML configuration or a run manifest.")
    run_parser.add_argument("config", type=Path, help="Path to a TOML configuration or a manifest.json.")
    validate_parser = commands.add_parser("validate", help="Check a configuration without running it.")
    validate_parser.add_argument("config", type=Path, help="Path to a TOML configuration or a manifest.json.")
    presets_parser = commands.add_parser("presets", help="List the bundled media.")
    presets_parser.add_argument("--json", action="store_true", help="Print the catalog as JSON.")
    args = parser.parse_args(argv)

    if args.command == "run":
        return run(args.config)
    if args.command == "validate":
        return validate(args.config)
    catalog = list_presets()
    if args.json:
        print(json.dumps(catalog, indent=2))
    else:
        for entry in catalog:
            print(
                f"{entry['name']:<22} c in [{entry['c_min']:.3f}, {entry['c_max']:.3f}]  "
                f"T={entry['recommended_T']:<5} resolution={entry['default_resolution']:<4} {entry['description']}"
            )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
