"""Catalog of bundled media."""

from dataclasses import dataclass

from ..exceptions import GridValidationError
from .config_schema import (
    ConstantField,
    FieldConfig,
    GaussianLensField,
    LinearGradientField,
    SinusoidalField,
)


@dataclass(frozen=True)
class MediaPreset:
    """A bundled wave speed on the unit interval or the unit square with recommended lattice parameters."""

    name: str
    description: str
    extents: tuple[float, ...]
    wave_speed: FieldConfig
    recommended_T: float
    default_resolution: int

    @property
    def dimension(self) -> int:
        return len(self.extents)


media_presets: dict[str, MediaPreset] = {
    preset.name: preset
    for preset in (
        MediaPreset(
            "1d-homogeneous",
            "unit interval, c = 1",
            (1.0,),
            ConstantField(value=1.0),
            recommended_T=1.4,
            default_resolution=128,
        ),
        MediaPreset(
            "1d-homogeneous-fast",
            "unit interval, c = 2",
            (1.0,),
            ConstantField(value=2.0),
            recommended_T=0.75,
            default_resolution=128,
        ),
        MediaPreset(
            "1d-sinusoidal",
            "unit interval, c = 1 + 0.3 sin(pi x)",
            (1.0,),
            SinusoidalField(base=1.0, amplitude=0.3, frequency=1.0),
            recommended_T=1.4,
            default_resolution=128,
        ),
        MediaPreset(
            "2d-homogeneous",
            "unit square, c = 1",
            (1.0, 1.0),
            ConstantField(value=1.0),
            recommended_T=1.2,
            default_resolution=32,
        ),
        MediaPreset(
            "2d-linear-gradient",
            "unit square, c = 1 + 0.3 x1",
            (1.0, 1.0),
            LinearGradientField(base=1.0, gradient=(0.3, 0.0)),
            recommended_T=1.2,
            default_resolution=32,
        ),
        MediaPreset(
            "2d-gaussian-lens",
            "unit square, c = 1.1 - 0.4 exp(-|x - (0.5, 0.5)|^2 / (2 * 0.15^2))",
            (1.0, 1.0),
            GaussianLensField(base=1.1, depth=0.4, center=(0.5, 0.5), width=0.15),
            recommended_T=1.4,
            default_resolution=32,
        ),
    )
}


def get_media_preset(name: str) -> MediaPreset:
    """
    Look up a bundled medium.

    :param name: preset name
    :returns: the preset
    """
    if name not in media_presets:
        raise GridValidationError(f"Unknown medium preset '{name}', available: {', '.join(media_presets)}")
    return media_presets[name]
