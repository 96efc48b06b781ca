"""Python access to the sparse_da data-assimilation toolkit."""

from ._core import (
    ConfigError,
    DimensionError,
    NumericalError,
    __version__,
    coverage,
    crps,
    d_iq,
    derive_seed,
    fcd,
    gaspari_cohn,
    preset_names,
    rank_histogram,
    render_preset,
    rmse,
    run,
    skill_bias,
    skill_mse,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "NumericalError",
    "__version__",
    "coverage",
    "crps",
    "d_iq",
    "derive_seed",
    "fcd",
    "gaspari_cohn",
    "preset_names",
    "rank_histogram",
    "render_preset",
    "rmse",
    "run",
    "skill_bias",
    "skill_mse",
]
