"""Diffusion priors over a synthetic joint embedding space."""

from ._priorforge import (
    InputError,
    NumericError,
    alpha_bar,
    compose,
    ddim_timesteps,
    default_config,
    evaluate,
    frechet_distance,
    gen_data,
    hellinger,
    kl_divergence,
    lab_histogram,
    normalize_config,
    read_model_header,
    read_tensor,
    sample,
    srgb_to_lab,
    train_prior,
    write_tensor,
)

__all__ = [
    "InputError",
    "NumericError",
    "alpha_bar",
    "compose",
    "ddim_timesteps",
    "default_config",
    "evaluate",
    "frechet_distance",
    "gen_data",
    "hellinger",
    "kl_divergence",
    "lab_histogram",
    "normalize_config",
    "read_model_header",
    "read_tensor",
    "sample",
    "srgb_to_lab",
    "train_prior",
    "write_tensor",
]
