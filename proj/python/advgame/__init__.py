"""Python bindings for the advgame library."""

from ._core import (
    Attack,
    ConfigError,
    Dataset,
    Defense,
    InputError,
    IoError,
    NumericError,
    adversarial_loss,
    build_pair,
    closed_form_attack,
    fgsm,
    flow_attack,
    generate,
    load_attack,
    load_defense,
    pgd,
    preset_config,
    reproduce,
)

__all__ = [
    "Attack",
    "ConfigError",
    "Dataset",
    "Defense",
    "InputError",
    "IoError",
    "NumericError",
    "adversarial_loss",
    "build_pair",
    "closed_form_attack",
    "fgsm",
    "flow_attack",
    "generate",
    "load_attack",
    "load_defense",
    "pgd",
    "preset_config",
    "reproduce",
]
