"""Gaussian mixture latent vector grammars for parsing and tagging."""

from ._core import (
    ConfigError,
    CoverageError,
    DimensionError,
    Error,
    InputError,
    LookupError,
    NoParseError,
    ParseError,
    RunConfig,
    StateError,
    allowed_components,
    parse,
    score_parses,
    score_tags,
    tag,
    train_parser,
    train_tagger,
    unknown_signature,
    verify,
)


def config(**kwargs):
    """RunConfig with the given fields set, e.g. config(d=2, K=2, epochs=3)."""
    cfg = RunConfig()
    for key, value in kwargs.items():
        if not hasattr(cfg, key):
            raise ConfigError("unknown config field: %s" % key)
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


__all__ = [
    "ConfigError",
    "CoverageError",
    "DimensionError",
    "Error",
    "InputError",
    "LookupError",
    "NoParseError",
    "ParseError",
    "RunConfig",
    "StateError",
    "allowed_components",
    "config",
    "parse",
    "score_parses",
    "score_tags",
    "tag",
    "train_parser",
    "train_tagger",
    "unknown_signature",
    "verify",
]
