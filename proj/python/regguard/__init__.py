"""Security-prioritised register allocation with keyed-MAC frame protection."""

from ._core import (
    Compiled,
    ConfigError,
    Outcome,
    ParseError,
    ScriptError,
    attack,
    compile,
    mac_words,
    overhead,
    presets,
    run,
    selftest,
    siphash24,
)

__all__ = [
    "Compiled",
    "ConfigError",
    "Outcome",
    "ParseError",
    "ScriptError",
    "attack",
    "compile",
    "mac_words",
    "overhead",
    "presets",
    "run",
    "selftest",
    "siphash24",
]
