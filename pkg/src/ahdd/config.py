"""``key = value`` run configuration with layered overrides.

Precedence, lowest first: built-in defaults, the config file, the
``AHDD_SEED`` environment variable (seed only), explicit command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional

from ahdd.errors import ConfigurationError

SEED_ENV = "AHDD_SEED"


@dataclass(frozen=True)
class Option:
    key: str
    type: Callable[[str], Any]
    default: Any = None
    help: str = ""
    flags: tuple[str, ...] = ()


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(",", " ").split()]


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{line_no}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = normalize_key(key)
            if not key:
                raise ConfigurationError(f"{path}:{line_no}: empty key")
            values[key] = value.strip()
    return values


def resolve(
    options: Mapping[str, Option],
    cli_values: Mapping[str, Any],
    config_path: Optional[str] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> dict[str, Any]:
    """Merge defaults, config file, environment and CLI values.

    Args:
        options: Known options for the command, by key.
        cli_values: Values given explicitly on the command line (already typed).
        config_path: Optional ``key = value`` file.
        environ: Environment mapping; defaults to ``os.environ``.

    Raises:
        ConfigurationError: unknown keys in the file or values that fail to parse.
    """
    environ = os.environ if environ is None else environ
    merged = {k: opt.default for k, opt in options.items()}
    if config_path is not None:
        file_values = read_config_file(config_path)
        unknown = sorted(set(file_values) - set(options))
        if unknown:
            raise ConfigurationError(f"{config_path}: unknown key(s): {', '.join(unknown)}")
        for key, text in file_values.items():
            try:
                merged[key] = options[key].type(text)
            except ValueError as exc:
                raise ConfigurationError(f"{config_path}: bad value for {key}: {exc}") from None
    if "seed" in options and environ.get(SEED_ENV):
        try:
            merged["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    for key, value in cli_values.items():
        if value is not None:
            merged[key] = value
    return merged


def format_config(values: Mapping[str, Any]) -> str:
    lines = []
    for key in sorted(values):
        v = values[key]
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = " ".join(map(str, v))
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
