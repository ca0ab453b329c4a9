"""
ConfigStore: loads RunConfig from a key = value file and merges command-line
overrides. The resolved configuration is written next to every command's
outputs.
"""

from pathlib import Path
from threading import RLock
from typing import Any, Mapping

from pydantic import ValidationError

from app.models.run_config import RunConfig
from app.utils.logger import get_logger

logger = get_logger(__name__)

RESOLVED_NAME = "resolved_config.conf"


class ConfigError(Exception):
    """Configuration file, override or value is invalid."""
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """
    Parse ``key = value`` lines. ``#`` starts a comment; blank lines are
    skipped. A key may appear only once.
    """
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        values[key] = value
    return values


def parse_overrides(tokens: list[str]) -> dict[str, str]:
    """``--some-key value`` or ``--some_key=value`` pairs; dashes become underscores."""
    values: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or token == "--":
            raise ConfigError(f"unexpected argument {token!r}; overrides look like --key value")
        name = token[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"override --{name} is missing a value")
            value = tokens[i + 1]
            i += 2
        values[name.replace("-", "_")] = value
    return values


def _format_errors(e: ValidationError, origins: Mapping[str, str]) -> str:
    lines = []
    for err in e.errors():
        key = ".".join(str(loc) for loc in err["loc"]) or "<config>"
        origin = origins.get(key)
        where = f" ({origin})" if origin else ""
        lines.append(f"{key}{where}: {err['msg']}")
    return "; ".join(lines)


def _render_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ConfigStore:
    """Thread-safe loader for RunConfig: file values, then overrides."""

    def __init__(self, config_path: str | Path | None = None) -> None:
        self.config_path = Path(config_path) if config_path else None
        self._lock = RLock()
        self._config: RunConfig | None = None
        self._origins: dict[str, str] = {}

    def _file_values(self) -> dict[str, str]:
        if self.config_path is None:
            return {}
        try:
            text = self.config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {self.config_path}: {e}") from e
        values = parse_config_text(text, str(self.config_path))
        self._origins.update({key: f"from {self.config_path}" for key in values})
        return values

    def load(self, overrides: Mapping[str, str] | None = None) -> RunConfig:
        """Resolve and validate; command-line overrides win over file values."""
        with self._lock:
            self._origins = {}
            values = self._file_values()
            for key, value in (overrides or {}).items():
                values[key] = value
                self._origins[key] = "from command line"
            unknown = sorted(set(values) - set(RunConfig.model_fields))
            if unknown:
                raise ConfigError(
                    f"unknown configuration key(s): {', '.join(unknown)} "
                    f"({', '.join(self._origins[k] for k in unknown)})"
                )
            try:
                self._config = RunConfig(**values)
            except ValidationError as e:
                raise ConfigError(_format_errors(e, self._origins)) from e
            logger.debug(f"Resolved configuration with {len(values)} explicit key(s)")
            return self._config

    @property
    def config(self) -> RunConfig:
        with self._lock:
            if self._config is None:
                return self.load()
            return self._config

    def update(self, **partial: Any) -> RunConfig:
        """Apply a partial update and re-validate."""
        with self._lock:
            merged = {**self.config.model_dump(), **partial}
            try:
                self._config = RunConfig(**merged)
            except ValidationError as e:
                raise ConfigError(_format_errors(e, {k: "update" for k in partial})) from e
            return self._config

    def render(self) -> str:
        """Every key with its resolved value, in declaration order."""
        config = self.config
        lines = []
        for name, field in RunConfig.model_fields.items():
            if field.description:
                lines.append(f"# {field.description}")
            lines.append(f"{name} = {_render_value(getattr(config, name))}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir: Path) -> Path:
        with self._lock:
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / RESOLVED_NAME
            path.write_text(self.render(), encoding="utf-8")
            return path
