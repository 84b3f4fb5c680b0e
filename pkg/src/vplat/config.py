"""Hierarchical configuration properties with source-precedence resolution.

Values arrive from three sources; api overrides file overrides default.
Unknown names are rejected loudly, with close-match suggestions, because
silently absorbed typos are the classic way a simulation run gets
configured wrong without anyone noticing.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass
from typing import Any

SOURCE_DEFAULT = "default"
SOURCE_FILE = "file"
SOURCE_API = "api"

_PRECEDENCE = (SOURCE_DEFAULT, SOURCE_FILE, SOURCE_API)

TYPE_INT = "integer"
TYPE_BOOL = "boolean"
TYPE_STRING = "string"
TYPE_SIZE = "size"

_NAME_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)*$")
_INT_RE = re.compile(r"^-?(0x[0-9a-fA-F]+|\d+)(Ki|Mi|Gi)?$")

_SUFFIXES = {"Ki": 1 << 10, "Mi": 1 << 20, "Gi": 1 << 30, None: 1}


class ConfigError(Exception):
    """Unknown property, type mismatch, or file syntax error."""


@dataclass(frozen=True)
class PropertySpec:
    name: str
    type: str
    default: Any
    description: str = ""

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ConfigError(f"bad property name {self.name!r}")
        if self.type not in (TYPE_INT, TYPE_BOOL, TYPE_STRING, TYPE_SIZE):
            raise ConfigError(f"{self.name}: unknown type {self.type!r}")
        object.__setattr__(self, "default", _coerce(self, self.default))


def _parse_int_text(spec: PropertySpec, text: str) -> int:
    match = _INT_RE.match(text)
    if not match:
        raise ConfigError(f"{spec.name}: cannot parse {text!r} as {spec.type}")
    body, suffix = match.group(1), match.group(2)
    sign = -1 if text.startswith("-") else 1
    return sign * int(body, 0) * _SUFFIXES[suffix]


def _coerce(spec: PropertySpec, raw: Any) -> Any:
    """Parse/validate a raw (possibly textual) value to the declared type."""
    if spec.type in (TYPE_INT, TYPE_SIZE):
        if isinstance(raw, bool):
            raise ConfigError(f"{spec.name}: expected {spec.type}, got boolean")
        if isinstance(raw, int):
            return raw
        if isinstance(raw, str):
            return _parse_int_text(spec, raw.strip())
    elif spec.type == TYPE_BOOL:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str):
            if raw.strip() == "true":
                return True
            if raw.strip() == "false":
                return False
            raise ConfigError(
                f"{spec.name}: cannot parse {raw!r} as boolean (use true/false)"
            )
    elif spec.type == TYPE_STRING:
        if isinstance(raw, str):
            return raw
    raise ConfigError(f"{spec.name}: expected {spec.type}, got {type(raw).__name__}")


class PropertySet:
    """Declared properties plus layered overrides tagged with their source."""

    def __init__(self, specs: list[PropertySpec] | None = None) -> None:
        self._specs: dict[str, PropertySpec] = {}
        self._layers: dict[str, dict[str, Any]] = {s: {} for s in _PRECEDENCE}
        self._frozen = False
        for spec in specs or []:
            self.define(spec)

    def define(self, spec: PropertySpec) -> None:
        if self._frozen:
            raise ConfigError("property set is frozen")
        if spec.name in self._specs:
            raise ConfigError(f"duplicate property {spec.name!r}")
        self._specs[spec.name] = spec

    def spec(self, name: str) -> PropertySpec:
        spec = self._specs.get(name)
        if spec is None:
            hint = ""
            close = difflib.get_close_matches(name, self._specs, n=3)
            if close:
                hint = f" (did you mean: {', '.join(close)}?)"
            raise ConfigError(f"unknown property {name!r}{hint}")
        return spec

    def specs(self) -> list[PropertySpec]:
        return [self._specs[name] for name in sorted(self._specs)]

    def set(self, name: str, raw: Any, source: str = SOURCE_API) -> None:
        if self._frozen:
            raise ConfigError("property set is frozen")
        if source not in (SOURCE_FILE, SOURCE_API):
            raise ConfigError(f"bad override source {source!r}")
        spec = self.spec(name)
        self._layers[source][name] = _coerce(spec, raw)

    def get(self, name: str) -> Any:
        spec = self.spec(name)
        for source in reversed(_PRECEDENCE):
            if name in self._layers[source]:
                return self._layers[source][name]
        return spec.default

    def source_of(self, name: str) -> str:
        self.spec(name)
        for source in reversed(_PRECEDENCE):
            if name in self._layers[source]:
                return source
        return SOURCE_DEFAULT

    def apply(self, overrides: dict[str, Any], source: str) -> None:
        for name, raw in overrides.items():
            self.set(name, raw, source)

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    def snapshot(self) -> list[dict[str, Any]]:
        """Resolved view: one {name, value, source} record per property."""
        return [
            {"name": name, "value": self.get(name), "source": self.source_of(name)}
            for name in sorted(self._specs)
        ]


def parse_file(text: str) -> dict[str, Any]:
    """Parse `dotted.name = value` lines into an override mapping.

    Values: decimal/0x integers with optional Ki/Mi/Gi suffix, true/false,
    or double-quoted strings. '#' starts a comment. Raises ConfigError
    with the offending line number.
    """
    overrides: dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line.split("#", 1)[0]:
            raise ConfigError(f"line {lineno}: expected 'name = value'")
        name, _, rest = line.partition("=")
        name = name.strip()
        if not _NAME_RE.match(name):
            raise ConfigError(f"line {lineno}: bad property name {name!r}")
        rest = rest.strip()
        if rest.startswith('"'):
            end = rest.find('"', 1)
            if end < 0:
                raise ConfigError(f"line {lineno}: unterminated string")
            trailer = rest[end + 1:].strip()
            if trailer and not trailer.startswith("#"):
                raise ConfigError(f"line {lineno}: trailing junk {trailer!r}")
            value: Any = rest[1:end]
        else:
            token = rest.split("#", 1)[0].strip()
            if token == "true":
                value = True
            elif token == "false":
                value = False
            elif _INT_RE.match(token):
                match = _INT_RE.match(token)
                sign = -1 if token.startswith("-") else 1
                value = sign * int(match.group(1), 0) * _SUFFIXES[match.group(2)]
            else:
                raise ConfigError(f"line {lineno}: cannot parse value {token!r}")
        overrides[name] = value
    return overrides


def render_file(overrides: dict[str, Any]) -> str:
    """Inverse of parse_file for the supported literal types."""
    lines = []
    for name in overrides:
        value = overrides[name]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, int):
            text = str(value)
        elif isinstance(value, str):
            if '"' in value:
                raise ConfigError(f"{name}: string values cannot contain '\"'")
            text = f'"{value}"'
        else:
            raise ConfigError(f"{name}: unsupported value type")
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"
