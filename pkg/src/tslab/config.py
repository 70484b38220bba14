"""Flat key=value configuration with mirrored command-line flags.

A config file is UTF-8 text, one ``key = value`` per line, ``#`` to end
of line as comment, blank lines ignored.  Every field of the target
dataclass is also exposed as a ``--key`` command-line flag; precedence
is CLI flag over file value over dataclass default.  Environment
variables are never consulted.
"""

import dataclasses


def parse_config_file(path):
    """File contents as a key -> raw string dict."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}"
                )
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return values


def _coerce(field, raw):
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    return raw


def build_config(cls, file_values=None, overrides=None):
    """Instantiate a flat config dataclass from raw string sources."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    merged = {}
    for source_name, source in (("config file", file_values), ("flag", overrides)):
        if not source:
            continue
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in fields:
                raise ValueError(f"unknown {source_name} key {key!r}")
            merged[key] = _coerce(fields[key], raw)
    return cls(**merged)


def add_config_flags(parser, cls):
    """One --key flag per dataclass field (string-valued; coerced later)."""
    group = parser.add_argument_group("configuration overrides")
    for f in dataclasses.fields(cls):
        group.add_argument(
            f"--{f.name}",
            default=None,
            metavar="V",
            help=f"override {f.name} (default {f.default!r})",
        )


def flag_overrides(args, cls):
    """The subset of parsed flags that belong to the config dataclass."""
    names = [f.name for f in dataclasses.fields(cls)]
    return {name: getattr(args, name) for name in names}


def config_lines(cfg):
    """Canonical 'key = value' dump, one line per field, sorted."""
    pairs = sorted(dataclasses.asdict(cfg).items())
    return [f"{k} = {v}" for k, v in pairs]
