"""``key = value`` config files with one section per settings class.

Sections are ``[net]``, ``[loss]``, ``[train]`` and ``[solver]``; keys are
the field names of the matching dataclass. Unknown sections or keys are
errors. :func:`canonical_text` renders every field, so a checkpoint's
config block fully determines the model.
"""

import configparser
import math
from dataclasses import dataclass, fields

from ..classical import SolverParams
from ..errors import ConfigError, UsageError
from ..unfolded.config import LossConfig, NetConfig, TrainSchedule

SECTIONS = {"net": NetConfig, "loss": LossConfig, "train": TrainSchedule, "solver": SolverParams}


@dataclass(frozen=True)
class RunConfig:
    net: NetConfig = NetConfig()
    loss: LossConfig = LossConfig()
    train: TrainSchedule = TrainSchedule()
    solver: SolverParams = SolverParams()


def _kind(f):
    return f.type if isinstance(f.type, str) else f.type.__name__


def _parse(section, f, kind, raw):
    text = raw.strip()
    where = f"[{section}] {f.name}"
    if text.lower() == "none":
        if f.default is None:
            return None
        raise ConfigError(f"{where} cannot be none")
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            v = float(text)
            if math.isnan(v):
                raise ValueError(text)
            return v
        if kind == "str":
            return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind}") from None
    raise ConfigError(f"{where}: unsupported field type {kind}")


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text, origin="<config>"):
    """Parse config text into a :class:`RunConfig` (missing keys keep defaults)."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(" ".join(f"{origin}: {exc}".split())) from None
    if cp.defaults():
        raise ConfigError(f"{origin}: keys outside any section: {sorted(cp.defaults())}")
    built = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        cls = SECTIONS[section]
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in cp.items(section):
            if key not in known:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
            values[key] = _parse(section, known[key], _kind(known[key]), raw)
        try:
            built[section] = cls(**values)
        except UsageError as exc:
            raise ConfigError(f"{origin}: [{section}] {exc}") from None
    return RunConfig(**built)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def canonical_text(run):
    """Every field of every section, in declaration order."""
    lines = []
    for section, cls in SECTIONS.items():
        obj = getattr(run, section)
        lines.append(f"[{section}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)

