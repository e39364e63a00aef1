"""Run configuration: ``section.key = value`` text files layered under command-line overrides."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

from .enhancement import EnhancementParams
from .extraction import ExtractionParams
from .identification import IdentifyParams
from .matching import MatchParams


class ConfigError(ValueError):
    pass


# config section -> (Config attribute, dataclass)
SECTIONS = {
    "enhance": ("enhancement", EnhancementParams),
    "extract": ("extraction", ExtractionParams),
    "match": ("match", MatchParams),
    "rerank": ("rerank", IdentifyParams),
}
# rerank.match duplicates the match section and match.seed the global seed
SKIP = {("rerank", "match"), ("match", "seed")}


@dataclass(frozen=True)
class Config:
    enhancement: EnhancementParams = EnhancementParams()
    extraction: ExtractionParams = ExtractionParams()
    match: MatchParams = MatchParams()
    rerank: IdentifyParams = IdentifyParams()
    seed: int = 0
    # raw assignments in the order they were applied, for report headers
    assignments: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def identify_params(self) -> IdentifyParams:
        return replace(self.rerank, match=replace(self.match, seed=self.seed))

    def match_params(self) -> MatchParams:
        return replace(self.match, seed=self.seed)

    def lines(self) -> list[str]:
        """Every effective setting as ``key = value``, sorted by key."""
        out = [f"seed = {self.seed}"]
        for sec, (attr, cls) in SECTIONS.items():
            obj = getattr(self, attr)
            for f in dataclasses.fields(cls):
                if (sec, f.name) in SKIP:
                    continue
                out.append(f"{sec}.{f.name} = {_show(getattr(obj, f.name))}")
        return sorted(out)


def keys() -> list[str]:
    out = ["seed"]
    for sec, (_, cls) in SECTIONS.items():
        out += [f"{sec}.{f.name}" for f in dataclasses.fields(cls) if (sec, f.name) not in SKIP]
    return sorted(out)


def _show(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(text: str, tp, key: str):
    text = text.strip()
    try:
        if tp is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        origin = typing.get_origin(tp)
        if origin is tuple:
            args = typing.get_args(tp)
            parts = [p for p in text.replace(" ", "").split(",") if p]
            if len(parts) != len(args):
                raise ValueError(text)
            return tuple(a(p) for a, p in zip(args, parts))
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _field_types(cls) -> dict:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def apply(cfg: Config, key: str, value: str) -> Config:
    key = key.strip()
    if key == "seed":
        return replace(cfg, seed=_convert(value, int, key), assignments=cfg.assignments + ((key, value.strip()),))
    sec, _, name = key.partition(".")
    if sec not in SECTIONS or (sec, name) in SKIP:
        raise ConfigError(f"unknown config key {key!r}")
    attr, cls = SECTIONS[sec]
    types = _field_types(cls)
    if name not in types:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        obj = replace(getattr(cfg, attr), **{name: _convert(value, types[name], key)})
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return replace(cfg, **{attr: obj}, assignments=cfg.assignments + ((key, value.strip()),))


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    k, _, v = text.partition("=")
    return k.strip(), v.strip()


def parse_config(text: str, base: Config | None = None) -> Config:
    cfg = base or Config()
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            cfg = apply(cfg, *parse_assignment(line))
        except ConfigError as exc:
            raise ConfigError(f"line {n}: {exc}") from None
    return cfg


def load_config(path=None, overrides=(), seed: int | None = None) -> Config:
    """File settings first, then ``key=value`` overrides, then an explicit seed."""
    cfg = Config()
    if path is not None:
        cfg = parse_config(Path(path).read_text(encoding="utf-8"), cfg)
    for o in overrides:
        cfg = apply(cfg, *parse_assignment(o))
    if seed is not None:
        cfg = apply(cfg, "seed", str(seed))
    return cfg
