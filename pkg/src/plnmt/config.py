"""Flat pipeline settings: defaults, then a ``key = value`` file, then command-line flags."""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, fields
from typing import Any, Mapping

from plnmt.codemodel import CodeConfig
from plnmt.errors import ConfigError
from plnmt.nmt import NmtConfig

log = logging.getLogger(__name__)

SEED_ENV = "PLNMT_SEED"


@dataclass
class PipelineConfig:
    seed: int = 1
    float64: bool = False
    # textpipe
    bpe_merges: int = 300
    src_vocab_size: int = 1000
    tgt_vocab_size: int = 1000
    # code model
    code_n: int = 2
    code_k: int = 4
    code_hidden: int = 256
    code_tau: float = 1.0
    code_tau_final: float | None = None
    code_hard: bool = True
    code_epochs: int = 50
    code_lr: float = 0.25
    code_batch_size: int = 32
    # nmt
    nmt_hidden: int = 64
    nmt_dropout: float = 0.2
    nmt_lr: float = 0.25
    nmt_momentum: float = 0.9
    nmt_clip_norm: float = 5.0
    nmt_anneal_factor: float = 10.0
    nmt_anneal_patience: int = 500
    nmt_epochs: int = 10
    nmt_batch_size: int = 32
    nmt_max_steps: int | None = None
    # decoding
    beam_size: int = 5
    max_len: int | None = None

    def code_config(self) -> CodeConfig:
        return CodeConfig(n=self.code_n, k=self.code_k, hidden=self.code_hidden,
                          tau=self.code_tau, tau_final=self.code_tau_final,
                          hard=self.code_hard, epochs=self.code_epochs, lr=self.code_lr,
                          batch_size=self.code_batch_size, seed=self.seed)

    def nmt_config(self) -> NmtConfig:
        return NmtConfig(hidden=self.nmt_hidden, dropout=self.nmt_dropout, lr=self.nmt_lr,
                         momentum=self.nmt_momentum, clip_norm=self.nmt_clip_norm,
                         anneal_factor=self.nmt_anneal_factor,
                         anneal_patience=self.nmt_anneal_patience, epochs=self.nmt_epochs,
                         batch_size=self.nmt_batch_size, max_steps=self.nmt_max_steps,
                         seed=self.seed)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def format(self) -> str:
        return "\n".join(f"{k} = {_render(v)}" for k, v in self.to_dict().items())


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


_OPTIONAL_KINDS = {"nmt_max_steps": int, "max_len": int, "code_tau_final": float}


def _field_kind(name: str) -> type:
    default = _FIELDS[name].default
    if default is None:
        return _OPTIONAL_KINDS[name]
    return type(default)


def coerce(name: str, raw) -> Any:
    """Convert ``raw`` (usually a string) to the type of field ``name``."""
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = _FIELDS[name].default is None
    if optional and text.lower() in ("none", ""):
        return None
    kind = _field_kind(name)
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name} (expected {kind.__name__})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = coerce(key, value)
    return values


def load_config_file(path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def resolve(file_values: Mapping[str, Any] | None = None,
            flag_values: Mapping[str, Any] | None = None,
            environ: Mapping[str, str] | None = None) -> PipelineConfig:
    """Defaults < file < flags.  ``None`` flag values mean "not given".

    The seed falls back to ``$PLNMT_SEED`` when neither file nor flag sets it.
    """
    environ = os.environ if environ is None else environ
    merged: dict[str, Any] = {}
    if SEED_ENV in environ and environ[SEED_ENV].strip():
        merged["seed"] = coerce("seed", environ[SEED_ENV])
    for layer in (file_values or {}), (flag_values or {}):
        for key, value in layer.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = coerce(key, value)
    config = PipelineConfig(**merged)
    log.info("resolved config:\n%s", config.format())
    return config
