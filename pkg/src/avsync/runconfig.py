"""Run configuration files: JSON documents with encoder / sampler / trainer /
eval / paths sections. Unknown sections or keys are rejected, and the parsed
result can be echoed back in one canonical form.
"""

from __future__ import annotations

import dataclasses
import json

from .errors import ConfigError
from .model import EncoderConfig
from .sampler import SamplerConfig
from .train import TrainConfig

_TRAINER_KEYS = {"epochs", "steps_per_epoch", "batch_size", "lr", "beta1",
                 "beta2", "l2_lambda", "clamp_eps", "seed", "eval_every",
                 "eval_pairs", "stop_at_accuracy"}
_ENCODER_KEYS = {f.name for f in dataclasses.fields(EncoderConfig)}
_SAMPLER_KEYS = {f.name for f in dataclasses.fields(SamplerConfig)}
_EVAL_KEYS = {"pairs", "clips", "seed"}
_PATH_KEYS = {"corpus", "val_corpus", "checkpoint", "history", "out"}

_SECTIONS = {
    "encoder": _ENCODER_KEYS,
    "sampler": _SAMPLER_KEYS,
    "trainer": _TRAINER_KEYS,
    "eval": _EVAL_KEYS,
    "paths": _PATH_KEYS,
}


def load_run_config(path):
    """Parse and validate a config file into a section dict."""
    with open(path, "rb") as fh:
        try:
            doc = json.loads(fh.read().decode())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        unknown = set(body) - _SECTIONS[section]
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)} in "
                              f"section {section!r}")
    return doc


def build_train_config(file_doc=None, flag_overrides=None):
    """Assemble a TrainConfig from a config file plus flag overrides.

    `flag_overrides` uses the same section/key structure; flags win over the
    file, and dataclass defaults fill the rest.
    """
    merged = {"encoder": {}, "sampler": {}, "trainer": {}}
    for src in (file_doc or {}), (flag_overrides or {}):
        for section in ("encoder", "sampler", "trainer"):
            for k, v in src.get(section, {}).items():
                if v is not None:
                    merged[section][k] = v
    try:
        encoder = EncoderConfig(**merged["encoder"])
        sampler = SamplerConfig(**merged["sampler"])
        return TrainConfig(encoder=encoder, sampler=sampler, **merged["trainer"])
    except TypeError as e:
        raise ConfigError(str(e)) from None


def canonical_dump(train_config):
    """Canonical JSON echo of a fully resolved training configuration."""
    d = train_config.to_dict()
    doc = {
        "encoder": d.pop("encoder"),
        "sampler": d.pop("sampler"),
        "trainer": d,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
