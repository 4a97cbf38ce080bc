"""Training loop: sample, encode both streams, score, margin loss, Adam.

One root seed splits into independent init / sampler / eval streams, so a
sampler change cannot perturb initialization. All stream states are carried
in checkpoints, which makes a resumed run reproduce the uninterrupted loss
trace exactly.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, config_hash
from .errors import ConfigError, DivergenceError
from .loss import LossConfig, total_loss
from .metrics import lip_sync_accuracy
from .model import EncoderConfig, SyncModel, cosine_rows_graph
from .optim import Adam
from .sampler import SamplerConfig, sample_batch
from .registry import stack_model_inputs


@dataclass
class TrainConfig:
    epochs: int = 30
    steps_per_epoch: int = 60
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    l2_lambda: float = 1e-4
    clamp_eps: float = 1e-7
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seed: int = 7
    eval_every: int = 1
    eval_pairs: int = 160
    stop_at_accuracy: float | None = 0.97

    def __post_init__(self):
        if isinstance(self.sampler, dict):
            self.sampler = SamplerConfig.from_dict(self.sampler)
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig.from_dict(self.encoder)
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("steps_per_epoch", "batch_size", "eval_every", "eval_pairs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def paper_profile(**overrides):
    """The documented large-scale profile (batch 64); desk tests use defaults."""
    cfg = dict(batch_size=64, epochs=30, steps_per_epoch=200,
               stop_at_accuracy=None)
    cfg.update(overrides)
    return TrainConfig(**cfg)


@dataclass
class History:
    step_loss: list = field(default_factory=list)
    evals: list = field(default_factory=list)        # {"epoch": int, "accuracy": float}
    epoch_seconds: list = field(default_factory=list)  # wall clock, not persisted

    def best_accuracy(self):
        return max((e["accuracy"] for e in self.evals), default=None)

    def to_json(self):
        """Deterministic serialization; wall-clock timings are excluded so
        identical runs produce identical files."""
        doc = {"step_loss": [float(x) for x in self.step_loss],
               "evals": self.evals}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(step_loss=doc["step_loss"], evals=doc["evals"])


def save_history(path, history):
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(history.to_json())
    os.replace(tmp, path)


def _rng_streams(seed):
    init_ss, sampler_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(sampler_ss),
            np.random.default_rng(eval_ss))


def _capture_rng(sampler_rng, eval_rng):
    return {"sampler": sampler_rng.bit_generator.state,
            "eval": eval_rng.bit_generator.state}


def _restore_rng(states, sampler_rng, eval_rng):
    sampler_rng.bit_generator.state = states["sampler"]
    eval_rng.bit_generator.state = states["eval"]


def train_step(model, batch, opt, loss_config):
    """One optimization step on an assembled batch; returns the loss value."""
    vis = T.Tensor(stack_model_inputs([s.visual for s in batch]))
    aud = T.Tensor(stack_model_inputs([s.audio for s in batch]))
    v_emb = model.visual.forward(vis, train=True)
    a_emb = model.audio.forward(aud, train=True)
    p = cosine_rows_graph(a_emb, v_emb)
    y = np.asarray([s.label for s in batch], dtype=np.float32)
    m = np.asarray([s.margin for s in batch], dtype=np.float32)
    loss = total_loss(p, y, m, model.weight_tensors(), loss_config)
    value = float(loss.data)
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite training loss: {value}")
    T.backward(loss)
    opt.step()
    opt.zero_grad()
    return value


def evaluate(model, corpus, n_pairs, sampler_config, rng):
    """Eval-mode accuracy with batchnorm running stats."""
    return lip_sync_accuracy(model, corpus, n_pairs, sampler_config, rng,
                             threshold=model.config.threshold)


def make_checkpoint(config, model, opt, epoch, sampler_rng, eval_rng):
    cfg_dict = config.to_dict()
    return Checkpoint(
        config=cfg_dict,
        config_digest=config_hash(cfg_dict),
        epoch=int(epoch),
        adam_step=int(opt.step_count),
        rng_state=_capture_rng(sampler_rng, eval_rng),
        model_arrays={k: v.copy() for k, v in model.state_arrays().items()},
        adam_arrays={k: v.copy() for k, v in opt.state_arrays().items()},
    )


def train(config: TrainConfig, train_corpus, val_corpus=None, resume=None,
          log=None):
    """Run the configured training; returns (checkpoint, history, model).

    `resume` is a Checkpoint whose config hash must match `config`. The
    returned checkpoint reflects the state after the last completed epoch.
    """
    val = val_corpus if val_corpus is not None else train_corpus
    init_rng, sampler_rng, eval_rng = _rng_streams(config.seed)
    model = SyncModel(config.encoder, init_rng)
    opt = Adam(model.params(), lr=config.lr, beta1=config.beta1,
               beta2=config.beta2)
    loss_config = LossConfig(l2_lambda=config.l2_lambda,
                             clamp_eps=config.clamp_eps)
    start_epoch = 0
    if resume is not None:
        if resume.config_digest != config_hash(config.to_dict()):
            raise ConfigError("resume checkpoint was written with a different config")
        model.load_state_arrays(resume.model_arrays)
        opt.load_state_arrays(resume.adam_arrays, resume.adam_step)
        _restore_rng(resume.rng_state, sampler_rng, eval_rng)
        start_epoch = resume.epoch

    history = History()
    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        for _ in range(config.steps_per_epoch):
            batch = sample_batch(train_corpus, config.batch_size,
                                 config.sampler, sampler_rng)
            history.step_loss.append(train_step(model, batch, opt, loss_config))
        history.epoch_seconds.append(time.perf_counter() - t0)
        stop = False
        if (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs:
            acc = evaluate(model, val, config.eval_pairs, config.sampler, eval_rng)
            history.evals.append({"epoch": epoch + 1, "accuracy": float(acc)})
            if log is not None:
                log(f"epoch {epoch + 1}: loss {history.step_loss[-1]:.4f} "
                    f"val_accuracy {acc:.4f} ({history.epoch_seconds[-1]:.1f}s)")
            if (config.stop_at_accuracy is not None
                    and acc >= config.stop_at_accuracy):
                stop = True
        epochs_done = epoch + 1
        if stop:
            break
    else:
        epochs_done = config.epochs

    ckpt = make_checkpoint(config, model, opt, epochs_done, sampler_rng, eval_rng)
    return ckpt, history, model


def model_from_checkpoint(ckpt, config: TrainConfig | None = None):
    """Rebuild a SyncModel in eval state from a checkpoint (+sidecar config)."""
    if config is None:
        if ckpt.config is None:
            raise ConfigError("checkpoint has no config sidecar; pass one explicitly")
        config = TrainConfig.from_dict(ckpt.config)
    model = SyncModel(config.encoder, np.random.default_rng(0))
    model.load_state_arrays(ckpt.model_arrays)
    return model, config
