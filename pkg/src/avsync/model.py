"""Dual-stream encoder: per-representation preprocessing, adaptive pooling to
one unified map size, a shared extraction tower per modality, and an
embedding head whose final ReLU keeps cosine scores in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError, SpecMismatchError
from .registry import get_spec, model_input_dims, stack_model_inputs

# Default preprocessing plans: (out_channels, stride) per conv block.
# Large inputs get strided reduction; small ones get channel expansion and
# rely on the adaptive pool for spatial unification.
DEFAULT_PREPROC_PLANS = {
    "rgb": ((32, 4), (64, 2)),
    "parsing": ((32, 4), (64, 2)),
    "landmarks": ((32, 1), (64, 1)),
    "3dmm": ((32, 1), (64, 1)),
    "mel": ((32, 2), (64, 1)),
    "hubert": ((64, 2),),
}
DEFAULT_SHARED_PLAN = ((128, 2), (256, 2))
KERNEL = 3
PAD = 1


@dataclass
class EncoderConfig:
    visual_spec: str = "rgb"
    audio_spec: str = "mel"
    unified_hw: tuple = (12, 12)
    unified_channels: int = 64
    embed_dim: int = 512
    visual_preproc: tuple | None = None
    audio_preproc: tuple | None = None
    shared_plan: tuple = DEFAULT_SHARED_PLAN
    use_residual: bool = False
    threshold: float = 0.5

    def __post_init__(self):
        if self.visual_preproc is None:
            self.visual_preproc = DEFAULT_PREPROC_PLANS[self.visual_spec]
        if self.audio_preproc is None:
            self.audio_preproc = DEFAULT_PREPROC_PLANS[self.audio_spec]
        self.visual_preproc = tuple(tuple(p) for p in self.visual_preproc)
        self.audio_preproc = tuple(tuple(p) for p in self.audio_preproc)
        self.shared_plan = tuple(tuple(p) for p in self.shared_plan)
        self.unified_hw = tuple(self.unified_hw)
        if self.embed_dim < 8:
            raise ConfigError(f"embed_dim must be >= 8, got {self.embed_dim}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")
        for plan_name, plan in (("visual_preproc", self.visual_preproc),
                                ("audio_preproc", self.audio_preproc),
                                ("shared_plan", self.shared_plan)):
            if len(plan) == 0:
                raise ConfigError(f"{plan_name} must not be empty")
        for plan in (self.visual_preproc, self.audio_preproc):
            if plan[-1][0] != self.unified_channels:
                raise ConfigError("last preprocessing block must emit "
                                  f"unified_channels={self.unified_channels}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _conv_out_hw(h, w, stride):
    return ((h + 2 * PAD - KERNEL) // stride + 1,
            (w + 2 * PAD - KERNEL) // stride + 1)


class ConvBlock:
    """conv 3x3 -> batchnorm -> relu."""

    def __init__(self, name, cin, cout, stride, rng, dtype=np.float32):
        bound = np.sqrt(6.0 / (cin * KERNEL * KERNEL))
        self.name = name
        self.stride = int(stride)
        self.w = T.parameter(rng.uniform(-bound, bound,
                                         size=(cout, cin, KERNEL, KERNEL)).astype(dtype))
        self.b = T.parameter(np.zeros(cout, dtype=dtype))
        self.gamma = T.parameter(np.ones(cout, dtype=dtype))
        self.beta = T.parameter(np.zeros(cout, dtype=dtype))
        self.bn_state = T.BatchNormState(cout, dtype=dtype)

    def forward(self, x, train):
        y = T.conv2d(x, self.w, self.b, stride=(self.stride, self.stride),
                     padding=(PAD, PAD))
        y = T.batchnorm2d(y, self.gamma, self.beta, self.bn_state, train)
        return T.relu(y)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b,
                f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def weight_tensors(self):
        return [self.w]

    def bn_arrays(self):
        return {f"{self.name}.running_mean": self.bn_state.running_mean,
                f"{self.name}.running_var": self.bn_state.running_var}


class LinearHead:
    def __init__(self, name, din, dout, rng, dtype=np.float32):
        bound = np.sqrt(6.0 / din)
        self.name = name
        self.w = T.parameter(rng.uniform(-bound, bound, size=(dout, din)).astype(dtype))
        self.b = T.parameter(np.zeros(dout, dtype=dtype))

    def forward(self, x):
        return T.linear(x, self.w, self.b)

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def weight_tensors(self):
        return [self.w]

    def param_count(self):
        return self.w.size + self.b.size


class StreamEncoder:
    """One modality tower: preprocessing blocks, pool, shared blocks, head."""

    def __init__(self, name, spec_name, preproc_plan, config, rng, dtype=np.float32):
        self.name = name
        self.spec = get_spec(spec_name)
        self.config = config
        cin, h, w = model_input_dims(self.spec)
        self.blocks = []
        for i, (cout, stride) in enumerate(preproc_plan):
            self.blocks.append(ConvBlock(f"{name}.pre{i}", cin, cout, stride, rng, dtype))
            cin = cout
            h, w = _conv_out_hw(h, w, stride)
        self.shared = []
        uc = config.unified_channels
        h, w = config.unified_hw
        cin = uc
        for i, (cout, stride) in enumerate(config.shared_plan):
            self.shared.append(ConvBlock(f"{name}.shared{i}", cin, cout, stride, rng, dtype))
            cin = cout
            h, w = _conv_out_hw(h, w, stride)
        self.flat_dim = cin * h * w
        self.head = LinearHead(f"{name}.head", self.flat_dim, config.embed_dim, rng, dtype)

    def unified_map(self, x, train=False):
        """Run preprocessing and pooling; output is [N, uc, uh, uw]."""
        for blk in self.blocks:
            x = blk.forward(x, train)
        uh, uw = self.config.unified_hw
        return T.adaptive_avg_pool2d(x, uh, uw)

    def forward(self, x, train=False):
        u = self.unified_map(x, train)
        for blk in self.shared:
            y = blk.forward(u, train)
            if self.config.use_residual and y.shape == u.shape:
                y = T.add(y, u)
            u = y
        n = u.shape[0]
        flat = T.reshape(u, (n, self.flat_dim))
        return T.relu(self.head.forward(flat))

    def params(self):
        out = {}
        for blk in self.blocks + self.shared:
            out.update(blk.params())
        out.update(self.head.params())
        return out

    def weight_tensors(self):
        out = []
        for blk in self.blocks + self.shared:
            out.extend(blk.weight_tensors())
        out.extend(self.head.weight_tensors())
        return out

    def bn_arrays(self):
        out = {}
        for blk in self.blocks + self.shared:
            out.update(blk.bn_arrays())
        return out


class SyncModel:
    """The full dual-stream model plus its config."""

    def __init__(self, config: EncoderConfig, seed_or_rng=0, dtype=np.float32):
        rng = (seed_or_rng if isinstance(seed_or_rng, np.random.Generator)
               else np.random.default_rng(seed_or_rng))
        self.config = config
        self.visual = StreamEncoder("vis", config.visual_spec,
                                    config.visual_preproc, config, rng, dtype)
        self.audio = StreamEncoder("aud", config.audio_spec,
                                   config.audio_preproc, config, rng, dtype)

    # -- parameter plumbing -------------------------------------------------
    def params(self):
        out = self.visual.params()
        out.update(self.audio.params())
        return out

    def weight_tensors(self):
        """Multiplicative weights only (conv + linear), for the L2 penalty."""
        return self.visual.weight_tensors() + self.audio.weight_tensors()

    def state_arrays(self):
        """All persistent arrays: parameters plus batchnorm running stats."""
        out = {name: p.data for name, p in self.params().items()}
        out.update(self.visual.bn_arrays())
        out.update(self.audio.bn_arrays())
        return out

    def load_state_arrays(self, arrays):
        own = self.state_arrays()
        for name, arr in own.items():
            if name not in arrays:
                raise ShapeError(f"model state missing array {name!r}")
            if arrays[name].shape != arr.shape:
                raise ShapeError(f"model state shape mismatch for {name!r}")
        params = self.params()
        for name, p in params.items():
            p.data = arrays[name].astype(p.data.dtype).copy()
        for enc in (self.visual, self.audio):
            for blk in enc.blocks + enc.shared:
                blk.bn_state.running_mean = arrays[f"{blk.name}.running_mean"].copy()
                blk.bn_state.running_var = arrays[f"{blk.name}.running_var"].copy()

    # -- encoding -----------------------------------------------------------
    def _check_spec(self, clip, want):
        if clip.spec.name != want:
            raise SpecMismatchError(f"clip has spec {clip.spec.name!r}, model "
                                    f"expects {want!r}")

    def encode_visual_batch(self, clips, train=False):
        for c in clips:
            self._check_spec(c, self.config.visual_spec)
        x = T.Tensor(stack_model_inputs(clips))
        return self.visual.forward(x, train=train)

    def encode_audio_batch(self, clips, train=False):
        for c in clips:
            self._check_spec(c, self.config.audio_spec)
        x = T.Tensor(stack_model_inputs(clips))
        return self.audio.forward(x, train=train)

    def encode_visual(self, clip):
        """Eval-mode embedding of one visual clip as a float32 [D] array."""
        with T.no_grad():
            return self.encode_visual_batch([clip]).data[0].copy()

    def encode_audio(self, clip):
        with T.no_grad():
            return self.encode_audio_batch([clip]).data[0].copy()

    def score_pairs(self, audio_clips, visual_clips):
        """Eval-mode p_sync for each (audio, visual) pair; [N] float array."""
        if len(audio_clips) != len(visual_clips):
            raise ShapeError("score_pairs needs equal-length clip lists")
        with T.no_grad():
            a = self.encode_audio_batch(audio_clips).data
            v = self.encode_visual_batch(visual_clips).data
        return sync_probability_rows(a, v)

    def param_count(self):
        return sum(p.data.size for p in self.params().values())


def build_model(config, seed_or_rng=0, dtype=np.float32):
    return SyncModel(config, seed_or_rng, dtype)


# ---------------------------------------------------------------------------
# sync head

def sync_probability(a, v):
    """Cosine similarity of two non-negative embeddings, in [0, 1].

    Returns exactly 0.0 when either embedding has zero norm.
    """
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.shape != v.shape or a.ndim != 1:
        raise ShapeError(f"embedding shapes differ: {a.shape} vs {v.shape}")
    na = np.linalg.norm(a)
    nv = np.linalg.norm(v)
    if na == 0.0 or nv == 0.0:
        return 0.0
    p = float(a @ v / (na * nv))
    return min(max(p, 0.0), 1.0)


def sync_probability_rows(a, v):
    """Row-wise sync_probability for [N, D] embedding arrays (float64)."""
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.shape != v.shape:
        raise ShapeError(f"embedding shapes differ: {a.shape} vs {v.shape}")
    dots = (a * v).sum(axis=1)
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(v, axis=1)
    out = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def cosine_rows_graph(a, v, tiny=1e-12):
    """In-graph row-wise cosine of two [N, D] embedding tensors.

    Matches the zero-norm convention of sync_probability: a zero row yields
    exactly 0 (and a zero gradient through the clamped denominator).
    """
    dots = T.sum_rows(T.mul(a, v))
    denom = T.mul(T.l2norm_rows(a), T.l2norm_rows(v))
    p = T.div(dots, T.maximum_scalar(denom, tiny))
    return T.minimum_scalar(p, 1.0)


def classify(p, threshold=0.5):
    """'sync' iff p strictly exceeds the threshold."""
    return "sync" if p > threshold else "unsync"


# ---------------------------------------------------------------------------
# parameter accounting without building a model

def param_count(config: EncoderConfig) -> int:
    """Total scalar parameter count for a config (no weights allocated)."""
    total = 0
    for spec_name, plan in ((config.visual_spec, config.visual_preproc),
                            (config.audio_spec, config.audio_preproc)):
        cin, h, w = model_input_dims(get_spec(spec_name))
        for cout, stride in plan:
            total += cout * cin * KERNEL * KERNEL + cout  # conv w + b
            total += 2 * cout  # batchnorm gamma + beta
            cin = cout
        cin = config.unified_channels
        h, w = config.unified_hw
        for cout, stride in config.shared_plan:
            total += cout * cin * KERNEL * KERNEL + cout
            total += 2 * cout
            cin = cout
            h, w = _conv_out_hw(h, w, stride)
        total += config.embed_dim * (cin * h * w) + config.embed_dim
    return total
