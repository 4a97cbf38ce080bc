"""Audio-visual synchronization toolkit.

Dual-stream encoders over six feature representations, margin-based
contrastive training with cross-speaker negatives, and offset/accuracy
metrics, all on a minimal deterministic tensor layer.
"""

from .model import (EncoderConfig, SyncModel, build_model, classify,
                    param_count, sync_probability)
from .registry import FeatureClip, RepresentationSpec, builtin_specs, get_spec
from .sampler import PairClass, PairSample, SamplerConfig, sample_batch
from .synth import synth_corpus
from .trackio import Corpus, Track, load_manifest, save_corpus
from .train import TrainConfig, train

__all__ = [
    "EncoderConfig", "SyncModel", "build_model", "classify", "param_count",
    "sync_probability", "FeatureClip", "RepresentationSpec", "builtin_specs",
    "get_spec", "PairClass", "PairSample", "SamplerConfig", "sample_batch",
    "synth_corpus", "Corpus", "Track", "load_manifest", "save_corpus",
    "TrainConfig", "train",
]

__version__ = "0.1.0"
