"""Contrastive batch construction: sync positives, temporally shifted
same-speaker negatives, and cross-speaker negatives, each carrying the
margin its class gets in the loss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, asdict

from .errors import ConfigError, SamplingError, WindowError
from .registry import FeatureClip

# same-track shifts of up to one clip-length times five still overlap the
# local context window; beyond that they count as non-overlapping
OVERLAP_MAX_SHIFT = 25


class PairClass(enum.Enum):
    POSITIVE = "positive"
    SAME_SPEAKER_NEGATIVE = "same_speaker_negative"
    CROSS_SPEAKER_NEGATIVE = "cross_speaker_negative"


@dataclass
class PairSample:
    audio: FeatureClip
    visual: FeatureClip
    label: int
    pair_class: PairClass
    margin: float


@dataclass
class SamplerConfig:
    pos_fraction: float = 0.5
    cross_fraction: float = 0.2   # fraction of negatives that are cross-speaker
    min_shift_frames: int = 5
    margin_same: float = 0.1
    margin_cross: float = 0.3

    def __post_init__(self):
        for name in ("pos_fraction", "cross_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        for name in ("margin_same", "margin_cross"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if self.margin_same > self.margin_cross:
            raise ConfigError("margin_same must not exceed margin_cross "
                              f"({self.margin_same} > {self.margin_cross})")
        if self.min_shift_frames < 1:
            raise ConfigError("min_shift_frames must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def make_positive(corpus, track_id, start_frame):
    """Aligned pair cut from one track at one frame; label 1, margin 0."""
    track = corpus.track(track_id)
    return PairSample(
        audio=track.audio_clip(start_frame),
        visual=track.visual_clip(start_frame),
        label=1,
        pair_class=PairClass.POSITIVE,
        margin=0.0,
    )


def _random_start(track, rng):
    return int(rng.integers(0, track.max_start_frame() + 1))


def make_same_speaker_negative(corpus, rng, config):
    """Same speaker, either a shifted window of one track or two tracks.

    Same-track shifts are at least `min_shift_frames` and alternate between
    the context-overlap regime ([min_shift, 25] frames) and larger shifts so
    both kinds of negative occur.
    """
    speakers = corpus.speaker_ids
    sid = speakers[int(rng.integers(0, len(speakers)))]
    tracks = corpus.tracks_of(sid)
    track = tracks[int(rng.integers(0, len(tracks)))]
    min_shift = config.min_shift_frames
    max_shift = track.max_start_frame()

    use_other_track = len(tracks) >= 2 and rng.random() < 0.3
    if not use_other_track and max_shift < min_shift:
        others = [t for t in tracks if t.track_id != track.track_id]
        if not others:
            raise SamplingError(f"speaker {sid!r} has no valid shift and no "
                                "second track")
        use_other_track = True

    if use_other_track:
        others = [t for t in tracks if t.track_id != track.track_id]
        other = others[int(rng.integers(0, len(others)))]
        audio = track.audio_clip(_random_start(track, rng))
        visual = other.visual_clip(_random_start(other, rng))
    else:
        if rng.random() < 0.5 and min_shift <= OVERLAP_MAX_SHIFT:
            hi = min(OVERLAP_MAX_SHIFT, max_shift)
        else:
            hi = max_shift
        shift = int(rng.integers(min_shift, hi + 1))
        if rng.random() < 0.5:
            shift = -shift
        lo = max(0, -shift)
        hi_start = min(max_shift, max_shift - shift)
        f_a = int(rng.integers(lo, hi_start + 1))
        f_v = f_a + shift
        audio = track.audio_clip(f_a)
        visual = track.visual_clip(f_v)

    return PairSample(audio=audio, visual=visual, label=0,
                      pair_class=PairClass.SAME_SPEAKER_NEGATIVE,
                      margin=config.margin_same)


def make_cross_speaker_negative(corpus, rng, config):
    """Audio from one speaker, visuals from a different one; label 0."""
    speakers = corpus.speaker_ids
    if len(speakers) < 2:
        raise SamplingError("cross-speaker negatives need >= 2 speakers")
    i = int(rng.integers(0, len(speakers)))
    j = int(rng.integers(0, len(speakers) - 1))
    if j >= i:
        j += 1
    a_tracks = corpus.tracks_of(speakers[i])
    v_tracks = corpus.tracks_of(speakers[j])
    a_track = a_tracks[int(rng.integers(0, len(a_tracks)))]
    v_track = v_tracks[int(rng.integers(0, len(v_tracks)))]
    return PairSample(
        audio=a_track.audio_clip(_random_start(a_track, rng)),
        visual=v_track.visual_clip(_random_start(v_track, rng)),
        label=0,
        pair_class=PairClass.CROSS_SPEAKER_NEGATIVE,
        margin=config.margin_cross,
    )


def _random_positive(corpus, rng):
    track = corpus.tracks[int(rng.integers(0, len(corpus.tracks)))]
    return make_positive(corpus, track.track_id, _random_start(track, rng))


def sample_batch(corpus, batch_size, config, rng):
    """Draw a batch; each sample's class is an independent coin flip."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    batch = []
    for _ in range(batch_size):
        if rng.random() < config.pos_fraction:
            batch.append(_random_positive(corpus, rng))
        elif rng.random() < config.cross_fraction:
            batch.append(make_cross_speaker_negative(corpus, rng, config))
        else:
            batch.append(make_same_speaker_negative(corpus, rng, config))
    return batch
