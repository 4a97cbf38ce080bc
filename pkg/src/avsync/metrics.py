"""Sync-quality metrics: pairwise accuracy, offset scans, and the
distance-based corpus aggregates (one mean-of-minima, one confidence-style
median-minus-min).

Every function takes a `scorer`: anything with
`score_pairs(audio_clips, visual_clips) -> array of p in [0, 1]`. Trained
models satisfy this; tests also pass latent-based oracle scorers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, WindowError
from .sampler import sample_batch


@dataclass
class OffsetScan:
    track_id: str
    center_frame: int
    offsets: list
    distances: list


@dataclass
class MetricReport:
    accuracy: float
    lse_d: float
    lse_c: float
    n_pairs: int
    seed: int

    def to_text(self):
        return (f"accuracy {self.accuracy:.6f}\n"
                f"lse_d {self.lse_d:.6f}\n"
                f"lse_c {self.lse_c:.6f}\n"
                f"n_pairs {self.n_pairs}\n"
                f"seed {self.seed}\n")


def lip_sync_accuracy(scorer, corpus, n_pairs, sampler_config, rng,
                      threshold=0.5, batch_size=64):
    """Fraction of a 50/50 positive/negative draw classified correctly."""
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    cfg = replace(sampler_config, pos_fraction=0.5)
    correct = 0
    remaining = n_pairs
    while remaining > 0:
        take = min(batch_size, remaining)
        batch = sample_batch(corpus, take, cfg, rng)
        probs = scorer.score_pairs([s.audio for s in batch],
                                   [s.visual for s in batch])
        for s, p in zip(batch, probs):
            pred = 1 if p > threshold else 0
            correct += int(pred == s.label)
        remaining -= take
    return correct / n_pairs


def offset_scan(scorer, track, center_frame, offsets=None):
    """Distance 1 - p_sync of audio at the center against shifted visuals."""
    if offsets is None:
        offsets = list(range(-15, 16))
    offsets = [int(o) for o in offsets]
    if any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ConfigError("offsets must be strictly increasing")
    max_start = track.max_start_frame()
    for o in offsets:
        f = center_frame + o
        if not 0 <= f <= max_start:
            raise WindowError(f"offset {o} puts the window outside track "
                              f"{track.track_id!r}")
    if not 0 <= center_frame <= max_start:
        raise WindowError(f"center frame {center_frame} outside track")
    audio = track.audio_clip(center_frame)
    visuals = [track.visual_clip(center_frame + o) for o in offsets]
    probs = scorer.score_pairs([audio] * len(offsets), visuals)
    distances = [float(1.0 - p) for p in probs]
    return OffsetScan(track_id=track.track_id, center_frame=int(center_frame),
                      offsets=offsets, distances=distances)


def estimate_offset(scan: OffsetScan) -> int:
    """Offset of minimal distance; ties prefer small |offset|, then negative."""
    if not scan.offsets:
        raise ConfigError("cannot estimate an offset from an empty scan")
    best = min(zip(scan.distances, scan.offsets),
               key=lambda t: (t[0], abs(t[1]), t[1]))
    return int(best[1])


def _scan_centers(track, offsets, n_centers, rng):
    lo = -min(offsets)
    hi = track.max_start_frame() - max(offsets)
    if hi < lo:
        raise WindowError(f"track {track.track_id!r} too short for the scan range")
    return [int(rng.integers(lo, hi + 1)) for _ in range(n_centers)]


def lse_metrics(scorer, corpus, n_clips, rng, offsets=None):
    """Mean minimum distance and mean (median - min) over random clip scans."""
    if n_clips < 1:
        raise ConfigError(f"n_clips must be >= 1, got {n_clips}")
    if offsets is None:
        offsets = list(range(-15, 16))
    mins = []
    confs = []
    for _ in range(n_clips):
        track = corpus.tracks[int(rng.integers(0, len(corpus.tracks)))]
        center = _scan_centers(track, offsets, 1, rng)[0]
        scan = offset_scan(scorer, track, center, offsets)
        d = np.asarray(scan.distances)
        mins.append(float(d.min()))
        confs.append(float(np.median(d) - d.min()))
    return float(np.mean(mins)), float(np.mean(confs))


def metric_report(scorer, corpus, n_pairs, sampler_config, seed,
                  n_clips=None, threshold=0.5):
    """Bundle accuracy and the distance aggregates into one report."""
    rng = np.random.default_rng(seed)
    acc = lip_sync_accuracy(scorer, corpus, n_pairs, sampler_config, rng,
                            threshold=threshold)
    lse_d, lse_c = lse_metrics(scorer, corpus, n_clips or max(1, n_pairs // 20), rng)
    return MetricReport(accuracy=acc, lse_d=lse_d, lse_c=lse_c,
                        n_pairs=n_pairs, seed=seed)
