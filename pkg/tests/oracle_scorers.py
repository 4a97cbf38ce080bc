"""Test-only scorers with privileged access to the synthetic generator's
latents. They satisfy the same score_pairs duck type as a trained model and
let metric tests run without any training.
"""

import numpy as np

from avsync.synth import pair_latent_correlation

# clip pairs are "the same content" when their latent windows correlate
# this tightly; exact alignment gives 1.0 up to float rounding
EXACT_MATCH = 0.999999


class StrictLatentOracle:
    """p = 1 for exactly aligned content, 0 otherwise.

    Needs tracks that carry generator latents, so it only works on in-memory
    synthetic corpora (and tracks derived from them via shift_visual).
    """

    def __init__(self, track_index=None):
        self._tracks = dict(track_index or {})

    def register(self, track):
        self._tracks[track.track_id] = track

    def _resolve(self, clip):
        if clip.source_track in self._tracks:
            return self._tracks[clip.source_track]
        raise KeyError(f"oracle has no track {clip.source_track!r}")

    def score_pairs(self, audio_clips, visual_clips):
        out = np.empty(len(audio_clips))
        for i, (a, v) in enumerate(zip(audio_clips, visual_clips)):
            r = pair_latent_correlation(self._resolve(a), a.start_frame,
                                        self._resolve(v), v.start_frame)
            out[i] = 1.0 if r >= EXACT_MATCH else 0.0
        return out


class SoftLatentOracle(StrictLatentOracle):
    """p = clipped latent correlation; a graded reference scorer."""

    def score_pairs(self, audio_clips, visual_clips):
        out = np.empty(len(audio_clips))
        for i, (a, v) in enumerate(zip(audio_clips, visual_clips)):
            r = pair_latent_correlation(self._resolve(a), a.start_frame,
                                        self._resolve(v), v.start_frame)
            out[i] = min(max(r, 0.0), 1.0)
        return out


class ConstantScorer:
    def __init__(self, p):
        self.p = float(p)

    def score_pairs(self, audio_clips, visual_clips):
        return np.full(len(audio_clips), self.p)
