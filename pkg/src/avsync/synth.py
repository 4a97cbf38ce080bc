"""Synthetic correlated corpora for desk-scale training.

Each track is driven by one scalar articulation sequence per frame. Both
modalities embed that sequence through fixed speaker-specific random linear
maps (rank-1 patterns), plus independent noise, so aligned windows share
content while shifted or cross-speaker windows do not.

The articulation process is a standardized mix of a mean-reverting AR(1)
component and white jitter. The jitter keeps 5-frame windows distinguishable
at 1-frame shifts, which integer offset recovery depends on.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .registry import get_spec
from .trackio import Corpus, Track

AR_COEFF = 0.6
JITTER_MIX = 0.5


def _articulation(rng, frames):
    """Standardized AR(1)+jitter latent sequence, one value per frame."""
    smooth = np.empty(frames)
    noise = rng.standard_normal(frames)
    smooth[0] = noise[0]
    innov_scale = np.sqrt(1.0 - AR_COEFF ** 2)
    for t in range(1, frames):
        smooth[t] = AR_COEFF * smooth[t - 1] + innov_scale * noise[t]
    s = (1.0 - JITTER_MIX) * smooth + JITTER_MIX * rng.standard_normal(frames)
    return (s - s.mean()) / s.std()


def audio_hop_times(audio_spec, rows):
    """Frame-unit timestamps of each audio row (dyadic per builtin specs)."""
    step = audio_spec.frames_per_clip / audio_spec.steps_per_clip
    return np.arange(rows) * step


def _audio_latent(visual_latent, audio_spec, rows):
    times = audio_hop_times(audio_spec, rows)
    return np.interp(times, np.arange(len(visual_latent)), visual_latent)


def _visual_features(spec, latent, gain, noise_level, rng):
    frames = len(latent)
    shaped = gain[None, ...] * latent.reshape((frames,) + (1,) * gain.ndim)
    feats = shaped + noise_level * rng.standard_normal(shaped.shape)
    if spec.name == "parsing":
        feats = np.clip(np.rint(9.0 + 3.0 * feats), 0, 18)
    return feats.astype(np.float32)


def _audio_features(latent_rows, gain, noise_level, rng):
    feats = gain[None, :] * latent_rows[:, None]
    feats = feats + noise_level * rng.standard_normal(feats.shape)
    return feats.astype(np.float32)


def synth_corpus(n_speakers, tracks_per_speaker, frames_per_track,
                 visual_spec="rgb", audio_spec="mel",
                 noise_level=0.1, seed=0):
    """Generate a deterministic speaker-attributed corpus.

    The returned corpus carries per-track latents and a `synth_maps` dict of
    the speaker projection patterns, so tests can build latent oracles.
    Neither survives a save/load round trip.
    """
    if n_speakers < 2:
        raise ConfigError(f"need >= 2 speakers, got {n_speakers}")
    if tracks_per_speaker < 1:
        raise ConfigError("tracks_per_speaker must be >= 1")
    if frames_per_track < 25:
        raise ConfigError(f"frames_per_track must be >= 25, got {frames_per_track}")
    vspec = get_spec(visual_spec) if isinstance(visual_spec, str) else visual_spec
    aspec = get_spec(audio_spec) if isinstance(audio_spec, str) else audio_spec
    if not vspec.is_visual or aspec.is_visual:
        raise ConfigError("synth_corpus needs one visual and one audio spec")
    try:
        audio_rows = aspec.rows_for_frames(frames_per_track)
    except Exception:
        raise ConfigError(f"frames_per_track={frames_per_track} is not on the "
                          f"{aspec.name} hop grid (use a multiple of "
                          f"{aspec.frames_per_clip})") from None

    rng = np.random.default_rng(seed)
    maps = {}
    for i in range(n_speakers):
        sid = f"spk{i}"
        maps[sid] = {
            "visual_gain": rng.standard_normal(vspec.frame_dims),
            "audio_gain": rng.standard_normal(aspec.frame_dims),
        }

    tracks = []
    for i in range(n_speakers):
        sid = f"spk{i}"
        for j in range(tracks_per_speaker):
            latent = _articulation(rng, frames_per_track)
            lat_rows = _audio_latent(latent, aspec, audio_rows)
            visual = _visual_features(vspec, latent, maps[sid]["visual_gain"],
                                      noise_level, rng)
            audio = _audio_features(lat_rows, maps[sid]["audio_gain"],
                                    noise_level, rng)
            tracks.append(Track(
                track_id=f"{sid}_t{j}",
                speaker_id=sid,
                visual=visual,
                audio=audio,
                visual_spec=vspec,
                audio_spec=aspec,
                length_frames=frames_per_track,
                visual_latent=latent,
                audio_latent=lat_rows,
            ))

    corpus = Corpus(visual_spec=vspec, audio_spec=aspec, tracks=tracks).validate()
    corpus.synth_maps = maps
    return corpus


def pair_latent_correlation(audio_track, audio_start, visual_track, visual_start):
    """Pearson correlation between the latent content of an audio window and
    a visual window, evaluated on the audio window's hop grid.

    Requires both tracks to carry generator latents. Exactly 1.0 for an
    unshifted aligned pair of the same track.
    """
    aspec = audio_track.audio_spec
    steps = aspec.steps_per_clip
    r0 = aspec.clip_row_start(audio_start)
    a = audio_track.audio_latent[r0:r0 + steps]
    # times of those hops relative to the audio window start, in frames
    times = audio_hop_times(aspec, r0 + steps)[r0:] - float(audio_start)
    frames = np.arange(len(visual_track.visual_latent))
    v = np.interp(visual_start + times, frames, visual_track.visual_latent)
    a = a - a.mean()
    v = v - v.mean()
    na = np.linalg.norm(a)
    nv = np.linalg.norm(v)
    if na == 0.0 or nv == 0.0:
        return 0.0
    return float(a @ v / (na * nv))
