"""Track persistence: binary tensor files plus a JSON manifest per corpus.

Track file layout (all integers little-endian):
    magic "USYN" | u32 version | u32 ndim | u32 x ndim dims | f32 payload

The manifest is a JSON document naming the corpus specs and one entry per
track with its id, speaker, frame length and relative file paths.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagicError, BadVersionError, DuplicateTrackIdError,
                     MissingTrackFileError, PayloadLengthError, ShapeError,
                     TrackAlignmentError, TruncatedFileError)
from .registry import FeatureClip, cut_clip, get_spec

TRACK_MAGIC = b"USYN"
TRACK_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def write_tensor(path, array):
    """Write a float32 tensor in the track binary format (atomic)."""
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"refusing to write non-finite data to {path}")
    header = TRACK_MAGIC + struct.pack("<II", TRACK_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4").tobytes()
    _atomic_write(path, header + payload)


def read_tensor(path):
    """Read a tensor written by write_tensor, with strict format checks."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: file shorter than magic")
    if blob[:4] != TRACK_MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncatedFileError(f"{path}: header cut short")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != TRACK_VERSION:
        raise BadVersionError(f"{path}: unsupported track version {version}")
    dims_end = 12 + 4 * ndim
    if len(blob) < dims_end:
        raise TruncatedFileError(f"{path}: dims cut short")
    dims = struct.unpack_from(f"<{ndim}I", blob, 12)
    expected = int(np.prod(dims, dtype=np.int64)) * 4 if ndim else 4
    actual = len(blob) - dims_end
    if actual < expected:
        raise TruncatedFileError(f"{path}: payload has {actual} bytes, "
                                 f"header promises {expected}")
    if actual > expected:
        raise PayloadLengthError(f"{path}: {actual - expected} trailing bytes "
                                 f"beyond the {expected}-byte payload")
    data = np.frombuffer(blob, dtype="<f4", count=expected // 4, offset=dims_end)
    return data.reshape(dims).copy()


def _atomic_write(path, blob):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


@dataclass
class Track:
    """One speaker-attributed recording: aligned visual and audio tensors.

    The latent fields are populated only by the synthetic generator and are
    never persisted; they exist so tests can build latent-aware oracles.
    """
    track_id: str
    speaker_id: str
    visual: np.ndarray
    audio: np.ndarray
    visual_spec: object
    audio_spec: object
    length_frames: int
    visual_latent: np.ndarray | None = None
    audio_latent: np.ndarray | None = None

    def validate(self):
        vdims = self.visual_spec.track_dims(self.length_frames)
        if tuple(self.visual.shape) != vdims:
            raise TrackAlignmentError(
                f"track {self.track_id!r}: visual dims {self.visual.shape} != "
                f"expected {vdims} for {self.length_frames} frames")
        aframes = self.audio_spec.frames_for_rows(self.audio.shape[0])
        if (self.audio.shape[1:] != self.audio_spec.frame_dims
                or aframes != self.length_frames):
            raise TrackAlignmentError(
                f"track {self.track_id!r}: audio rows {self.audio.shape} cover "
                f"{aframes} frames, visual has {self.length_frames}")

    def visual_clip(self, start_frame) -> FeatureClip:
        return cut_clip(self.visual, self.visual_spec, self.track_id,
                        start_frame, self.length_frames)

    def audio_clip(self, start_frame) -> FeatureClip:
        return cut_clip(self.audio, self.audio_spec, self.track_id,
                        start_frame, self.length_frames)

    def max_start_frame(self):
        return self.length_frames - self.visual_spec.frames_per_clip


def shift_visual(track, offset):
    """New track whose visual content leads the audio by `offset` frames.

    Frame t of the result shows what frame t + offset showed before, with
    both modalities trimmed to the overlapping span. Audio trims always land
    on hop-grid frame boundaries, so the result stays exactly representable;
    latent bookkeeping follows the same slicing, keeping latent oracles
    honest on shifted tracks.
    """
    import math

    offset = int(offset)
    aspec = track.audio_spec
    fpc = aspec.frames_per_clip
    steps = aspec.steps_per_clip
    # audio start must sit on the hop grid; visual absorbs the remainder
    a0 = fpc * math.ceil(max(-offset, 0) / fpc)
    v0 = a0 + offset
    grid = fpc // math.gcd(steps, fpc)
    new_len = track.length_frames - max(v0, a0)
    new_len -= new_len % grid
    if new_len < track.visual_spec.frames_per_clip:
        raise ShapeError(f"offset {offset} leaves no room in track {track.track_id!r}")
    rows0 = (a0 * steps) // fpc
    rows_n = (new_len * steps) // fpc
    vis_lat = None
    aud_lat = None
    if track.visual_latent is not None:
        vis_lat = track.visual_latent[v0:v0 + new_len].copy()
    if track.audio_latent is not None:
        aud_lat = track.audio_latent[rows0:rows0 + rows_n].copy()
    return Track(
        track_id=f"{track.track_id}+vshift{offset}",
        speaker_id=track.speaker_id,
        visual=track.visual[v0:v0 + new_len].copy(),
        audio=track.audio[rows0:rows0 + rows_n].copy(),
        visual_spec=track.visual_spec,
        audio_spec=aspec,
        length_frames=new_len,
        visual_latent=vis_lat,
        audio_latent=aud_lat,
    )


def split_corpus(corpus, val_tracks_per_speaker=1):
    """Hold out the last track(s) of each speaker for validation.

    Synthetic speakers use speaker-specific projections, so validation must
    see the training speakers; held-out tracks still contain entirely unseen
    recordings. Every speaker needs more tracks than it gives up.
    """
    train_tracks, val_tracks = [], []
    by_speaker = {}
    for t in corpus.tracks:
        by_speaker.setdefault(t.speaker_id, []).append(t)
    for sid, tracks in by_speaker.items():
        if len(tracks) <= val_tracks_per_speaker:
            raise ShapeError(f"speaker {sid!r} has only {len(tracks)} track(s); "
                             f"cannot hold out {val_tracks_per_speaker}")
        train_tracks.extend(tracks[:-val_tracks_per_speaker])
        val_tracks.extend(tracks[-val_tracks_per_speaker:])
    return (Corpus(corpus.visual_spec, corpus.audio_spec, train_tracks),
            Corpus(corpus.visual_spec, corpus.audio_spec, val_tracks))


@dataclass
class Corpus:
    """Immutable-after-load collection of aligned tracks."""
    visual_spec: object
    audio_spec: object
    tracks: list = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {t.track_id: t for t in self.tracks}

    def track(self, track_id) -> Track:
        return self._by_id[track_id]

    @property
    def speaker_ids(self):
        return sorted({t.speaker_id for t in self.tracks})

    def tracks_of(self, speaker_id):
        return [t for t in self.tracks if t.speaker_id == speaker_id]

    def validate(self):
        seen = set()
        for t in self.tracks:
            if t.track_id in seen:
                raise DuplicateTrackIdError(f"duplicate track_id {t.track_id!r}")
            seen.add(t.track_id)
            t.validate()
        return self


def save_corpus(corpus, out_dir):
    """Write every track plus the manifest under `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for t in corpus.tracks:
        vfile = f"{t.track_id}.visual.usyn"
        afile = f"{t.track_id}.audio.usyn"
        write_tensor(os.path.join(out_dir, vfile), t.visual)
        write_tensor(os.path.join(out_dir, afile), t.audio)
        entries.append({
            "track_id": t.track_id,
            "speaker_id": t.speaker_id,
            "length_frames": int(t.length_frames),
            "visual_file": vfile,
            "audio_file": afile,
        })
    manifest = {
        "version": MANIFEST_VERSION,
        "visual_spec": corpus.visual_spec.name,
        "audio_spec": corpus.audio_spec.name,
        "tracks": entries,
    }
    blob = json.dumps(manifest, indent=2, sort_keys=True).encode() + b"\n"
    _atomic_write(os.path.join(out_dir, MANIFEST_NAME), blob)
    return os.path.join(out_dir, MANIFEST_NAME)


def load_manifest(path):
    """Load a corpus from a manifest path or a directory containing one."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingTrackFileError(f"manifest not found: {path}")
    with open(path, "rb") as fh:
        doc = json.loads(fh.read().decode())
    if doc.get("version") != MANIFEST_VERSION:
        raise BadVersionError(f"{path}: unsupported manifest version {doc.get('version')}")
    vspec = get_spec(doc["visual_spec"])
    aspec = get_spec(doc["audio_spec"])
    base = os.path.dirname(os.path.abspath(path))
    tracks = []
    seen = set()
    for entry in doc["tracks"]:
        tid = entry["track_id"]
        if tid in seen:
            raise DuplicateTrackIdError(f"{path}: duplicate track_id {tid!r}")
        seen.add(tid)
        vpath = os.path.join(base, entry["visual_file"])
        apath = os.path.join(base, entry["audio_file"])
        for p in (vpath, apath):
            if not os.path.exists(p):
                raise MissingTrackFileError(f"{path}: missing track file {p}")
        track = Track(
            track_id=tid,
            speaker_id=entry["speaker_id"],
            visual=read_tensor(vpath),
            audio=read_tensor(apath),
            visual_spec=vspec,
            audio_spec=aspec,
            length_frames=int(entry["length_frames"]),
        )
        track.validate()
        tracks.append(track)
    return Corpus(visual_spec=vspec, audio_spec=aspec, tracks=tracks)
