"""Canonical shape contracts for the six feature representations.

All clips cover 0.2 s. Visual clips are 5 frames at 25 fps with per-frame
layout [C, H, W]; audio clips are a single [rows, width] block whose row
count is the representation's time resolution over 0.2 s (16 mel hops,
10 HuBERT steps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SpecMismatchError, WindowError

FPS = 25
FRAMES_PER_CLIP = 5
PARSING_CLASSES = 19


@dataclass(frozen=True)
class RepresentationSpec:
    name: str
    modality: str  # "visual" | "audio"
    clip_dims: tuple
    frames_per_clip: int
    description: str

    @property
    def is_visual(self):
        return self.modality == "visual"

    @property
    def steps_per_clip(self):
        """Temporal resolution of one clip (frames for visual, rows for audio)."""
        if self.is_visual:
            return self.frames_per_clip
        return self.clip_dims[2]

    @property
    def frame_dims(self):
        """Per-timestep feature dims as stored in a track tensor."""
        if self.is_visual:
            return tuple(self.clip_dims[1:])
        return (self.clip_dims[3],)

    def track_dims(self, length_frames):
        """Expected on-disk tensor dims for a track of `length_frames` frames."""
        rows = self.rows_for_frames(length_frames)
        return (rows,) + self.frame_dims

    def rows_for_frames(self, length_frames):
        rows = length_frames * self.steps_per_clip
        if rows % self.frames_per_clip != 0:
            raise ShapeError(f"{self.name}: {length_frames} frames not representable")
        return rows // self.frames_per_clip

    def frames_for_rows(self, rows):
        """Inverse of rows_for_frames; returns None when rows is not on-grid."""
        frames = rows * self.frames_per_clip
        if frames % self.steps_per_clip != 0:
            return None
        return frames // self.steps_per_clip

    def clip_row_start(self, start_frame):
        """First track row of the clip starting at a 25 fps frame index."""
        return (start_frame * self.steps_per_clip) // self.frames_per_clip


_SPEC_TABLE = [
    ("rgb", "visual", (5, 3, 96, 96), "cropped face RGB frames"),
    ("parsing", "visual", (5, 1, 96, 96), "face parsing class indices 0-18"),
    ("landmarks", "visual", (5, 2, 68, 1), "68 facial landmark xy coordinates"),
    ("3dmm", "visual", (5, 1, 64, 1), "3D morphable model expression coefficients"),
    ("mel", "audio", (1, 1, 16, 80), "mel spectrogram, 16 hops x 80 bins per 0.2 s"),
    ("hubert", "audio", (1, 1, 10, 768), "self-supervised speech features, 10 steps x 768 dims"),
]

_SPECS = {
    name: RepresentationSpec(name, modality, dims, FRAMES_PER_CLIP, desc)
    for name, modality, dims, desc in _SPEC_TABLE
}


def builtin_specs():
    """The six canonical representation specs, visual families first."""
    return list(_SPECS.values())


def get_spec(name):
    try:
        return _SPECS[name]
    except KeyError:
        raise SpecMismatchError(f"unknown representation {name!r}; "
                                f"choose from {sorted(_SPECS)}") from None


@dataclass
class FeatureClip:
    """One 0.2 s window of features in a single representation."""
    spec: RepresentationSpec
    data: np.ndarray
    source_track: str
    start_frame: int

    def __post_init__(self):
        if tuple(self.data.shape) != tuple(self.spec.clip_dims):
            raise ShapeError(f"clip dims {self.data.shape} != spec {self.spec.name} "
                             f"dims {self.spec.clip_dims}")
        if self.start_frame < 0:
            raise WindowError(f"start_frame must be >= 0, got {self.start_frame}")


def clip_window_valid(spec, length_frames, start_frame):
    return 0 <= start_frame <= length_frames - spec.frames_per_clip


def cut_clip(track_data, spec, track_id, start_frame, length_frames):
    """Cut one clip out of a track tensor laid out per `spec.track_dims`."""
    if not clip_window_valid(spec, length_frames, start_frame):
        raise WindowError(f"window at frame {start_frame} out of range for "
                          f"{length_frames}-frame track {track_id!r}")
    r0 = spec.clip_row_start(start_frame)
    rows = spec.steps_per_clip
    data = track_data[r0:r0 + rows].reshape(spec.clip_dims)
    return FeatureClip(spec=spec, data=data, source_track=track_id,
                       start_frame=int(start_frame))


def model_input_dims(spec):
    """[C, H, W] of the 2-D image a clip becomes at the encoder input.

    Visual clips are channel-stacked across frames; parsing maps are one-hot
    expanded first. Audio clips are single-channel [rows, width] images.
    """
    f, c, h, w = spec.clip_dims[0], spec.clip_dims[1], spec.clip_dims[2], spec.clip_dims[3]
    if not spec.is_visual:
        return (1, h, w)
    if spec.name == "parsing":
        return (f * PARSING_CLASSES, h, w)
    return (f * c, h, w)


def clip_to_model_input(clip):
    """Convert a FeatureClip to the [C, H, W] float32 encoder input."""
    spec = clip.spec
    if not spec.is_visual:
        return clip.data.reshape(model_input_dims(spec)).astype(np.float32, copy=False)
    if spec.name == "parsing":
        idx = np.clip(np.rint(clip.data[:, 0]), 0, PARSING_CLASSES - 1).astype(np.int64)
        onehot = np.eye(PARSING_CLASSES, dtype=np.float32)[idx]  # [F, H, W, K]
        onehot = onehot.transpose(0, 3, 1, 2)  # [F, K, H, W]
        return onehot.reshape(model_input_dims(spec))
    f, c, h, w = spec.clip_dims
    return clip.data.reshape(f * c, h, w).astype(np.float32, copy=False)


def stack_model_inputs(clips):
    """Batch a list of same-spec clips into one [N, C, H, W] array."""
    if not clips:
        raise ShapeError("cannot stack an empty clip list")
    spec = clips[0].spec
    for c in clips[1:]:
        if c.spec.name != spec.name:
            raise SpecMismatchError("all clips in a batch must share one spec")
    return np.stack([clip_to_model_input(c) for c in clips], axis=0)
