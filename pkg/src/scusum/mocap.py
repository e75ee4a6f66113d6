"""CMU-format AMC motion-capture ingestion.

AMC files are plain text: ``#``-prefixed comments and ``:``-prefixed
directives in the header, then alternating frame-index lines (a single
integer) and bone lines (``bonename v1 v2 ...``). The first frame fixes the
bone order and per-bone channel counts; every later frame must match it, and
frame indices must increase by exactly one. Concatenating the channel groups
in bone order yields one joint-angle vector per frame (90-100 dimensions for
the usual CMU skeleton, including root translation).

On top of parsing, ``build_scenario`` splices a pre-activity segment onto a
post-activity clip to create a change-point stream of transition pairs, with
optional per-dimension z-scoring computed from the pre-change segment
(degenerate dimensions keep a unit divisor).

Raw CMU clips are not redistributed with this package; download them from
mocap.cs.cmu.edu and point the CLI at the local files. The test suite ships
tiny hand-written fixtures instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import AmcParseError, AmcStructureError
from .fields import PairBatch

__all__ = [
    "AmcClip",
    "ScenarioSpec",
    "ScenarioResult",
    "parse_amc",
    "serialize_amc",
    "clip_to_vectors",
    "build_scenario",
]


@dataclass(frozen=True)
class AmcClip:
    """One parsed motion clip.

    ``values`` holds one row per frame, channels concatenated in bone order;
    ``channel_counts[i]`` channels belong to ``bone_order[i]``.
    """

    bone_order: tuple[str, ...]
    channel_counts: tuple[int, ...]
    values: np.ndarray
    frame_indices: tuple[int, ...]

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return int(sum(self.channel_counts))

    def frame_groups(self, i: int) -> list[tuple[str, np.ndarray]]:
        """Per-bone value groups of frame i, in bone order."""
        out, off = [], 0
        for name, count in zip(self.bone_order, self.channel_counts):
            out.append((name, self.values[i, off : off + count]))
            off += count
        return out


def _is_frame_index(tokens: list[str]) -> bool:
    if len(tokens) != 1:
        return False
    tok = tokens[0]
    return tok.isdigit() or (tok.startswith("-") and tok[1:].isdigit())


def parse_amc(source) -> AmcClip:
    """Parse AMC text (a string, an open file, or an iterable of lines)."""
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [line.rstrip("\n") for line in source]

    frames: list[tuple[int, list[tuple[str, list[float]]]]] = []
    current_bones: list[tuple[str, list[float]]] | None = None
    current_index = None

    def close_frame():
        if current_index is not None:
            frames.append((current_index, current_bones))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(":"):
            continue
        tokens = line.split()
        if _is_frame_index(tokens):
            close_frame()
            current_index = int(tokens[0])
            current_bones = []
            continue
        if current_index is None:
            raise AmcStructureError(f"line {lineno}: bone data before the first frame index")
        if len(tokens) < 2:
            raise AmcParseError(f"bone line for '{tokens[0]}' has no channel values", lineno)
        name = tokens[0]
        values = []
        for tok in tokens[1:]:
            try:
                values.append(float(tok))
            except ValueError:
                raise AmcParseError(
                    f"non-numeric channel value '{tok}' for bone '{name}'", lineno
                ) from None
        if not all(math.isfinite(v) for v in values):
            raise AmcParseError(f"non-finite channel value for bone '{name}'", lineno)
        current_bones.append((name, values))
    close_frame()

    if not frames:
        return AmcClip(bone_order=(), channel_counts=(), values=np.empty((0, 0)), frame_indices=())

    first_index, first_bones = frames[0]
    bone_order = tuple(name for name, _ in first_bones)
    if len(set(bone_order)) != len(bone_order):
        raise AmcStructureError("duplicate bone name in the first frame")
    channel_counts = tuple(len(vals) for _, vals in first_bones)

    indices = []
    rows = np.empty((len(frames), sum(channel_counts)))
    expected = first_index
    for row, (index, bones) in enumerate(frames):
        if index != expected:
            raise AmcStructureError(
                f"frame index {index} follows {expected - 1}; indices must increase by 1"
            )
        expected += 1
        names = tuple(name for name, _ in bones)
        counts = tuple(len(vals) for _, vals in bones)
        if names != bone_order or counts != channel_counts:
            raise AmcStructureError(
                f"frame {index} bone layout {names}/{counts} does not match the first frame"
            )
        rows[row] = np.concatenate([vals for _, vals in bones])
        indices.append(index)
    return AmcClip(
        bone_order=bone_order,
        channel_counts=channel_counts,
        values=rows,
        frame_indices=tuple(indices),
    )


def serialize_amc(clip: AmcClip) -> str:
    """Emit AMC text that reparses to an identical clip.

    Values are printed with ``repr`` so float round-tripping is exact.
    """
    lines = ["#!Exported joint-angle clip", ":FULLY-SPECIFIED", ":DEGREES"]
    for i, index in enumerate(clip.frame_indices):
        lines.append(str(index))
        for name, vals in clip.frame_groups(i):
            lines.append(name + " " + " ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def clip_to_vectors(clip: AmcClip, stride: int = 1) -> np.ndarray:
    """Per-frame joint-angle vectors, keeping every ``stride``-th frame."""
    if clip.n_frames < 1:
        raise ValueError("clip has no frames")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return clip.values[::stride].copy()


@dataclass(frozen=True)
class ScenarioSpec:
    """Splice a pre-activity segment onto a post-activity clip.

    The stream keeps the first ``splice_index`` (post-stride) frames of the
    pre clip and then the whole post clip, so the true change sits at stream
    position ``splice_index`` (0-based). ``post_clip=None`` builds a pure
    pre-change stream.
    """

    pre_clip: AmcClip
    post_clip: AmcClip | None
    splice_index: int
    stride: int = 1
    standardize: bool = True

    def __post_init__(self):
        if self.splice_index < 1:
            raise ValueError("splice_index must be a positive integer")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class ScenarioResult:
    pairs: PairBatch
    change_index: float  # position of the first post-change frame, inf if none
    states: np.ndarray
    state_mean: np.ndarray | None
    state_scale: np.ndarray | None


def build_scenario(spec: ScenarioSpec) -> ScenarioResult:
    """Assemble the change-point pair stream for one activity transition."""
    pre = clip_to_vectors(spec.pre_clip, spec.stride)
    if spec.splice_index > pre.shape[0]:
        raise ValueError(
            f"splice_index {spec.splice_index} exceeds pre segment length {pre.shape[0]}"
        )
    pre = pre[: spec.splice_index]

    if spec.post_clip is None or spec.post_clip.n_frames == 0:
        states = pre
        change_index = math.inf
    else:
        post = clip_to_vectors(spec.post_clip, spec.stride)
        if post.shape[1] != pre.shape[1]:
            raise ValueError(
                f"clip dimensions differ: pre {pre.shape[1]} vs post {post.shape[1]}"
            )
        states = np.concatenate([pre, post])
        change_index = float(spec.splice_index)

    mean = scale = None
    if spec.standardize:
        mean = pre.mean(axis=0)
        scale = pre.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)  # unit divisor for flat dims
        states = (states - mean) / scale

    if states.shape[0] < 2:
        raise ValueError("scenario needs at least 2 frames to form a transition pair")
    return ScenarioResult(
        pairs=PairBatch.from_states(states),
        change_index=change_index,
        states=states,
        state_mean=mean,
        state_scale=scale,
    )
