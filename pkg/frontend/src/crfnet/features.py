"""Per-frame deep features for CRF prediction.

A scene's center frames run through pretrained backbones; each frame's
last-layer feature maps are pooled by global average plus standard
deviation and concatenated per frame.  Backbones that disagree on
sequence length (the temporal backbone emits one vector per two
frames) are aligned to the shortest sequence before concatenation
along the feature axis.

A seeded synthetic mode produces correctly shaped features, so the
full training and inference path is testable on machines without
pretrained weights or video decoding.
"""
from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

logger = logging.getLogger(__name__)

DEFAULT_T = 240


@dataclass(frozen=True)
class BackboneSpec:
    """Output contract of one feature extractor.

    feature_dim is the per-frame size after average + standard
    deviation pooling (twice the tapped layer's channel count);
    frame_stride is how many source frames produce one output step.
    """

    name: str
    feature_dim: int
    frame_stride: int

    def sequence_length(self, frames: int) -> int:
        if frames < 1:
            raise ValueError(f"frames must be >= 1, got {frames}")
        return max(1, frames // self.frame_stride)


BACKBONES: dict[str, BackboneSpec] = {
    "resnet50": BackboneSpec("resnet50", 4096, 1),
    "vgg16": BackboneSpec("vgg16", 1024, 1),
    "inceptionv3": BackboneSpec("inceptionv3", 1024, 1),
    "slowfast": BackboneSpec("slowfast", 512, 2),
}

DEFAULT_BACKBONES = ("resnet50", "slowfast")

FEATURES_FORMAT = "scene-features"
FEATURES_VERSION = 1


def _check_names(names: Sequence[str]) -> tuple[str, ...]:
    names = tuple(names)
    if not names:
        raise ValueError("at least one backbone is required")
    unknown = [n for n in names if n not in BACKBONES]
    if unknown:
        raise ValueError(
            f"unknown backbones {unknown}; known: {sorted(BACKBONES)}"
        )
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate backbones in {names}")
    return names


def combined_shape(names: Sequence[str], frames: int) -> tuple[int, int]:
    """(sequence length, feature dim) of the concatenated features."""
    names = _check_names(names)
    length = min(BACKBONES[n].sequence_length(frames) for n in names)
    dim = sum(BACKBONES[n].feature_dim for n in names)
    return length, dim


@dataclass(frozen=True)
class FeatureSequence:
    """Combined per-frame features for one scene."""

    scene_id: str
    data: torch.Tensor
    backbones: tuple[str, ...]
    t_frames: int

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(
                f"feature data must be 2-d (frames x dim), got {tuple(self.data.shape)}"
            )
        want = combined_shape(self.backbones, self.t_frames)
        if tuple(self.data.shape) != want:
            raise ValueError(
                f"feature shape {tuple(self.data.shape)} does not match "
                f"{want} for backbones {self.backbones} at {self.t_frames} frames"
            )

    @property
    def length(self) -> int:
        return int(self.data.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.data.shape[1])


def center_frame_range(total_frames: int, t_frames: int = DEFAULT_T) -> range:
    """Indices of the up-to-t frames taken from the middle of a scene."""
    if total_frames < 1:
        raise ValueError(f"total_frames must be >= 1, got {total_frames}")
    if t_frames < 1:
        raise ValueError(f"t_frames must be >= 1, got {t_frames}")
    used = min(total_frames, t_frames)
    start = (total_frames - used) // 2
    return range(start, start + used)


def downsample(data: torch.Tensor, target_length: int, mode: str = "stride") -> torch.Tensor:
    """Shorten a (frames x dim) sequence along the frame axis.

    "stride" keeps evenly spaced frames; "average" means each of the
    target cells over its span of source frames.
    """
    length = int(data.shape[0])
    if not 1 <= target_length <= length:
        raise ValueError(
            f"target length {target_length} outside [1, {length}]"
        )
    if target_length == length:
        return data
    bounds = [i * length // target_length for i in range(target_length + 1)]
    if mode == "stride":
        index = torch.tensor(bounds[:-1], dtype=torch.long)
        return data.index_select(0, index)
    if mode == "average":
        return torch.stack(
            [data[bounds[i] : bounds[i + 1]].mean(dim=0) for i in range(target_length)]
        )
    raise ValueError(f"unknown downsample mode {mode!r}")


def pool_feature_maps(maps: torch.Tensor) -> torch.Tensor:
    """Global average + standard deviation pooling, per frame.

    (frames x channels x h x w) -> (frames x 2*channels).  Population
    standard deviation, so 1x1 maps pool to zero spread instead of NaN.
    """
    if maps.ndim != 4:
        raise ValueError(
            f"feature maps must be 4-d (frames x c x h x w), got {tuple(maps.shape)}"
        )
    flat = maps.flatten(2)
    return torch.cat([flat.mean(dim=2), flat.std(dim=2, correction=0)], dim=1)


def combine_features(
    scene_id: str,
    parts: Mapping[str, torch.Tensor],
    *,
    t_frames: int,
    align_mode: str = "stride",
) -> FeatureSequence:
    """Concatenate per-backbone sequences after length alignment."""
    names = _check_names(list(parts))
    for name in names:
        spec = BACKBONES[name]
        part = parts[name]
        want = (spec.sequence_length(t_frames), spec.feature_dim)
        if tuple(part.shape) != want:
            raise ValueError(
                f"{name} features for {scene_id!r} have shape "
                f"{tuple(part.shape)}, expected {want}"
            )
    target = min(parts[name].shape[0] for name in names)
    aligned = [
        downsample(parts[name].to(torch.float32), target, align_mode)
        for name in names
    ]
    return FeatureSequence(
        scene_id=scene_id,
        data=torch.cat(aligned, dim=1),
        backbones=names,
        t_frames=t_frames,
    )


def synthetic_features(
    scene_id: str,
    backbones: Sequence[str] = DEFAULT_BACKBONES,
    *,
    t_frames: int = DEFAULT_T,
    seed: int = 0,
) -> FeatureSequence:
    """Seeded standard-normal features with the real shapes.

    The draw is keyed on (seed, scene id, backbone), so the same scene
    always gets the same features and scenes differ from each other.
    """
    names = _check_names(backbones)
    parts = {}
    for name in names:
        spec = BACKBONES[name]
        rng = np.random.default_rng(
            (seed, zlib.crc32(scene_id.encode()), zlib.crc32(name.encode()))
        )
        values = rng.standard_normal(
            (spec.sequence_length(t_frames), spec.feature_dim), dtype=np.float32
        )
        parts[name] = torch.from_numpy(values)
    return combine_features(scene_id, parts, t_frames=t_frames)


def extract_features(
    scene_id: str,
    frames: torch.Tensor,
    modules: Mapping[str, torch.nn.Module],
    *,
    t_frames: int = DEFAULT_T,
    align_mode: str = "stride",
) -> FeatureSequence:
    """Run backbone modules over a scene's center frames and pool.

    frames is (total x channels x h x w); each module maps its frame
    batch to last-layer maps (steps x c x h x w), where a strided
    backbone is expected to emit fewer steps on its own.
    """
    if frames.ndim != 4:
        raise ValueError(
            f"frames must be 4-d (n x c x h x w), got {tuple(frames.shape)}"
        )
    window = center_frame_range(int(frames.shape[0]), t_frames)
    used = frames[window.start : window.stop]
    n_used = len(window)
    parts = {}
    with torch.no_grad():
        for name in _check_names(list(modules)):
            spec = BACKBONES[name]
            maps = modules[name](used)
            pooled = pool_feature_maps(maps)
            want = (spec.sequence_length(n_used), spec.feature_dim)
            if tuple(pooled.shape) != want:
                raise ValueError(
                    f"{name} produced pooled shape {tuple(pooled.shape)}, "
                    f"expected {want} for {n_used} frames"
                )
            parts[name] = pooled
    return combine_features(scene_id, parts, t_frames=n_used, align_mode=align_mode)


def build_pretrained_modules(names: Sequence[str]) -> dict[str, torch.nn.Module]:
    """Construct ImageNet-pretrained extractors where torchvision has a
    layer whose pooled size matches the contract.

    The temporal backbone and inceptionv3 tap are not constructible
    from torchvision alone; supply those modules yourself or use
    synthetic_features.
    """
    modules: dict[str, torch.nn.Module] = {}
    for name in _check_names(names):
        if name == "resnet50":
            from torchvision.models import resnet50

            net = resnet50(weights="IMAGENET1K_V2")
            modules[name] = torch.nn.Sequential(*list(net.children())[:-2]).eval()
        elif name == "vgg16":
            from torchvision.models import vgg16

            modules[name] = vgg16(weights="IMAGENET1K_V1").features.eval()
        else:
            raise RuntimeError(
                f"no built-in pretrained module for {name!r}; pass your own "
                "module to extract_features or use synthetic_features"
            )
    return modules


# -- feature cache -------------------------------------------------------


def save_features(seq: FeatureSequence, path: Path | str) -> Path:
    """One cache file per (scene, backbone set): array plus JSON header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": FEATURES_FORMAT,
        "version": FEATURES_VERSION,
        "scene_id": seq.scene_id,
        "backbones": list(seq.backbones),
        "t_frames": seq.t_frames,
        "length": seq.length,
        "feature_dim": seq.feature_dim,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez_compressed(
            fh,
            features=seq.data.numpy(),
            header=np.array(json.dumps(header, sort_keys=True)),
        )
    os.replace(tmp, path)
    return path


def load_features(path: Path | str) -> FeatureSequence:
    with np.load(path, allow_pickle=False) as archive:
        header = json.loads(str(archive["header"]))
        data = archive["features"]
    if header.get("format") != FEATURES_FORMAT:
        raise ValueError(
            f"unrecognized feature file format {header.get('format')!r}"
        )
    if header.get("version") != FEATURES_VERSION:
        raise ValueError(
            f"unsupported feature file version {header.get('version')!r}"
        )
    if list(data.shape) != [header["length"], header["feature_dim"]]:
        raise ValueError(
            f"feature array shape {data.shape} disagrees with header "
            f"({header['length']} x {header['feature_dim']})"
        )
    return FeatureSequence(
        scene_id=str(header["scene_id"]),
        data=torch.from_numpy(data),
        backbones=tuple(header["backbones"]),
        t_frames=int(header["t_frames"]),
    )
