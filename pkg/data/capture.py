"""Three-camera capture, mirror augmentation and deterministic splits."""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from models.models import CameraConfig, CameraPose, CaptureConfig, DomainSpec, SampleLabel
from scene.renderer import render
from scene.world import TrailWorld, build_world, camera_height_at, trail_frame
from utils.rng import derive_seed, stream

logger = logging.getLogger(__name__)

# rig offsets in the rightward-positive convention, left/center/right camera order
RIG = ((-1, SampleLabel.TR), (0, SampleLabel.GS), (1, SampleLabel.TL))


class JitterBounds(NamedTuple):
    lateral_frac: float = 0.3  # fraction of the local half width
    yaw_deg: float = 5.0


class PoseMeta(NamedTuple):
    s: float
    lateral: float
    yaw_jitter: float


@dataclass(frozen=True, eq=False)
class LabeledSample:
    pixels: np.ndarray  # (h, w, 3) uint8, value = round(p * 255)
    label: SampleLabel
    domain_id: int
    pose_meta: PoseMeta

    @property
    def image(self) -> np.ndarray:
        return self.pixels.astype(np.float64) / 255.0

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (
            self.label == other.label
            and self.domain_id == other.domain_id
            and self.pose_meta == other.pose_meta
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


def quantize(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-wise labeled samples; every image shares the header dimensions."""

    pixels: np.ndarray  # (n, h, w, 3) uint8
    labels: np.ndarray  # (n,) uint8
    domain_ids: np.ndarray  # (n,) uint16
    pose_meta: np.ndarray  # (n, 3) float32: s, lateral, yaw_jitter

    def __post_init__(self):
        n = len(self.pixels)
        if not (len(self.labels) == len(self.domain_ids) == len(self.pose_meta) == n):
            raise ValueError("dataset columns must have equal length")
        if self.pixels.ndim != 4 or self.pixels.shape[-1] != 3:
            raise ValueError(f"pixels must be (n, h, w, 3), got {self.pixels.shape}")

    @classmethod
    def empty(cls, width: int, height: int) -> "Dataset":
        return cls(
            pixels=np.zeros((0, height, width, 3), dtype=np.uint8),
            labels=np.zeros(0, dtype=np.uint8),
            domain_ids=np.zeros(0, dtype=np.uint16),
            pose_meta=np.zeros((0, 3), dtype=np.float32),
        )

    @classmethod
    def from_samples(cls, samples: list[LabeledSample], width: int, height: int) -> "Dataset":
        if not samples:
            return cls.empty(width, height)
        return cls(
            pixels=np.stack([s.pixels for s in samples]).astype(np.uint8),
            labels=np.array([int(s.label) for s in samples], dtype=np.uint8),
            domain_ids=np.array([s.domain_id for s in samples], dtype=np.uint16),
            pose_meta=np.array([tuple(s.pose_meta) for s in samples], dtype=np.float32).reshape(-1, 3),
        )

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[3]

    def __len__(self) -> int:
        return len(self.pixels)

    def __getitem__(self, i: int) -> LabeledSample:
        s, lateral, yaw = (float(v) for v in self.pose_meta[i])
        return LabeledSample(
            pixels=self.pixels[i],
            label=SampleLabel(int(self.labels[i])),
            domain_id=int(self.domain_ids[i]),
            pose_meta=PoseMeta(s, lateral, yaw),
        )

    @property
    def samples(self) -> list[LabeledSample]:
        return [self[i] for i in range(len(self))]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            pixels=self.pixels[indices],
            labels=self.labels[indices],
            domain_ids=self.domain_ids[indices],
            pose_meta=self.pose_meta[indices],
        )

    def class_counts(self) -> tuple[int, int, int]:
        counts = np.bincount(self.labels, minlength=3)
        return int(counts[0]), int(counts[1]), int(counts[2])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.domain_ids, other.domain_ids)
            and np.array_equal(self.pose_meta, other.pose_meta)
        )

    __hash__ = None


def capture_triplet(
    world: TrailWorld,
    s: float,
    jitter: JitterBounds,
    seed: int,
    image_size: int = 32,
    camera: CameraConfig | None = None,
) -> list[LabeledSample]:
    """Render the left/center/right rig at arc length ``s``; labels come back as (TR, GS, TL)."""
    camera = camera or CameraConfig()
    if not 0.0 <= jitter.lateral_frac < 1.0:
        raise ValueError(f"lateral jitter must keep the pose on the trail, got {jitter.lateral_frac}")
    frame = trail_frame(world, s)

    rng = stream(seed, "jitter")
    lateral = float(rng.uniform(-jitter.lateral_frac, jitter.lateral_frac)) * frame.half_width
    yaw_jitter = math.radians(float(rng.uniform(-jitter.yaw_deg, jitter.yaw_deg)))

    x = frame.point[0] - lateral * math.sin(frame.heading)
    y = frame.point[1] + lateral * math.cos(frame.heading)
    height = camera_height_at(world, s)
    meta = PoseMeta(*(float(np.float32(v)) for v in (s, lateral, yaw_jitter)))

    samples = []
    for direction, label in RIG:
        # rightward-positive offset: a right-looking camera has a smaller world yaw
        yaw = frame.heading + yaw_jitter - direction * math.radians(camera.rig_offset_deg)
        pose = CameraPose(x=x, y=y, yaw=yaw, height=height, pitch=math.radians(camera.pitch_deg))
        image = render(world, pose, image_size, image_size, camera)
        samples.append(
            LabeledSample(
                pixels=quantize(image), label=label, domain_id=world.spec.domain_id, pose_meta=meta
            )
        )
    return samples


def mirror_sample(sample: LabeledSample) -> LabeledSample:
    """Horizontal flip with the TL/TR label swap."""
    return LabeledSample(
        pixels=sample.pixels[:, ::-1, :].copy(),
        label=SampleLabel(sample.label).mirrored(),
        domain_id=sample.domain_id,
        pose_meta=sample.pose_meta,
    )


_MIRRORED_LABEL = np.array([SampleLabel(c).mirrored() for c in range(3)], dtype=np.uint8)


def augment(ds: Dataset) -> Dataset:
    """Originals followed by their mirrors, in the same order."""
    return Dataset(
        pixels=np.concatenate([ds.pixels, ds.pixels[:, :, ::-1, :]]),
        labels=np.concatenate([ds.labels, _MIRRORED_LABEL[ds.labels]]),
        domain_ids=np.concatenate([ds.domain_ids, ds.domain_ids]),
        pose_meta=np.concatenate([ds.pose_meta, ds.pose_meta]),
    )


def split(ds: Dataset, val_count: int, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle into disjoint (train, val)."""
    n = len(ds)
    if not 0 < val_count < n:
        raise ValueError(f"val_count must lie in (0, {n}), got {val_count}")
    order = stream(seed, "split").permutation(n)
    return ds.subset(np.sort(order[val_count:])), ds.subset(np.sort(order[:val_count]))


def concat(datasets: list[Dataset]) -> Dataset:
    if not datasets:
        raise ValueError("nothing to concatenate")
    shapes = {d.pixels.shape[1:] for d in datasets}
    if len(shapes) != 1:
        raise ValueError(f"datasets disagree on image shape: {sorted(shapes)}")
    return Dataset(
        pixels=np.concatenate([d.pixels for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        domain_ids=np.concatenate([d.domain_ids for d in datasets]),
        pose_meta=np.concatenate([d.pose_meta for d in datasets]),
    )


def generate_dataset(spec: DomainSpec, n: int, seed: int, capture: CaptureConfig) -> Dataset:
    """``n`` samples of one domain, triplets spread over several seeded worlds."""
    size = capture.image_size
    jitter = JitterBounds(capture.jitter_lateral_frac, capture.jitter_yaw_deg)
    triplets = math.ceil(n / 3)
    samples: list[LabeledSample] = []

    world_index = 0
    while len(samples) < 3 * triplets:
        world_seed = derive_seed(seed, "world", spec.domain_id, world_index)
        world = build_world(world_seed, spec, capture.world_length_m)
        positions = stream(world_seed, "positions").uniform(
            0.0, capture.world_length_m, capture.triplets_per_world
        )
        for k, s in enumerate(positions):
            if len(samples) >= 3 * triplets:
                break
            triplet_seed = derive_seed(world_seed, "triplet", k)
            samples.extend(capture_triplet(world, float(s), jitter, triplet_seed, size, capture.camera))
        world_index += 1

    logger.info(f"Captured {n} samples for domain {spec.domain_id} from {world_index} worlds")
    return Dataset.from_samples(samples[:n], size, size)


def validate_domains(ds: Dataset, registered_ids: set[int]) -> None:
    """Every sample's domain id must be registered."""
    unknown = sorted(set(np.unique(ds.domain_ids).tolist()) - set(registered_ids))
    if unknown:
        raise ValueError(f"dataset contains unregistered domain ids: {unknown}")
