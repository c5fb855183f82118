"""
Value types shared by every part of the simulator: layers, images, image sets,
pods, node configuration and the per-byte cost model.
"""
import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

from .exceptions import EmptyImageSet

SimTime = float

KB = 1_000
MB = 1_000_000
GB = 1_000_000_000

COMPRESSION_FACTOR = 0.504

# "2 GB" and "20 MB" layers as produced by the layer generator carry a 2%
# formatting overhead on top of their nominal size.
BASE_LAYER_BYTES = 80 * MB
VARIABLE_GB_LAYER_BYTES = 2_040 * MB
VARIABLE_MB_LAYER_BYTES = 20_400 * KB


class ImageSetKind(str, enum.Enum):
    VARIABLE_GB = 'VariableGB'
    VARIABLE_MB = 'VariableMB'


class PullPolicy(str, enum.Enum):
    IF_NOT_PRESENT = 'IfNotPresent'
    ALWAYS = 'Always'


class SlotRelease(str, enum.Enum):
    ON_DOWNLOAD_DONE = 'on_download_done'
    ON_UNPACK_DONE = 'on_unpack_done'


def synthetic_digest(*parts) -> int:
    """Stable 63-bit layer identifier derived from a textual key."""
    key = ':'.join(str(p) for p in parts)
    return int(hashlib.sha256(key.encode()).hexdigest()[:16], 16) >> 1


def compressed_size(uncompressed_bytes: int, factor: float = COMPRESSION_FACTOR) -> int:
    return max(1, round(uncompressed_bytes * factor))


@dataclass(frozen=True)
class LayerSpec:
    digest: int
    compressed_bytes: int
    uncompressed_bytes: int

    def __post_init__(self):
        if self.compressed_bytes <= 0:
            raise ValueError(f"layer {self.digest}: compressed_bytes must be > 0")
        if self.uncompressed_bytes <= 0:
            raise ValueError(f"layer {self.digest}: uncompressed_bytes must be > 0")

    @classmethod
    def generated(cls, digest: int, uncompressed_bytes: int,
                  factor: float = COMPRESSION_FACTOR) -> 'LayerSpec':
        return cls(digest, compressed_size(uncompressed_bytes, factor), uncompressed_bytes)


@dataclass(frozen=True)
class ImageSpec:
    name: str
    layers: Tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError(f"image {self.name} has no layers")
        object.__setattr__(self, 'layers', tuple(self.layers))

    @property
    def total_compressed(self) -> int:
        return sum(layer.compressed_bytes for layer in self.layers)

    @property
    def total_uncompressed(self) -> int:
        return sum(layer.uncompressed_bytes for layer in self.layers)

    @property
    def digests(self) -> Tuple[int, ...]:
        return tuple(layer.digest for layer in self.layers)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ImageSet:
    images: Tuple[ImageSpec, ...]
    shared_base: Optional[LayerSpec] = None

    def __post_init__(self):
        object.__setattr__(self, 'images', tuple(self.images))
        if self.shared_base is not None:
            for image in self.images:
                if image.layers[0] != self.shared_base:
                    raise ValueError(f"image {image.name} does not start with the shared base layer")
        seen: Dict[int, LayerSpec] = {}
        names = set()
        for image in self.images:
            if image.name in names:
                raise ValueError(f"duplicate image name {image.name}")
            names.add(image.name)
            for layer in image.layers:
                known = seen.setdefault(layer.digest, layer)
                if known != layer:
                    raise ValueError(f"digest {layer.digest} appears with two different sizes")

    @classmethod
    def from_specs(cls, images: Iterable[ImageSpec]) -> 'ImageSet':
        images = tuple(images)
        if not images:
            raise EmptyImageSet("an image set needs at least one image")
        first = images[0].layers[0]
        shared = first if all(img.layers[0] == first for img in images) and len(images) > 1 else None
        return cls(images, shared)

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    @property
    def names(self) -> List[str]:
        return [image.name for image in self.images]

    def by_name(self, name: str) -> ImageSpec:
        for image in self.images:
            if image.name == name:
                return image
        raise KeyError(name)

    def unique_layers(self) -> List[LayerSpec]:
        layers: Dict[int, LayerSpec] = {}
        for image in self.images:
            for layer in image.layers:
                layers.setdefault(layer.digest, layer)
        return list(layers.values())

    def dedup_compressed(self) -> int:
        return sum(layer.compressed_bytes for layer in self.unique_layers())

    def dedup_uncompressed(self) -> int:
        return sum(layer.uncompressed_bytes for layer in self.unique_layers())

    def naive_compressed(self) -> int:
        return sum(image.total_compressed for image in self.images)

    def layer_count(self) -> int:
        return len(self.unique_layers())

    def sorted_by_size(self) -> List[ImageSpec]:
        return sorted(self.images, key=lambda image: (image.total_uncompressed, image.name))

    @property
    def smallest(self) -> ImageSpec:
        return self.sorted_by_size()[0]

    @property
    def largest(self) -> ImageSpec:
        return self.sorted_by_size()[-1]


def generate_image_set(kind, seed: int = 0) -> ImageSet:
    """
    Build one of the two synthetic attack sets.

    VariableGB has 7 images holding k = 1..7 extra 2 GB layers; VariableMB has 40
    images holding k = 1..40 extra 20 MB layers. Every image starts with the same
    80 MB base layer. Digests depend on (kind, seed) only.
    """
    kind = ImageSetKind(kind)
    if kind is ImageSetKind.VARIABLE_GB:
        count, layer_bytes, repo = 7, VARIABLE_GB_LAYER_BYTES, 'variable-gb'
    else:
        count, layer_bytes, repo = 40, VARIABLE_MB_LAYER_BYTES, 'variable-mb'

    base = LayerSpec.generated(synthetic_digest(kind.value, seed, 'base'), BASE_LAYER_BYTES)
    images = []
    for k in range(1, count + 1):
        extra = [
            LayerSpec.generated(synthetic_digest(kind.value, seed, k, i), layer_bytes)
            for i in range(k)
        ]
        images.append(ImageSpec(f"registry.local/{repo}:{k}", (base, *extra)))
    return ImageSet(tuple(images), base)


def generate_cutoff_images(start_bytes: int = 83 * MB, step_bytes: int = 5 * MB,
                           count: int = 60, seed: int = 0) -> List[ImageSpec]:
    """
    Images for the small-image cancellation sweep. Sizes are compressed sizes:
    image i is a start_bytes layer plus i layers of step_bytes.
    """
    images = []
    for i in range(count):
        base = LayerSpec(synthetic_digest('cutoff', seed, i, 'base'), start_bytes,
                         round(start_bytes / COMPRESSION_FACTOR))
        extra = [
            LayerSpec(synthetic_digest('cutoff', seed, i, j), step_bytes,
                      round(step_bytes / COMPRESSION_FACTOR))
            for j in range(i)
        ]
        images.append(ImageSpec(f"registry.local/cutoff:{start_bytes + i * step_bytes}", (base, *extra)))
    return images


def to_manifest(image_set: ImageSet) -> str:
    """Line-oriented manifest: an ``image`` header per image, then one layer per line."""
    lines = []
    for image in image_set.images:
        lines.append(f"image {image.name}")
        for layer in image.layers:
            lines.append(f"  {layer.digest:016x} {layer.compressed_bytes} {layer.uncompressed_bytes}")
    return '\n'.join(lines) + '\n'


def parse_manifest(text: str) -> ImageSet:
    images = []
    name, layers = None, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if line.startswith('image '):
            if name is not None:
                images.append(ImageSpec(name, tuple(layers)))
            name, layers = line[len('image '):].strip(), []
            continue
        if name is None:
            raise ValueError(f"manifest line {lineno}: layer outside of an image block")
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"manifest line {lineno}: expected 'digest compressed uncompressed'")
        layers.append(LayerSpec(int(parts[0], 16), int(parts[1]), int(parts[2])))
    if name is not None:
        images.append(ImageSpec(name, tuple(layers)))
    return ImageSet.from_specs(images)


@dataclass(frozen=True)
class NodeConfig:
    cpu_cores: float = 2.0
    disk_capacity_bytes: int = 120 * GB
    disk_write_bw: float = 150 * MB
    net_bw: float = 125 * MB
    max_parallel_image_pulls: int = 1
    max_sockets_per_image: int = 4
    gc_high_pct: float = 0.85
    gc_low_pct: float = 0.80
    image_ttl: float = 120.0
    eviction_hard_pct: float = 0.90
    baseline_disk_used_bytes: int = 10 * GB
    manifest_fetch_delay: float = 0.2
    slot_release: SlotRelease = SlotRelease.ON_UNPACK_DONE
    gc_scan_interval: float = 60.0
    eviction_scan_interval: float = 10.0
    # kube-reserved + system-reserved; pods are weighted by what is left
    reserved_cpu: float = 0.3

    def __post_init__(self):
        if not 0 < self.gc_low_pct < self.gc_high_pct < self.eviction_hard_pct <= 1:
            raise ValueError("thresholds must satisfy 0 < gc_low < gc_high < eviction_hard <= 1")
        if not 0 <= self.reserved_cpu < self.cpu_cores:
            raise ValueError("reserved_cpu must be in [0, cpu_cores)")
        if self.max_parallel_image_pulls < 1:
            raise ValueError("max_parallel_image_pulls must be >= 1")
        if self.max_sockets_per_image < 1:
            raise ValueError("max_sockets_per_image must be >= 1")
        if self.cpu_cores <= 0 or self.net_bw <= 0 or self.disk_write_bw <= 0:
            raise ValueError("cpu_cores, net_bw and disk_write_bw must be positive")
        if self.baseline_disk_used_bytes > self.disk_capacity_bytes:
            raise ValueError("baseline disk usage exceeds disk capacity")
        object.__setattr__(self, 'slot_release', SlotRelease(self.slot_release))

    @property
    def allocatable_cpu(self) -> float:
        return self.cpu_cores - self.reserved_cpu

    @classmethod
    def local_testbed(cls, **overrides) -> 'NodeConfig':
        """2 vCPU / 120 GB HDD / 1 Gbit/s worker of the on-premises cluster."""
        return cls(**overrides)

    @classmethod
    def gke(cls, **overrides) -> 'NodeConfig':
        """
        e2-standard-2 worker: 2 vCPU, 60 GB balanced persistent disk sustaining
        about 120 MB/s of writes, 10 Gbit/s, parallel pulls.
        """
        values = dict(disk_capacity_bytes=60 * GB, disk_write_bw=120 * MB, net_bw=1_250 * MB,
                      max_parallel_image_pulls=4, baseline_disk_used_bytes=8 * GB)
        values.update(overrides)
        return cls(**values)

    def with_overrides(self, **overrides) -> 'NodeConfig':
        return replace(self, **overrides)


@dataclass(frozen=True)
class CostModel:
    """
    Per-byte resource costs of a pull. Disk costs are bytes written (or read)
    per byte moved; ``layer_commit_time`` is seconds of whole-disk time the
    snapshot commit of one layer takes and burns no CPU.
    """
    download_cpu_per_byte: float = 0.0
    unpack_cpu_per_byte: float = 0.0
    unpack_disk_per_byte: float = 1.0
    download_disk_per_byte: float = 0.0
    registry_per_socket_cap: float = 125 * MB
    unpack_max_cores: float = 1.0
    layer_commit_time: float = 0.0

    def __post_init__(self):
        for name in ('download_cpu_per_byte', 'unpack_cpu_per_byte', 'unpack_disk_per_byte',
                     'download_disk_per_byte', 'layer_commit_time'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.registry_per_socket_cap <= 0:
            raise ValueError("registry_per_socket_cap must be > 0")
        if self.unpack_max_cores <= 0:
            raise ValueError("unpack_max_cores must be > 0")

    def with_overrides(self, **overrides) -> 'CostModel':
        return replace(self, **overrides)


@dataclass(frozen=True)
class PodSpec:
    pod_id: str
    image: ImageSpec
    pull_policy: PullPolicy = PullPolicy.IF_NOT_PRESENT
    node_selector: str = 'node-1'
    labels: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'pull_policy', PullPolicy(self.pull_policy))
