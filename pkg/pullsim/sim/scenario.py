"""
Scenario files: YAML blocks where every quantity carries its unit.

    scenario:
      name: delay_vargb_mp1
      trials: 5
      seed: 0
      sample_interval: 1 s
    node:
      profile: local_testbed
      max_parallel_image_pulls: 1
    costs:
      profile: calibrated
    images:
      set: VariableGB
    attack:
      strategy: ForceDeleteCycle
      shuffle: true

Scalars are read back as text before unit parsing, so ``2`` and ``"2"`` mean
the same thing and a bare number where a unit is required is still an error.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .attacker import AttackPlan, AttackStrategy
from .calibration import calibrated_costs
from .domain import (
    COMPRESSION_FACTOR, GB, KB, MB, CostModel, ImageSet, ImageSetKind, ImageSpec, LayerSpec, NodeConfig,
    PullPolicy, SlotRelease, generate_image_set, synthetic_digest,
)
from .exceptions import ConfigParseError, EmptyImageSet, ScenarioValidationError
from .magi import BlacklistScope, DEFAULT_REACT_LATENCY
from .metrics import TenantWorkload

logger = logging.getLogger('pullsim.runner')

UNITS = {
    'bytes': {'B': 1, 'KB': KB, 'MB': MB, 'GB': GB, 'TB': 1000 * GB},
    'rate': {'B/s': 1, 'KB/s': KB, 'MB/s': MB, 'GB/s': GB, 'Mbit/s': 125_000, 'Gbit/s': 125_000_000},
    'duration': {'ms': 0.001, 's': 1, 'min': 60, 'h': 3600},
    'percent': {'%': 0.01},
    'cores': {'core': 1, 'cores': 1},
    'core_seconds': {'core-s': 1},
    'cpu_per_byte': {'core-s/B': 1, 'core-s/KB': 1 / KB, 'core-s/MB': 1 / MB, 'core-s/GB': 1 / GB},
}

QUANTITY = re.compile(r'^([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*([A-Za-z%/\-]+)$')

VARIANTS = ('baseline', 'attack', 'mitigated')
PROFILES = ('local_testbed', 'gke')
GKE_SOCKET_CAP = 31.25 * MB

NODE_KEYS = {
    'cpu_cores': ('cpu_cores', 'cores'),
    'reserved_cpu': ('reserved_cpu', 'cores'),
    'disk_capacity': ('disk_capacity_bytes', 'bytes'),
    'disk_write_bw': ('disk_write_bw', 'rate'),
    'net_bw': ('net_bw', 'rate'),
    'max_parallel_image_pulls': ('max_parallel_image_pulls', 'count'),
    'max_sockets_per_image': ('max_sockets_per_image', 'count'),
    'gc_high': ('gc_high_pct', 'percent'),
    'gc_low': ('gc_low_pct', 'percent'),
    'image_ttl': ('image_ttl', 'duration'),
    'eviction_hard': ('eviction_hard_pct', 'percent'),
    'baseline_disk_used': ('baseline_disk_used_bytes', 'bytes'),
    'manifest_fetch_delay': ('manifest_fetch_delay', 'duration'),
    'slot_release': ('slot_release', 'text'),
    'gc_scan_interval': ('gc_scan_interval', 'duration'),
    'eviction_scan_interval': ('eviction_scan_interval', 'duration'),
}

COST_KEYS = {
    'download_cpu_per_byte': ('download_cpu_per_byte', 'cpu_per_byte'),
    'unpack_cpu_per_byte': ('unpack_cpu_per_byte', 'cpu_per_byte'),
    'unpack_disk_per_byte': ('unpack_disk_per_byte', 'number'),
    'registry_per_socket_cap': ('registry_per_socket_cap', 'rate'),
    'unpack_max_cores': ('unpack_max_cores', 'cores'),
    'download_disk_per_byte': ('download_disk_per_byte', 'number'),
    'layer_commit_time': ('layer_commit_time', 'duration'),
}


def parse_quantity(text: str, kind: str) -> float:
    """``"2.5 GB"`` -> 2.5e9. A missing or foreign unit is a parse error."""
    match = QUANTITY.match(text.strip())
    if not match:
        raise ConfigParseError(f"{text!r} is not a number followed by a unit")
    value, unit = match.groups()
    factors = UNITS[kind]
    if unit not in factors:
        raise ConfigParseError(f"{text!r}: unit {unit!r} is not one of {', '.join(factors)}")
    return float(value) * factors[unit]


def parse_count(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigParseError(f"{text!r} is not an integer") from None


def parse_number(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ConfigParseError(f"{text!r} is not a number") from None


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ConfigParseError(f"{text!r} is not a boolean")


def parse_value(text: str, kind: str):
    if kind == 'count':
        return parse_count(text)
    if kind == 'number':
        return parse_number(text)
    if kind == 'text':
        return text.strip()
    return parse_quantity(text, kind)


def parse_layers(text: str) -> List[int]:
    """Comma-separated sizes; ``N x SIZE`` repeats a size."""
    sizes = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        count = 1
        if ' x ' in item:
            head, item = item.split(' x ', 1)
            count = parse_count(head)
        sizes.extend([int(round(parse_quantity(item, 'bytes')))] * count)
    if not sizes:
        raise ConfigParseError("a layer list needs at least one size")
    return sizes


def build_image(name: str, sizes: List[int], base: Optional[LayerSpec] = None,
                factor: float = COMPRESSION_FACTOR) -> ImageSpec:
    layers = [LayerSpec.generated(synthetic_digest('image', name, i), size, factor)
              for i, size in enumerate(sizes)]
    return ImageSpec(name, tuple([base, *layers] if base else layers))


@dataclass(frozen=True)
class AttackSpec:
    strategy: AttackStrategy
    inter_step_wait: float = 2.0
    shuffle: bool = False
    start: float = 0.0
    patch_interval: float = 30.0
    target_nodes: Tuple[str, ...] = ()
    pull_policy: PullPolicy = PullPolicy.ALWAYS


@dataclass(frozen=True)
class MagiSpec:
    enabled: bool = False
    react_latency: float = DEFAULT_REACT_LATENCY
    blacklist_scope: BlacklistScope = BlacklistScope.ANY_QUEUED
    audit_delay: float = 0.0


@dataclass(frozen=True)
class LegitDeployment:
    name: str
    image: ImageSpec
    at: float
    node_id: str
    pull_policy: PullPolicy = PullPolicy.IF_NOT_PRESENT


@dataclass(frozen=True)
class WorkloadSpec:
    workload: TenantWorkload
    node_id: str
    at: float = 0.0


@dataclass(frozen=True)
class SweepSpec:
    start: int = 83 * MB
    step: int = 5 * MB
    count: int = 60
    throughputs: Tuple[float, ...] = (125 * MB,)
    react_latency: float = DEFAULT_REACT_LATENCY


@dataclass
class ScenarioConfig:
    name: str
    kind: str = 'attack'
    trials: int = 1
    seed: int = 0
    sample_interval: Optional[float] = 1.0
    horizon: Optional[float] = None
    node_count: int = 1
    node_profile: str = 'local_testbed'
    node_config: NodeConfig = field(default_factory=NodeConfig.local_testbed)
    cost_profile: str = 'explicit'
    cost_overrides: Dict[str, float] = field(default_factory=dict)
    image_set: Optional[ImageSet] = None
    attack: Optional[AttackSpec] = None
    magi: MagiSpec = field(default_factory=MagiSpec)
    workloads: List[WorkloadSpec] = field(default_factory=list)
    legit: List[LegitDeployment] = field(default_factory=list)
    variants: Tuple[str, ...] = ('attack',)
    sweep: Optional[SweepSpec] = None
    source: Optional[Path] = None

    @property
    def node_ids(self) -> List[str]:
        return [f"node-{i}" for i in range(1, self.node_count + 1)]

    def resolve_costs(self) -> CostModel:
        """Cost model for this scenario; ``calibrated`` runs (cached) calibration."""
        if self.cost_profile == 'calibrated':
            base = calibrated_costs()
        else:
            base = CostModel()
        overrides = dict(self.cost_overrides)
        if self.node_profile == 'gke':
            overrides.setdefault('registry_per_socket_cap', GKE_SOCKET_CAP)
        return base.with_overrides(**overrides)

    def attack_plan(self, shuffle_seed: Optional[int] = None) -> Optional[AttackPlan]:
        if self.attack is None:
            return None
        spec = self.attack
        return AttackPlan(spec.strategy, self.image_set, spec.inter_step_wait,
                          shuffle_seed if spec.shuffle else None,
                          spec.target_nodes or tuple(self.node_ids), spec.start,
                          spec.patch_interval, spec.pull_policy)


BLOCKS = ('scenario', 'node', 'costs', 'images', 'attack', 'magi', 'legit', 'workloads', 'sweep')


def _text(value: Any, where: str) -> str:
    """YAML scalar (or list of scalars) as the text the unit parsers expect."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if value is None:
        return 'none'
    if isinstance(value, (list, tuple)):
        return ', '.join(_text(item, where) for item in value)
    if isinstance(value, dict):
        raise ConfigParseError(f"{where}: expected a value, got a mapping")
    return str(value)


def _mapping(value: Any, where: str) -> Dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigParseError(f"{where}: expected a mapping")
    return {str(k): v for k, v in value.items()}


def _block_items(data: Any, where: str, allowed) -> Dict[str, str]:
    items = _mapping(data, where)
    unknown = sorted(set(items) - set(allowed))
    if unknown:
        raise ConfigParseError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return {key: _text(value, f"{where}.{key}") for key, value in items.items()}


def parse_scenario(text: str, source: Optional[Path] = None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"malformed scenario: {e}") from e
    if not isinstance(data, dict):
        raise ConfigParseError("a scenario is a YAML mapping of blocks")
    unknown = sorted(set(map(str, data)) - set(BLOCKS))
    if unknown:
        raise ConfigParseError(f"unknown block(s) {', '.join(unknown)}")
    if 'scenario' not in data:
        raise ConfigParseError("missing scenario block")

    head = _block_items(data['scenario'], 'scenario', ('name', 'kind', 'trials', 'seed', 'sample_interval',
                                                       'horizon', 'nodes', 'variants'))
    if 'name' not in head:
        raise ConfigParseError("scenario block needs a name")
    config = ScenarioConfig(name=head['name'].strip(), source=source)
    config.kind = head.get('kind', 'attack').strip()
    config.trials = parse_count(head.get('trials', '1'))
    config.seed = parse_count(head.get('seed', '0'))
    interval = head.get('sample_interval', '1 s').strip()
    config.sample_interval = None if interval == 'none' else parse_quantity(interval, 'duration')
    if 'horizon' in head:
        config.horizon = parse_quantity(head['horizon'], 'duration')
    config.node_count = parse_count(head.get('nodes', '1'))

    _parse_node(data, config)
    _parse_costs(data, config)
    _parse_images(data, config)
    _parse_attack(data, config)
    _parse_magi(data, config)
    _parse_legit(data, config)
    _parse_workloads(data, config)
    _parse_sweep(data, config)

    if 'variants' in head:
        config.variants = tuple(v.strip() for v in head['variants'].split(',') if v.strip())
    elif config.attack is None:
        config.variants = ('baseline',)
    elif config.magi.enabled:
        config.variants = ('mitigated',)
    else:
        config.variants = ('attack',)

    validate(config)
    return config


def _parse_node(data, config: ScenarioConfig):
    if 'node' not in data:
        return
    items = _block_items(data['node'], 'node', ('profile', *NODE_KEYS))
    profile = items.pop('profile', 'local_testbed').strip()
    if profile not in PROFILES:
        raise ScenarioValidationError(f"unknown node profile {profile!r}")
    overrides = {}
    for key, text in items.items():
        field_name, kind = NODE_KEYS[key]
        value = parse_value(text, kind)
        if kind == 'bytes':
            value = int(round(value))
        overrides[field_name] = value
    if 'slot_release' in overrides:
        try:
            overrides['slot_release'] = SlotRelease(overrides['slot_release'])
        except ValueError:
            raise ConfigParseError(f"unknown slot_release {overrides['slot_release']!r}") from None
    try:
        factory = NodeConfig.gke if profile == 'gke' else NodeConfig.local_testbed
        config.node_config = factory(**overrides)
    except ValueError as e:
        raise ScenarioValidationError(f"node: {e}") from e
    config.node_profile = profile


def _parse_costs(data, config: ScenarioConfig):
    if 'costs' not in data:
        return
    items = _block_items(data['costs'], 'costs', ('profile', *COST_KEYS))
    profile = items.pop('profile', 'explicit').strip()
    if profile not in ('calibrated', 'explicit'):
        raise ScenarioValidationError(f"unknown cost profile {profile!r}")
    config.cost_profile = profile
    for key, text in items.items():
        field_name, kind = COST_KEYS[key]
        config.cost_overrides[field_name] = parse_value(text, kind)
    try:
        CostModel().with_overrides(**config.cost_overrides)
    except ValueError as e:
        raise ScenarioValidationError(f"costs: {e}") from e


def _parse_images(data, config: ScenarioConfig):
    if 'images' not in data:
        return
    block = _mapping(data['images'], 'images')
    custom = block.pop('custom', None)
    items = _block_items(block, 'images', ('set', 'seed', 'base', 'compression'))
    kind = items.get('set', 'VariableGB').strip()
    seed = parse_count(items.get('seed', '0'))
    factor = parse_number(items['compression']) if 'compression' in items else COMPRESSION_FACTOR
    if kind in (ImageSetKind.VARIABLE_GB.value, ImageSetKind.VARIABLE_MB.value):
        if custom is not None:
            raise ScenarioValidationError(f"images.custom only applies to set: custom, not {kind}")
        config.image_set = generate_image_set(kind, seed)
        return
    if kind != 'custom':
        raise ScenarioValidationError(f"unknown image set {kind!r}")

    base = None
    if 'base' in items:
        base = LayerSpec.generated(synthetic_digest('base', config.name, seed),
                                   int(round(parse_quantity(items['base'], 'bytes'))), factor)
    if custom is not None and not isinstance(custom, list):
        raise ConfigParseError("images.custom: expected a list of images")
    images = []
    for i, entry in enumerate(custom or []):
        where = f"images.custom[{i}]"
        image_items = _block_items(entry, where, ('name', 'layers'))
        if 'name' not in image_items or 'layers' not in image_items:
            raise ConfigParseError(f"{where} needs a name and layers")
        images.append(build_image(image_items['name'].strip(), parse_layers(image_items['layers']), base, factor))
    try:
        config.image_set = ImageSet.from_specs(images)
    except EmptyImageSet:
        raise ScenarioValidationError("custom image set declares no images") from None
    except ValueError as e:
        raise ScenarioValidationError(str(e)) from e


def _parse_attack(data, config: ScenarioConfig):
    if 'attack' not in data:
        return
    items = _block_items(data['attack'], 'attack', ('strategy', 'inter_step_wait', 'shuffle', 'start',
                                                    'patch_interval', 'target_nodes', 'pull_policy'))
    try:
        strategy = AttackStrategy(items.get('strategy', 'ForceDeleteCycle').strip())
        pull_policy = PullPolicy(items.get('pull_policy', 'Always').strip())
    except ValueError as e:
        raise ConfigParseError(f"attack: {e}") from e
    targets = items.get('target_nodes', 'all').strip()
    config.attack = AttackSpec(
        strategy=strategy,
        inter_step_wait=parse_quantity(items.get('inter_step_wait', '2 s'), 'duration'),
        shuffle=parse_bool(items.get('shuffle', 'false')),
        start=parse_quantity(items.get('start', '0 s'), 'duration'),
        patch_interval=parse_quantity(items.get('patch_interval', '30 s'), 'duration'),
        target_nodes=() if targets == 'all' else tuple(t.strip() for t in targets.split(',') if t.strip()),
        pull_policy=pull_policy,
    )


def _parse_magi(data, config: ScenarioConfig):
    if 'magi' not in data:
        return
    items = _block_items(data['magi'], 'magi', ('enabled', 'react_latency', 'blacklist_scope', 'audit_delay'))
    try:
        scope = BlacklistScope(items.get('blacklist_scope', 'any_queued').strip())
    except ValueError as e:
        raise ConfigParseError(f"magi: {e}") from e
    config.magi = MagiSpec(
        enabled=parse_bool(items.get('enabled', 'true')),
        react_latency=parse_quantity(items.get('react_latency', '2 s'), 'duration'),
        blacklist_scope=scope,
        audit_delay=parse_quantity(items.get('audit_delay', '0 s'), 'duration'),
    )


def _parse_legit(data, config: ScenarioConfig):
    for name, entry in _mapping(data.get('legit'), 'legit').items():
        where = f"legit.{name}"
        items = _block_items(entry, where, ('image', 'layers', 'at', 'node', 'pull_policy', 'copies'))
        if 'layers' not in items:
            raise ConfigParseError(f"{where} needs layers")
        sizes = parse_layers(items['layers'])
        image_name = items.get('image', name).strip()
        at = parse_quantity(items.get('at', '0 s'), 'duration')
        node_id = items.get('node', 'node-1').strip()
        try:
            policy = PullPolicy(items.get('pull_policy', 'IfNotPresent').strip())
        except ValueError as e:
            raise ConfigParseError(f"{where}: {e}") from e
        copies = parse_count(items.get('copies', '1'))
        for i in range(copies):
            suffix = f"-{i}" if copies > 1 else ''
            image = build_image(f"{image_name}{suffix}", sizes)
            config.legit.append(LegitDeployment(f"{name}{suffix}", image, at, node_id, policy))


def _parse_workloads(data, config: ScenarioConfig):
    for name, entry in _mapping(data.get('workloads'), 'workloads').items():
        where = f"workloads.{name}"
        items = _block_items(entry, where, ('cpu_demand', 'total_work', 'io_demand', 'at', 'node'))
        try:
            workload = TenantWorkload(
                name,
                parse_quantity(items.get('cpu_demand', '2 cores'), 'cores'),
                parse_quantity(items.get('total_work', '0 core-s'), 'core_seconds'),
                parse_quantity(items.get('io_demand', '0 MB/s'), 'rate'),
            )
        except ValueError as e:
            raise ScenarioValidationError(f"{where}: {e}") from e
        config.workloads.append(WorkloadSpec(workload, items.get('node', 'node-1').strip(),
                                             parse_quantity(items.get('at', '0 s'), 'duration')))


def _parse_sweep(data, config: ScenarioConfig):
    if 'sweep' not in data:
        return
    items = _block_items(data['sweep'], 'sweep', ('start', 'step', 'count', 'throughputs', 'react_latency'))
    throughputs = tuple(parse_quantity(t, 'rate') for t in items.get('throughputs', '125 MB/s').split(','))
    config.sweep = SweepSpec(
        start=int(round(parse_quantity(items.get('start', '83 MB'), 'bytes'))),
        step=int(round(parse_quantity(items.get('step', '5 MB'), 'bytes'))),
        count=parse_count(items.get('count', '60')),
        throughputs=throughputs,
        react_latency=parse_quantity(items.get('react_latency', '2 s'), 'duration'),
    )


def validate(config: ScenarioConfig):
    if config.kind not in ('attack', 'cutoff_sweep'):
        raise ScenarioValidationError(f"unknown scenario kind {config.kind!r}")
    if config.trials < 1:
        raise ScenarioValidationError("trials must be >= 1")
    if config.node_count < 1:
        raise ScenarioValidationError("nodes must be >= 1")
    if config.sample_interval is not None and config.sample_interval <= 0:
        raise ScenarioValidationError("sample_interval must be positive")
    if config.kind == 'cutoff_sweep':
        if config.sweep is None:
            raise ScenarioValidationError("a cutoff_sweep scenario needs a sweep block")
        return

    unknown = [v for v in config.variants if v not in VARIANTS]
    if unknown:
        raise ScenarioValidationError(f"unknown variant(s) {', '.join(unknown)}")
    if config.attack is not None and config.image_set is None:
        raise ScenarioValidationError("an attack block needs an images block")
    if config.attack is None and any(v != 'baseline' for v in config.variants):
        raise ScenarioValidationError("attack/mitigated variants need an attack block")
    nodes = set(config.node_ids)
    if config.attack is not None:
        missing = [n for n in config.attack.target_nodes if n not in nodes]
        if missing:
            raise ScenarioValidationError(f"attack targets unknown node(s) {', '.join(missing)}")
    for deployment in config.legit:
        if deployment.node_id not in nodes:
            raise ScenarioValidationError(f"legit {deployment.name} targets unknown node {deployment.node_id}")
    for spec in config.workloads:
        if spec.node_id not in nodes:
            raise ScenarioValidationError(f"workload {spec.workload.name} targets unknown node {spec.node_id}")
    names = [d.image.name for d in config.legit]
    if config.image_set is not None:
        names += config.image_set.names
    if len(names) != len(set(names)):
        raise ScenarioValidationError("image names must be unique across legit and attack images")


def load_scenario(path) -> ScenarioConfig:
    """Read and parse a scenario file; OSError propagates to the caller."""
    path = Path(path)
    with open(path, encoding='utf-8') as f:
        return parse_scenario(f.read(), source=path)
