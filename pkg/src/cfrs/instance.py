"""CVRP instances: spatial support, sampling, fleet sizing, isometries and I/O.

The depot is always row 0 of ``Instance.coords``; customers are rows ``1..N``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InstanceParseError, InvalidArgumentError

CENTER = (0.5, 0.5)


@dataclass(frozen=True, eq=False)
class SpatialSupport:
    """Fixed finite set of candidate locations; ``points[depot_index]`` is the depot."""

    points: np.ndarray
    depot_index: int = 0
    rng_seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise InvalidArgumentError("support needs at least 2 two-dimensional points")
        if not 0 <= self.depot_index < pts.shape[0]:
            raise InvalidArgumentError(f"depot_index {self.depot_index} out of range")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class Instance:
    """A daily CVRP instance.

    ``support_ids`` maps every row of ``coords`` to a support index; a
    centrally placed depot that is not part of the support is stored as -1.
    """

    coords: np.ndarray
    demands: np.ndarray
    capacity: int
    support_ids: np.ndarray | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        demands = np.array(self.demands)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InvalidArgumentError("coords must have shape (N+1, 2)")
        if demands.ndim != 1 or demands.shape[0] != coords.shape[0] - 1:
            raise InvalidArgumentError("need exactly one demand per customer row")
        if demands.shape[0] < 1:
            raise InvalidArgumentError("instance needs at least one customer")
        if not np.all(np.isfinite(coords)):
            raise InvalidArgumentError("coordinates must be finite")
        if demands.dtype.kind == "f":
            if not np.all(demands == np.round(demands)):
                raise InvalidArgumentError("demands must be integers")
        demands = demands.astype(np.int64)
        capacity = int(self.capacity)
        if capacity < 1:
            raise InvalidArgumentError("capacity must be positive")
        if np.any(demands < 1):
            raise InvalidArgumentError("demands must be >= 1")
        if np.any(demands > capacity):
            raise InvalidArgumentError("a demand exceeds vehicle capacity")
        coords.setflags(write=False)
        demands.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demands", demands)
        object.__setattr__(self, "capacity", capacity)
        if self.support_ids is not None:
            ids = np.array(self.support_ids, dtype=np.int64)
            if ids.shape != (coords.shape[0],):
                raise InvalidArgumentError("support_ids must have length N+1")
            ids.setflags(write=False)
            object.__setattr__(self, "support_ids", ids)

    @property
    def n_customers(self) -> int:
        return self.demands.shape[0]

    @property
    def depot(self) -> np.ndarray:
        return self.coords[0]

    @property
    def customers(self) -> np.ndarray:
        return self.coords[1:]

    @property
    def fractional_demands(self) -> np.ndarray:
        """q_i = d_i / Q in double precision."""
        return self.demands / float(self.capacity)

    def distance_matrix(self) -> np.ndarray:
        return pairwise_distances(self.coords)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        if self.capacity != other.capacity:
            return False
        if self.coords.shape != other.coords.shape or not np.array_equal(self.coords, other.coords):
            return False
        if not np.array_equal(self.demands, other.demands):
            return False
        if (self.support_ids is None) != (other.support_ids is None):
            return False
        return self.support_ids is None or np.array_equal(self.support_ids, other.support_ids)

    __hash__ = None


@dataclass(frozen=True)
class Isometry:
    """Planar isometry x -> R(angle) @ F(reflect) @ x + translation.

    ``F`` mirrors across the x-axis and is applied before the rotation.
    """

    rotation_angle: float = 0.0
    reflect: bool = False
    translation: tuple[float, float] = (0.0, 0.0)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation_angle), math.sin(self.rotation_angle)
        rot = np.array([[c, -s], [s, c]])
        if self.reflect:
            rot = rot @ np.diag([1.0, -1.0])
        return rot

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.is_identity():
            return pts.copy()
        return pts @ self.matrix().T + np.asarray(self.translation, dtype=float)

    def invert(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.is_identity():
            return pts.copy()
        # orthogonal matrix: inverse is the transpose
        return (pts - np.asarray(self.translation, dtype=float)) @ self.matrix()

    def is_identity(self) -> bool:
        return self.rotation_angle == 0.0 and not self.reflect and tuple(self.translation) == (0.0, 0.0)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 10.0) -> "Isometry":
        return cls(
            rotation_angle=float(rng.uniform(0.0, 2.0 * math.pi)),
            reflect=bool(rng.integers(0, 2)),
            translation=tuple(float(v) for v in rng.uniform(-scale, scale, size=2)),
        )


def pairwise_distances(a, b=None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = a if b is None else np.asarray(b, dtype=float)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def generate_support(size: int, seed: int) -> SpatialSupport:
    """Draw ``size`` i.i.d. uniform points on the unit square; point 0 is the depot."""
    if size < 2:
        raise InvalidArgumentError(f"support size must be >= 2, got {size}")
    rng = np.random.default_rng(seed)
    return SpatialSupport(points=rng.uniform(0.0, 1.0, size=(size, 2)), depot_index=0, rng_seed=seed)


def sample_instance(
    support: SpatialSupport,
    n: int,
    capacity: int = 50,
    demand_lo: int = 1,
    demand_hi: int = 9,
    seed: int = 0,
    central_depot: bool = False,
) -> Instance:
    """Sample ``n`` distinct customer locations from ``support`` with uniform integer demands.

    With ``central_depot`` the depot sits at (0.5, 0.5) instead of the support's depot point.
    """
    n_candidates = len(support) - 1
    if not 1 <= n <= n_candidates:
        raise InvalidArgumentError(f"n must be in [1, {n_candidates}], got {n}")
    if not 1 <= demand_lo <= demand_hi <= capacity:
        raise InvalidArgumentError("need 1 <= demand_lo <= demand_hi <= capacity")
    rng = np.random.default_rng(seed)
    candidates = np.array([i for i in range(len(support)) if i != support.depot_index])
    chosen = rng.choice(candidates, size=n, replace=False)
    demands = rng.integers(demand_lo, demand_hi + 1, size=n)
    if central_depot:
        depot_xy = np.array([CENTER])
        depot_id = -1
    else:
        depot_xy = support.points[[support.depot_index]]
        depot_id = support.depot_index
    coords = np.vstack([depot_xy, support.points[chosen]])
    ids = np.concatenate([[depot_id], chosen])
    return Instance(coords=coords, demands=demands, capacity=capacity, support_ids=ids)


def random_instance(n: int, capacity: int = 50, demand_lo: int = 1, demand_hi: int = 9,
                    seed: int = 0, central_depot: bool = True) -> Instance:
    """Instance with customers uniform on the unit square, no shared support."""
    rng = np.random.default_rng(seed)
    depot = np.array([CENTER]) if central_depot else rng.uniform(0.0, 1.0, size=(1, 2))
    coords = np.vstack([depot, rng.uniform(0.0, 1.0, size=(n, 2))])
    demands = rng.integers(demand_lo, demand_hi + 1, size=n)
    return Instance(coords=coords, demands=demands, capacity=capacity)


def fleet_lower_bound(inst: Instance) -> int:
    """K_min = ceil(sum(d) / Q), computed in exact integer arithmetic."""
    total = int(inst.demands.sum())
    return max(1, -(-total // inst.capacity))


def apply_isometry(inst: Instance, g: Isometry) -> Instance:
    return Instance(
        coords=g.apply(inst.coords),
        demands=inst.demands,
        capacity=inst.capacity,
        support_ids=inst.support_ids,
        name=inst.name,
    )


# ---------------------------------------------------------------------------
# I/O


def instance_to_dict(inst: Instance) -> dict:
    return {
        "coords": inst.coords.tolist(),
        "demands": [int(d) for d in inst.demands],
        "capacity": int(inst.capacity),
        "support_ids": None if inst.support_ids is None else [int(i) for i in inst.support_ids],
    }


def instance_from_dict(data: dict, name: str | None = None) -> Instance:
    for key in ("coords", "demands", "capacity"):
        if key not in data:
            raise InstanceParseError(f"missing key {key!r}")
    try:
        return Instance(
            coords=data["coords"],
            demands=data["demands"],
            capacity=data["capacity"],
            support_ids=data.get("support_ids"),
            name=name,
        )
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        raise InstanceParseError(str(exc)) from exc


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def read_instance(source) -> Instance:
    """Read a native JSON instance or a VRPLIB EUC_2D file.

    ``source`` is a path or the file text itself.
    """
    name = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        path = Path(source)
        name = path.stem
        text = path.read_text()
    else:
        text = str(source)
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
        return instance_from_dict(data, name=name)
    return parse_vrplib(text, name=name)


_SECTIONS = {"NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"}
_REJECTED_SECTIONS = {"EDGE_WEIGHT_SECTION", "TIME_WINDOW_SECTION", "SERVICE_TIME_SECTION",
                      "PICKUP_SECTION", "DISPLAY_DATA_SECTION"}


def parse_vrplib(text: str, name: str | None = None) -> Instance:
    """Parse the EUC_2D subset of VRPLIB; coordinates are kept as-is."""
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demands: dict[int, tuple[int, int]] = {}
    depots: list[int] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        head = line.split(":")[0].strip().split()[0].upper()
        if head in _REJECTED_SECTIONS:
            raise InstanceParseError(f"unsupported section {head}", lineno)
        if head in _SECTIONS:
            section = head
            continue
        if ":" in line and not line[0].isdigit() and not line[0] == "-":
            key, _, value = line.partition(":")
            header[key.strip().upper()] = value.strip()
            section = None
            continue
        parts = line.split()
        try:
            if section == "NODE_COORD_SECTION":
                if len(parts) != 3:
                    raise ValueError
                coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
            elif section == "DEMAND_SECTION":
                if len(parts) != 2:
                    raise ValueError
                demands[int(parts[0])] = (int(parts[1]), lineno)
            elif section == "DEPOT_SECTION":
                node = int(parts[0])
                if node != -1:
                    depots.append(node)
            else:
                raise InstanceParseError(f"unexpected line {line!r}", lineno)
        except ValueError:
            raise InstanceParseError(f"malformed {section} entry {line!r}", lineno) from None

    ewt = header.get("EDGE_WEIGHT_TYPE", "EUC_2D").upper()
    if ewt != "EUC_2D":
        raise InstanceParseError(f"unsupported EDGE_WEIGHT_TYPE {ewt}")
    if "CAPACITY" not in header:
        raise InstanceParseError("missing CAPACITY")
    try:
        capacity = int(header["CAPACITY"])
    except ValueError:
        raise InstanceParseError(f"invalid CAPACITY {header['CAPACITY']!r}") from None
    if not coords:
        raise InstanceParseError("missing NODE_COORD_SECTION")
    if len(depots) > 1:
        raise InstanceParseError("only a single depot is supported")
    depot = depots[0] if depots else min(coords)
    if depot not in coords:
        raise InstanceParseError(f"depot {depot} has no coordinates")
    if set(demands) != set(coords):
        raise InstanceParseError("DEMAND_SECTION and NODE_COORD_SECTION disagree on node ids")
    customers = [i for i in sorted(coords) if i != depot]
    for i in customers:
        d, lineno = demands[i]
        if d <= 0:
            raise InstanceParseError(f"non-positive demand {d} for node {i}", lineno)
        if d > capacity:
            raise InstanceParseError(f"demand {d} of node {i} exceeds capacity", lineno)
    order = [depot] + customers
    return Instance(
        coords=[coords[i] for i in order],
        demands=[demands[i][0] for i in customers],
        capacity=capacity,
        name=name or header.get("NAME"),
    )


def write_support(support: SpatialSupport, path) -> None:
    Path(path).write_text(json.dumps({
        "points": support.points.tolist(),
        "depot_index": support.depot_index,
        "rng_seed": support.rng_seed,
    }))


def read_support(path) -> SpatialSupport:
    data = json.loads(Path(path).read_text())
    return SpatialSupport(points=data["points"], depot_index=data["depot_index"], rng_seed=data.get("rng_seed"))
