"""Radial feeder topology and voltage-sensitivity matrices.

A feeder is a tree of buses rooted at the substation (bus 0). All electrical
quantities are per-unit; bus voltages throughout the package are SQUARED
voltage magnitudes (pu^2). Vectors over buses exclude the substation: array
index k corresponds to bus k+1.

The sensitivity matrices R and X map real/reactive injections to squared
voltage changes. Entry (i, j) is twice the summed resistance/reactance over
the lines shared by the root paths of buses i and j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CycleDetected,
    DisconnectedBus,
    DuplicateLine,
    NonpositiveImpedance,
    UnknownBus,
)


@dataclass(frozen=True)
class Bus:
    """A bus; ``parent`` is None only for the substation (bus 0)."""

    id: int
    parent: int | None = None


@dataclass(frozen=True)
class Line:
    """Directed line from a bus to one of its children (from_bus = parent(to_bus))."""

    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass
class SensitivityMatrices:
    """Dense R, X of the linearized feeder plus cached spectral quantities.

    Both matrices are symmetric, entrywise nonnegative (strictly positive
    wherever two root paths share a line) and positive definite. sigma_max_X
    and fro_norm_X parameterize every controller step-size bound, so they are
    computed once here.
    """

    R: np.ndarray
    X: np.ndarray
    sigma_max_X: float
    fro_norm_X: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


class RadialNetwork:
    """Validated substation-rooted tree. Immutable after construction.

    Attributes
    ----------
    buses : list[Bus]
        Bus 0 plus n branch buses, ordered by id.
    lines : list[Line]
        Exactly n lines; lines[k] feeds bus k+1 is *not* guaranteed, use
        ``line_into(i)``.
    v0 : float
        Substation squared voltage (pu^2).
    n : int
        Number of non-substation buses.
    parent : np.ndarray
        parent[i] for buses 0..n; parent[0] == -1.
    """

    def __init__(self, buses: list[Bus], lines: list[Line], v0: float):
        self.buses = buses
        self.lines = lines
        self.v0 = float(v0)
        self.n = len(buses) - 1

        self.parent = np.full(self.n + 1, -1, dtype=int)
        self._line_into = {}
        for line in lines:
            self.parent[line.to_bus] = line.from_bus
            self._line_into[line.to_bus] = line

        # r/x of the line feeding bus i, at index i-1
        self.line_r = np.array([self._line_into[i].r for i in range(1, self.n + 1)])
        self.line_x = np.array([self._line_into[i].x for i in range(1, self.n + 1)])

        self.children: list[list[int]] = [[] for _ in range(self.n + 1)]
        for line in lines:
            self.children[line.from_bus].append(line.to_bus)

        self.depth = np.zeros(self.n + 1, dtype=int)
        # root-to-leaf ordering for forward sweeps
        order = [0]
        for bus in order:
            for child in self.children[bus]:
                self.depth[child] = self.depth[bus] + 1
                order.append(child)
        self.topo_order = order

    def line_into(self, i: int) -> Line:
        """The unique line whose to-bus is i (i >= 1)."""
        if i not in self._line_into:
            raise UnknownBus(f"bus {i} has no feeding line")
        return self._line_into[i]


def build_network(buses, lines, v0: float) -> RadialNetwork:
    """Validate raw bus/line data and assemble a RadialNetwork.

    ``buses`` may be Bus objects or plain integer ids; ``lines`` may be Line
    objects or (from, to, r, x) tuples. Bus ids must be 0..n without gaps.

    Raises
    ------
    NonpositiveImpedance, UnknownBus, DuplicateLine, CycleDetected,
    DisconnectedBus -- each naming the offending element.
    """
    bus_ids = sorted(b.id if isinstance(b, Bus) else int(b) for b in buses)
    if not bus_ids or bus_ids != list(range(len(bus_ids))):
        raise UnknownBus(f"bus ids must be 0..n without gaps, got {bus_ids}")
    n = len(bus_ids) - 1

    norm_lines: list[Line] = []
    for entry in lines:
        if isinstance(entry, Line):
            norm_lines.append(entry)
        else:
            f, t, r, x = entry
            norm_lines.append(Line(int(f), int(t), float(r), float(x)))

    seen_pairs = set()
    parent_of: dict[int, int] = {}
    for line in norm_lines:
        if line.r <= 0 or line.x <= 0:
            raise NonpositiveImpedance(
                f"line ({line.from_bus},{line.to_bus}) has r={line.r}, x={line.x}"
            )
        for end in (line.from_bus, line.to_bus):
            if end < 0 or end > n:
                raise UnknownBus(f"line ({line.from_bus},{line.to_bus}) references bus {end}")
        pair = (min(line.from_bus, line.to_bus), max(line.from_bus, line.to_bus))
        if pair in seen_pairs:
            raise DuplicateLine(f"line pair {pair} appears more than once")
        seen_pairs.add(pair)
        if line.to_bus == 0:
            raise CycleDetected("line into the substation: bus 0 cannot have a parent")
        if line.to_bus in parent_of:
            raise CycleDetected(
                f"bus {line.to_bus} fed by both {parent_of[line.to_bus]} and {line.from_bus}"
            )
        parent_of[line.to_bus] = line.from_bus

    if len(norm_lines) > n:
        raise CycleDetected(f"{len(norm_lines)} lines for {n + 1} buses (tree needs {n})")

    # walk each bus to the root; a repeat within one walk is a cycle,
    # a dead end (no parent before reaching 0) is a disconnected bus
    for start in range(1, n + 1):
        seen = {start}
        cur = start
        while cur != 0:
            if cur not in parent_of:
                raise DisconnectedBus(f"bus {cur} is not connected to the substation")
            cur = parent_of[cur]
            if cur in seen:
                raise CycleDetected(f"cycle through bus {cur}")
            seen.add(cur)

    if len(norm_lines) < n:
        raise DisconnectedBus(f"{len(norm_lines)} lines cannot connect {n + 1} buses")
    if v0 <= 0:
        raise ValueError(f"v0 must be positive, got {v0}")

    bus_objs = [Bus(0)] + [Bus(i, parent_of[i]) for i in range(1, n + 1)]
    return RadialNetwork(bus_objs, norm_lines, v0)


def path_to_root(net: RadialNetwork, i: int) -> list[Line]:
    """Lines on the unique path from the substation down to bus i, root first."""
    if i < 1 or i > net.n:
        raise UnknownBus(f"bus {i} not in 1..{net.n}")
    path = []
    cur = i
    while cur != 0:
        path.append(net.line_into(cur))
        cur = net.parent[cur]
    path.reverse()
    return path


def build_sensitivity(net: RadialNetwork) -> SensitivityMatrices:
    """Construct R and X from root-path intersections.

    The shared segment of two root paths is the path down to the deepest
    common ancestor, so entry (i, j) equals twice the cumulative r (or x)
    from the substation to that ancestor.
    """
    n = net.n
    cum_r = np.zeros(n + 1)
    cum_x = np.zeros(n + 1)
    for bus in net.topo_order[1:]:
        cum_r[bus] = cum_r[net.parent[bus]] + net.line_r[bus - 1]
        cum_x[bus] = cum_x[net.parent[bus]] + net.line_x[bus - 1]

    R = np.zeros((n, n))
    X = np.zeros((n, n))
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            a = _common_ancestor(net, i, j)
            R[i - 1, j - 1] = R[j - 1, i - 1] = 2.0 * cum_r[a]
            X[i - 1, j - 1] = X[j - 1, i - 1] = 2.0 * cum_x[a]

    eigs = np.linalg.eigvalsh(X)
    if eigs[0] <= 0:
        raise ValueError(f"X is not positive definite (min eigenvalue {eigs[0]:.3e})")
    return SensitivityMatrices(
        R=R,
        X=X,
        sigma_max_X=float(eigs[-1]),
        fro_norm_X=float(np.linalg.norm(X, "fro")),
    )


def _common_ancestor(net: RadialNetwork, i: int, j: int) -> int:
    while net.depth[i] > net.depth[j]:
        i = net.parent[i]
    while net.depth[j] > net.depth[i]:
        j = net.parent[j]
    while i != j:
        i = net.parent[i]
        j = net.parent[j]
    return i


# -- network file format ------------------------------------------------------
#
# {"v0_pu2": number,
#  "buses": [{"id": int}, ...],
#  "lines": [{"from": int, "to": int, "r_pu": number, "x_pu": number}, ...]}

def network_to_dict(net: RadialNetwork) -> dict:
    return {
        "v0_pu2": net.v0,
        "buses": [{"id": b.id} for b in net.buses],
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "r_pu": ln.r, "x_pu": ln.x}
            for ln in net.lines
        ],
    }


def network_from_dict(data: dict) -> RadialNetwork:
    buses = [entry["id"] for entry in data["buses"]]
    lines = [
        (entry["from"], entry["to"], entry["r_pu"], entry["x_pu"])
        for entry in data["lines"]
    ]
    return build_network(buses, lines, data["v0_pu2"])


def load_network(path: str | Path) -> RadialNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def save_network(net: RadialNetwork, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh, indent=2)
        fh.write("\n")
