"""Tree-shaped 1D networks of tubes with per-node radii.

A network is a connected, cycle-free graph embedded in 3D.  One node is
designated the root; "toward-root" and "away-from-root" give every other
node a well-defined left/right sense that the difference stencils rely on.
Meshes are treated as immutable once constructed: operations that change
geometry (refinement) return new meshes.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TOWARD = "toward"
AWAY = "away"


class MeshError(ValueError):
    """Invalid network topology or geometry."""


class GeometryParseError(MeshError):
    """Malformed geometry document.  Remembers the offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[float, float, float]
    radius: float


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    length: float


@dataclass(frozen=True)
class TwoPath:
    """Two consecutive edges walked outward from ``origin``.

    ``dx1`` is the origin-to-first length, ``dx2`` the first-to-second
    length.  Node fields hold ids, not storage indices.
    """

    origin: int
    first: int
    second: int
    dx1: float
    dx2: float


@dataclass(frozen=True)
class SlopeEstimate:
    """Radius derivative estimate plus the stencil actually used.

    ``mode_used`` differs from the requested mode when a boundary or the
    root forces a fallback; callers that care can detect that here.
    """

    value: float
    mode_used: str


def _as_node(spec) -> Node:
    if isinstance(spec, Node):
        return spec
    nid, pos, radius = spec
    x, y, z = (float(v) for v in pos)
    return Node(int(nid), (x, y, z), float(radius))


class NetworkMesh:
    """Connected tree of tubular segments.

    Parameters
    ----------
    nodes : iterable of Node or (id, (x, y, z), radius)
    edges : iterable of Edge, (a, b) or (a, b, length)
        Edges without an explicit length get the Euclidean distance
        between their endpoints.
    root : int
        Id of the designated root node.
    """

    def __init__(self, nodes: Iterable, edges: Iterable, root: int):
        self.nodes: tuple[Node, ...] = tuple(_as_node(n) for n in nodes)
        if not self.nodes:
            raise MeshError("mesh needs at least one node")
        self._index: dict[int, int] = {}
        for i, node in enumerate(self.nodes):
            if node.id in self._index:
                raise MeshError(f"duplicate node id {node.id}")
            if not node.radius > 0.0:
                raise MeshError(f"node {node.id}: radius must be positive, got {node.radius}")
            self._index[node.id] = i

        resolved = []
        seen_pairs = set()
        for spec in edges:
            if isinstance(spec, Edge):
                a, b, length = spec.a, spec.b, spec.length
            elif len(spec) == 2:
                a, b = spec
                length = None
            else:
                a, b, length = spec
            a, b = int(a), int(b)
            for nid in (a, b):
                if nid not in self._index:
                    raise MeshError(f"edge ({a}, {b}) references unknown node {nid}")
            if a == b:
                raise MeshError(f"edge ({a}, {b}) is a self-loop")
            pair = (min(a, b), max(a, b))
            if pair in seen_pairs:
                raise MeshError(f"duplicate edge between {a} and {b} creates a cycle")
            seen_pairs.add(pair)
            if length is None:
                pa = np.asarray(self.nodes[self._index[a]].position)
                pb = np.asarray(self.nodes[self._index[b]].position)
                length = float(np.linalg.norm(pb - pa))
            length = float(length)
            if not length > 0.0:
                raise MeshError(f"edge ({a}, {b}): length must be positive, got {length}")
            resolved.append(Edge(a, b, length))
        self.edges: tuple[Edge, ...] = tuple(resolved)

        root = int(root)
        if root not in self._index:
            raise MeshError(f"root id {root} is not a node")
        self.root: int = root

        n = len(self.nodes)
        if len(self.edges) != n - 1:
            raise MeshError(
                f"a tree on {n} nodes needs {n - 1} edges, got {len(self.edges)}"
                " (extra edges close a cycle)"
            )

        # Adjacency as (neighbor index, edge length), sorted by neighbor id
        # so that every downstream stencil enumeration is deterministic.
        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for e in self.edges:
            ia, ib = self._index[e.a], self._index[e.b]
            adj[ia].append((ib, e.length))
            adj[ib].append((ia, e.length))
        for lst in adj:
            lst.sort(key=lambda pair: self.nodes[pair[0]].id)
        self._adj = adj

        # Orientation: breadth-first from the root.  parent[i] is the storage
        # index of the toward-root neighbor, or -1 for the root itself.
        parent = np.full(n, -1, dtype=int)
        arc = np.full(n, np.nan)
        iroot = self._index[self.root]
        arc[iroot] = 0.0
        visited = np.zeros(n, dtype=bool)
        visited[iroot] = True
        queue = deque([iroot])
        while queue:
            i = queue.popleft()
            for j, length in adj[i]:
                if not visited[j]:
                    visited[j] = True
                    parent[j] = i
                    arc[j] = arc[i] + length
                    queue.append(j)
        if not visited.all():
            missing = [self.nodes[i].id for i in np.flatnonzero(~visited)]
            raise MeshError(f"mesh is disconnected; unreachable nodes: {missing}")
        self._parent = parent
        self._arc = arc
        children: list[list[int]] = [[] for _ in range(n)]
        for j in range(n):
            if parent[j] >= 0:
                children[parent[j]].append(j)
        self._children = [tuple(c) for c in children]

        self.radii: np.ndarray = np.array([nd.radius for nd in self.nodes])
        self.positions: np.ndarray = np.array([nd.position for nd in self.nodes])
        self.node_ids: tuple[int, ...] = tuple(nd.id for nd in self.nodes)

    # ------------------------------------------------------------------
    # basic queries (by storage index unless the name says id)
    # ------------------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def index(self, node_id: int) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise MeshError(f"no node with id {node_id}") from None

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def is_leaf(self, i: int) -> bool:
        return len(self._adj[i]) == 1

    def parent_index(self, i: int) -> int:
        """Toward-root neighbor index, or -1 at the root."""
        return int(self._parent[i])

    def children_indices(self, i: int) -> tuple[int, ...]:
        return self._children[i]

    def edge_length(self, i: int, j: int) -> float:
        for k, length in self._adj[i]:
            if k == j:
                return length
        raise MeshError(
            f"nodes {self.nodes[i].id} and {self.nodes[j].id} are not adjacent"
        )

    def arc_lengths(self) -> np.ndarray:
        """Path distance of every node from the root."""
        return self._arc.copy()

    def leaf_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_nodes) if self.is_leaf(i))

    def boundary_indices(self) -> tuple[int, ...]:
        """Leaves, plus the root if it is not already a leaf."""
        out = list(self.leaf_indices())
        iroot = self.index(self.root)
        if iroot not in out:
            out.insert(0, iroot)
        return tuple(out)

    def side_neighbors(self, i: int, side: str) -> list[tuple[int, float]]:
        """Neighbors on one side: ``toward`` the root or ``away`` from it."""
        if side == TOWARD:
            p = self.parent_index(i)
            if p < 0:
                return []
            return [(p, self.edge_length(i, p))]
        if side == AWAY:
            return [(c, self.edge_length(i, c)) for c in self.children_indices(i)]
        raise ValueError(f"side must be '{TOWARD}' or '{AWAY}', got {side!r}")

    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def max_degree(self) -> int:
        return max(len(a) for a in self._adj)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"NetworkMesh(n_nodes={self.n_nodes}, n_edges={len(self.edges)}, "
            f"root={self.root})"
        )


# ----------------------------------------------------------------------
# radius profiles
# ----------------------------------------------------------------------


class TabulatedRadius:
    """Radii read straight off the mesh nodes.  No closed form available."""

    analytic = False

    def radii(self, mesh: NetworkMesh) -> np.ndarray:
        return mesh.radii.copy()


@dataclass(frozen=True)
class ConeRadius:
    """Linearly expanding tube, R(x) = 1 + taper * x."""

    taper: float
    analytic = True

    def radius(self, x: float) -> float:
        return 1.0 + self.taper * x

    def slope(self, x: float) -> float:
        return self.taper

    def radii(self, mesh: NetworkMesh) -> np.ndarray:
        r = 1.0 + self.taper * mesh.positions[:, 0]
        if np.any(r <= 0.0):
            raise MeshError("cone profile gives nonpositive radius on this mesh")
        return r


@dataclass(frozen=True)
class SinusoidRadius:
    """Periodically constricted tube, R(x) = sin(wavenumber * x)."""

    wavenumber: float
    analytic = True

    def radius(self, x: float) -> float:
        return math.sin(self.wavenumber * x)

    def slope(self, x: float) -> float:
        return self.wavenumber * math.cos(self.wavenumber * x)

    def radii(self, mesh: NetworkMesh) -> np.ndarray:
        r = np.sin(self.wavenumber * mesh.positions[:, 0])
        if np.any(r <= 0.0):
            raise MeshError("sinusoid profile gives nonpositive radius on this mesh")
        return r


# ----------------------------------------------------------------------
# geometry documents
# ----------------------------------------------------------------------


def load_mesh(text: str) -> NetworkMesh:
    """Parse a geometry document.

    Grammar (one statement per line, '#' starts a comment)::

        node <id> <x> <y> <z> <radius>
        edge <idA> <idB> [length]
        root <id>
    """
    nodes: list[tuple] = []
    edges: list[tuple] = []
    root: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, args = tokens[0], tokens[1:]
        try:
            if kind == "node":
                if len(args) != 5:
                    raise ValueError("expected: node <id> <x> <y> <z> <radius>")
                nodes.append((int(args[0]), tuple(float(v) for v in args[1:4]), float(args[4])))
            elif kind == "edge":
                if len(args) == 2:
                    edges.append((int(args[0]), int(args[1])))
                elif len(args) == 3:
                    edges.append((int(args[0]), int(args[1]), float(args[2])))
                else:
                    raise ValueError("expected: edge <idA> <idB> [length]")
            elif kind == "root":
                if len(args) != 1:
                    raise ValueError("expected: root <id>")
                root = int(args[0])
            else:
                raise ValueError(f"unknown statement {kind!r}")
        except ValueError as exc:
            raise GeometryParseError(lineno, str(exc)) from None
    if root is None:
        raise GeometryParseError(0, "missing 'root' statement")
    return NetworkMesh(nodes, edges, root)


def format_mesh(mesh: NetworkMesh) -> str:
    """Serialize a mesh so that load_mesh(format_mesh(m)) reproduces it bit for bit."""
    lines = []
    for nd in mesh.nodes:
        x, y, z = nd.position
        lines.append(f"node {nd.id} {x!r} {y!r} {z!r} {nd.radius!r}")
    for e in mesh.edges:
        lines.append(f"edge {e.a} {e.b} {e.length!r}")
    lines.append(f"root {mesh.root}")
    return "\n".join(lines) + "\n"


def read_mesh(path) -> NetworkMesh:
    return load_mesh(Path(path).read_text())


def write_mesh(mesh: NetworkMesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))


# ----------------------------------------------------------------------
# mesh generation and refinement
# ----------------------------------------------------------------------


def interval_mesh(x0: float, x1: float, n: int, profile) -> NetworkMesh:
    """Uniform chain of ``n`` nodes on [x0, x1], rooted at the x0 end.

    Radii are sampled from an analytic profile, or taken as 1 when the
    profile is tabulated (callers then override per node).
    """
    if n < 2:
        raise MeshError("interval mesh needs at least two nodes")
    xs = np.linspace(float(x0), float(x1), int(n))
    nodes = []
    for i, x in enumerate(xs):
        r = profile.radius(float(x)) if getattr(profile, "analytic", False) else 1.0
        if not r > 0.0:
            raise MeshError(f"profile radius is nonpositive at x={x}")
        nodes.append((i, (float(x), 0.0, 0.0), float(r)))
    edges = [(i, i + 1, float(xs[i + 1] - xs[i])) for i in range(int(n) - 1)]
    return NetworkMesh(nodes, edges, root=0)


def refine(mesh: NetworkMesh, levels: int = 1) -> NetworkMesh:
    """Bisect every edge ``levels`` times.

    Each pass keeps all existing nodes (ids included), inserts one midpoint
    node per edge with linearly interpolated radius and position, and halves
    edge lengths exactly.  ``levels == 0`` returns the mesh unchanged.
    """
    if levels < 0:
        raise MeshError(f"levels must be >= 0, got {levels}")
    current = mesh
    for _ in range(levels):
        next_id = max(nd.id for nd in current.nodes) + 1
        nodes = list(current.nodes)
        edges: list[tuple] = []
        for e in current.edges:
            ia, ib = current.index(e.a), current.index(e.b)
            pa = np.asarray(current.nodes[ia].position)
            pb = np.asarray(current.nodes[ib].position)
            mid_pos = tuple(float(v) for v in (0.5 * (pa + pb)))
            mid_rad = 0.5 * (current.nodes[ia].radius + current.nodes[ib].radius)
            nodes.append(Node(next_id, mid_pos, mid_rad))
            half = e.length / 2.0
            edges.append((e.a, next_id, half))
            edges.append((next_id, e.b, half))
            next_id += 1
        current = NetworkMesh(nodes, edges, current.root)
    return current


# ----------------------------------------------------------------------
# stencil queries
# ----------------------------------------------------------------------


def orient(mesh: NetworkMesh) -> dict[int, int | None]:
    """Map each node id to the id of its toward-root neighbor (None at root)."""
    out: dict[int, int | None] = {}
    for i, nd in enumerate(mesh.nodes):
        p = mesh.parent_index(i)
        out[nd.id] = None if p < 0 else mesh.nodes[p].id
    return out


def two_paths(mesh: NetworkMesh, node_id: int, side: str) -> list[TwoPath]:
    """All two-edge walks leaving ``node_id`` on the given side.

    The first step goes to a neighbor on that side; the second step
    continues to any neighbor of the intermediate node other than the
    origin.  On a tree no walk can revisit a node, so each result is a
    genuine length-2 path.  Results are ordered by (first id, second id).
    """
    i = mesh.index(node_id)
    paths = []
    for j, dx1 in mesh.side_neighbors(i, side):
        for k, dx2 in mesh.neighbors(j):
            if k == i:
                continue
            paths.append(
                TwoPath(
                    origin=node_id,
                    first=mesh.nodes[j].id,
                    second=mesh.nodes[k].id,
                    dx1=dx1,
                    dx2=dx2,
                )
            )
    paths.sort(key=lambda p: (p.first, p.second))
    return paths


def upwind_stencil(dx1: float, dx2: float) -> tuple[float, float, float]:
    """Second-order one-sided derivative weights along a two-edge path.

    Returns (a0, a1, a2) with f'(origin) ~= a0*f0 + a1*f1 + a2*f2, exact for
    quadratics.  a0 is defined as -(a1 + a2) so the weights annihilate
    constants exactly in floating point.  On a uniform spacing h this is the
    familiar (-3, 4, -1) / (2h) one-sided difference.
    """
    r = 1.0 / (dx1 * dx2 * (dx1 + dx2))
    a1 = r * (dx1 + dx2) ** 2
    a2 = -r * dx1 * dx1
    a0 = -(a1 + a2)
    return a0, a1, a2


def _directional_two_path_slope(values: np.ndarray, mesh: NetworkMesh, path: TwoPath) -> float:
    a0, a1, a2 = upwind_stencil(path.dx1, path.dx2)
    i0 = mesh.index(path.origin)
    i1 = mesh.index(path.first)
    i2 = mesh.index(path.second)
    return a0 * values[i0] + a1 * values[i1] + a2 * values[i2]


def _one_sided_slope(values: np.ndarray, mesh: NetworkMesh, i: int) -> tuple[float, str]:
    """Away-from-root first derivative at a node with only one usable side.

    Prefers the second-order two-path stencil; degrades to a single-edge
    difference when the mesh is too small for one.  Returns (value, mode).
    """
    node_id = mesh.nodes[i].id
    for side, sign in ((AWAY, 1.0), (TOWARD, -1.0)):
        paths = two_paths(mesh, node_id, side)
        if paths:
            vals = [sign * _directional_two_path_slope(values, mesh, p) for p in paths]
            return float(np.mean(vals)), "one-sided"
        nbrs = mesh.side_neighbors(i, side)
        if nbrs:
            vals = [sign * (values[j] - values[i]) / dx for j, dx in nbrs]
            return float(np.mean(vals)), "one-sided-first-order"
    raise MeshError(f"node {node_id} has no neighbors to difference against")


def _central_slope(values: np.ndarray, mesh: NetworkMesh, i: int) -> tuple[float, str]:
    """Central away-from-root derivative: mean away values minus mean toward
    values over the mean span.  Falls back one-sided where a side is empty."""
    toward = mesh.side_neighbors(i, TOWARD)
    away = mesh.side_neighbors(i, AWAY)
    if toward and away:
        r_away = float(np.mean([values[j] for j, _ in away]))
        r_toward = float(np.mean([values[j] for j, _ in toward]))
        span = float(np.mean([dx for _, dx in away]) + np.mean([dx for _, dx in toward]))
        return (r_away - r_toward) / span, "central"
    return _one_sided_slope(values, mesh, i)


def radius_derivative(
    mesh: NetworkMesh,
    profile,
    node_id: int,
    mode: str = "central",
    path: TwoPath | None = None,
) -> SlopeEstimate:
    """Estimate dR/dx at a node, measured in the away-from-root direction.

    Modes
    -----
    central
        Mean away-side minus mean toward-side radius over the mean span.
        At leaves (and at the root) this silently degrades to ``one-sided``
        and the returned ``mode_used`` says so.
    one-sided
        Second-order two-path stencil into the only populated side.
    path
        Directional derivative along the supplied TwoPath; the sign follows
        the path direction rather than the root orientation.
    analytic
        Closed-form slope of an analytic profile at the node position.
    """
    i = mesh.index(node_id)
    values = profile.radii(mesh)
    if mode == "central":
        value, used = _central_slope(values, mesh, i)
        return SlopeEstimate(value, used)
    if mode == "one-sided":
        value, used = _one_sided_slope(values, mesh, i)
        return SlopeEstimate(value, used)
    if mode == "path":
        if path is None or path.origin != node_id:
            raise ValueError("path mode needs a TwoPath rooted at this node")
        return SlopeEstimate(_directional_two_path_slope(values, mesh, path), "path")
    if mode == "analytic":
        if not getattr(profile, "analytic", False):
            raise ValueError("tabulated profiles have no analytic slope")
        x = float(mesh.positions[i, 0])
        return SlopeEstimate(float(profile.slope(x)), "analytic")
    raise ValueError(f"unknown mode {mode!r}")


def central_slopes(values: np.ndarray, mesh: NetworkMesh) -> np.ndarray:
    """Vector of central away-from-root derivatives of a nodal field."""
    out = np.empty(mesh.n_nodes)
    for i in range(mesh.n_nodes):
        out[i], _ = _central_slope(values, mesh, i)
    return out
