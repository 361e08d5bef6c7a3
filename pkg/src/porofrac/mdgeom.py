"""Mixed-dimensional geometry for fractured 2D rectangular domains.

The porous medium is represented as a collection of subdomains of dimension
2 (matrix), 1 (fracture segments) and 0 (fracture intersections), coupled
through interfaces that carry mortar cells.  Grids are conforming: every
fracture cell coincides with a duplicated pair of matrix faces, and every
intersection cell coincides with a lattice node.  Matrix displacement nodes
on fracture walls are duplicated so the displacement field can jump across
fractures.

Two entry points build meshes: :func:`build_structured_mesh` for axis-aligned
fracture networks on a structured lattice, and :func:`load_mesh` for general
conforming triangulations serialized in the JSON schema documented on
:func:`save_mesh`.  Both funnel into the same splitting/validation machinery.

Immersed fracture tips keep a single vertex (the fan of elements around a
tip stays connected), so the displacement jump closes continuously toward
the tip as a consequence of mesh conformity; no additional mechanical tip
condition is imposed.  Flow sees tips as zero-flux ends.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "FractureNetwork",
    "Matrix2D",
    "Fracture1D",
    "Intersection0D",
    "MortarInterface",
    "PointInterface",
    "MdMesh",
    "build_structured_mesh",
    "load_mesh",
    "save_mesh",
    "displacement_jump",
    "decompose",
    "specific_volume",
]


class MeshError(ValueError):
    """Raised when a mesh is malformed or violates a structural invariant."""


@dataclass(frozen=True)
class FractureNetwork:
    """Axis-aligned fracture segments given by endpoint pairs in meters."""

    segments: tuple[tuple[tuple[float, float], tuple[float, float]], ...] = ()

    def __init__(self, segments=()):
        object.__setattr__(
            self,
            "segments",
            tuple((tuple(map(float, a)), tuple(map(float, b))) for a, b in segments),
        )

    def __len__(self) -> int:
        return len(self.segments)


@dataclass
class Matrix2D:
    """The ambient-dimensional (d=2) subdomain: triangles plus face data.

    Face normals point out of the owner cell; wall faces (fracture sides)
    have exactly one owner and their normal points into the fracture.
    """

    id: int
    tri_nodes: np.ndarray      # (T, 3) node ids, CCW
    cell_centers: np.ndarray   # (T, 2)
    cell_measures: np.ndarray  # (T,) areas
    grads: np.ndarray          # (T, 3, 2) P1 basis gradients
    face_nodes: np.ndarray     # (F, 2)
    face_owner: np.ndarray     # (F,)
    face_neigh: np.ndarray     # (F,) -1 when single-sided
    face_len: np.ndarray       # (F,)
    face_normal: np.ndarray    # (F, 2) unit, owner-outward
    face_center: np.ndarray    # (F, 2)
    interior_faces: np.ndarray
    boundary_faces: np.ndarray
    boundary_tag: dict[int, str]
    wall_faces: np.ndarray     # fracture-wall faces
    d_own: np.ndarray          # (F,) perpendicular distance owner center -> face
    d_neigh: np.ndarray        # (F,) same for neighbour (nan if none)
    dirichlet_colloc: np.ndarray  # (F, 2) foot of owner-center perpendicular

    dim: int = 2

    @property
    def num_cells(self) -> int:
        return self.tri_nodes.shape[0]


@dataclass
class Fracture1D:
    """A d=1 subdomain: one maximal fracture piece between endpoints.

    ``wall_*`` arrays are index-aligned with the cells, which are ordered
    along the piece.  Sides follow the convention that the fracture normal
    equals the matrix outward normal on side ``j``.
    """

    id: int
    fracture_id: int           # id of the input segment this piece belongs to
    cell_centers: np.ndarray   # (M, 2)
    cell_measures: np.ndarray  # (M,) lengths
    tangents: np.ndarray       # (M, 2) unit, along the chain
    normals: np.ndarray        # (M, 2) unit, = rot90(tangent)
    wall_face_j: np.ndarray    # (M,) matrix face ids
    wall_face_k: np.ndarray
    wall_tri_j: np.ndarray     # (M,) matrix cell ids adjacent on each side
    wall_tri_k: np.ndarray
    wall_nodes_j: np.ndarray   # (M, 2) split node ids per facet, side j
    wall_nodes_k: np.ndarray
    inner_pairs: np.ndarray    # (M-1, 2) consecutive cell pairs
    inner_half: np.ndarray     # (M-1, 2) half-distances between centers
    end_kind: tuple[str, str]          # 'tip' | 'point' per end
    end_point_id: tuple[int, int]      # 0D subdomain id or -1
    chain_nodes: np.ndarray    # (M+1,) original (unsplit) node ids along chain

    dim: int = 1

    @property
    def num_cells(self) -> int:
        return self.cell_centers.shape[0]


@dataclass
class Intersection0D:
    """A d=0 subdomain at a fracture intersection node."""

    id: int
    x: np.ndarray                       # (2,)
    neighbors: list[tuple[int, int]]    # (fracture subdomain id, end index)

    dim: int = 0
    num_cells: int = 1


@dataclass
class MortarInterface:
    """Matrix-fracture interface: one side (j or k) of one fracture piece.

    Mortar cells are in bijection with both the fracture cells and the wall
    faces, so the projections reduce to identity index maps.
    """

    id: int
    higher_id: int
    lower_id: int
    side: str                  # 'j' | 'k'
    mortar_measures: np.ndarray
    wall_faces: np.ndarray     # (M,) matrix face ids
    wall_tris: np.ndarray      # (M,) matrix cell ids

    @property
    def num_cells(self) -> int:
        return self.mortar_measures.shape[0]

    def project_to_interface(self, frac_field: np.ndarray) -> np.ndarray:
        """Pi: subdomain (fracture) field -> mortar field (identity map)."""
        return np.array(frac_field, copy=True)

    def project_to_subdomain(self, mortar_field: np.ndarray) -> np.ndarray:
        """Xi: mortar field -> subdomain (fracture) field (identity map)."""
        return np.array(mortar_field, copy=True)


@dataclass
class PointInterface:
    """Fracture-intersection interface: one fracture end against a 0D cell."""

    id: int
    higher_id: int             # fracture subdomain
    lower_id: int              # 0D subdomain
    end: int                   # 0 | 1: which end of the piece
    h_cell: int                # fracture cell index at that end
    outward_tangent: np.ndarray
    mortar_measures: np.ndarray = field(default_factory=lambda: np.ones(1))

    @property
    def num_cells(self) -> int:
        return 1


@dataclass
class MdMesh:
    """Mixed-dimensional mesh: subdomains, interfaces and tie bookkeeping."""

    nodes: np.ndarray                  # (N, 2) split node coordinates
    matrix: Matrix2D
    fractures: list[Fracture1D]
    points: list[Intersection0D]
    interfaces: list[MortarInterface]
    point_interfaces: list[PointInterface]
    node_volumes: np.ndarray           # (N,) lumped nodal areas
    tied_nodes: list[tuple[int, list[tuple[int, int]]]]
    # tied_nodes: (split node id, [(interface index, mortar cell), ...])
    raw: dict                          # unsplit serialization payload
    ambient_dim: int = 2

    @property
    def subdomains(self) -> list:
        return [self.matrix, *self.fractures, *self.points]

    @property
    def num_fracture_cells(self) -> int:
        return sum(f.num_cells for f in self.fractures)

    def fracture_by_input_id(self, fracture_id: int) -> list[Fracture1D]:
        return [f for f in self.fractures if f.fracture_id == fracture_id]

    def stats(self) -> dict:
        return {
            "nodes": int(self.nodes.shape[0]),
            "matrix_cells": int(self.matrix.num_cells),
            "fracture_subdomains": len(self.fractures),
            "fracture_cells": int(self.num_fracture_cells),
            "intersection_cells": len(self.points),
            "interfaces": len(self.interfaces) + len(self.point_interfaces),
            "mortar_cells": int(
                sum(i.num_cells for i in self.interfaces)
                + len(self.point_interfaces)
            ),
        }


# ---------------------------------------------------------------------------
# Pointwise geometric operations
# ---------------------------------------------------------------------------

def displacement_jump(u_j: np.ndarray, u_k: np.ndarray) -> np.ndarray:
    """Displacement jump [[u]] = Xi_k u_k - Xi_j u_j per fracture cell.

    Both inputs are (M, 2) mortar fields on the two sides of one fracture;
    with matching grids the projections Xi are identity maps.
    """
    u_j = np.asarray(u_j, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    if u_j.shape != u_k.shape:
        raise MeshError(
            f"mismatched mortar cardinalities: {u_j.shape} vs {u_k.shape}"
        )
    return u_k - u_j


def decompose(v: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split vectors into normal scalar and tangential remainder wrt unit n."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    v_n = np.sum(v * n, axis=-1)
    v_t = v - v_n[..., None] * n
    return v_n, v_t


def specific_volume(dim: int, aperture, ambient_dim: int = 2) -> np.ndarray:
    """Dimension-reduction volume factor a**(D - d)."""
    a = np.asarray(aperture, dtype=float)
    if dim < ambient_dim and np.any(a <= 0.0):
        raise MeshError("nonpositive aperture on lower-dimensional cell")
    return a ** (ambient_dim - dim)


# ---------------------------------------------------------------------------
# Shared mesh construction from an unsplit conforming triangulation
# ---------------------------------------------------------------------------

def _orient_ccw(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    two_a = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = two_a < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _chain_from_facets(facets: list[tuple[int, int]], fid: int) -> list[int]:
    """Order the facets of one fracture id into a simple open node path."""
    adj: dict[int, list[int]] = {}
    for a, b in facets:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    ends = sorted(n for n, nb in adj.items() if len(nb) == 1)
    bad = [n for n, nb in adj.items() if len(nb) > 2]
    if bad:
        raise MeshError(f"fracture {fid} branches at node {bad[0]}; one polyline per id")
    if not ends:
        raise MeshError(f"fracture {fid} forms a closed loop; unsupported")
    if len(ends) != 2:
        raise MeshError(f"fracture {fid} is not a single connected polyline")
    chain = [ends[0]]
    prev = -1
    while True:
        nxt = [n for n in adj[chain[-1]] if n != prev]
        if not nxt:
            break
        prev = chain[-1]
        chain.append(nxt[0])
    if len(chain) != len(facets) + 1:
        raise MeshError(f"fracture {fid} is not a single connected polyline")
    return chain


def _assemble_mesh(
    nodes0: np.ndarray,
    tris0: np.ndarray,
    facets0: list[tuple[int, int, int]],
    boundary_tags0: dict[tuple[int, int], str],
    raw: dict,
) -> MdMesh:
    """Split fracture-wall nodes and build the full mixed-dimensional mesh."""
    nodes0 = np.asarray(nodes0, dtype=float)
    tris0 = np.asarray(tris0, dtype=np.int64)
    if tris0.size == 0:
        raise MeshError("empty cell list")
    if nodes0.ndim != 2 or nodes0.shape[1] != 2:
        raise MeshError("nodes must be an (N, 2) array")
    if tris0.min(initial=0) < 0 or tris0.max(initial=-1) >= len(nodes0):
        raise MeshError("dangling node reference in cells")
    tris0 = _orient_ccw(nodes0, tris0)
    p0, p1, p2 = nodes0[tris0[:, 0]], nodes0[tris0[:, 1]], nodes0[tris0[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    areas0 = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(areas0 <= 0):
        raise MeshError("degenerate cell with nonpositive area")

    # Unsplit edge -> adjacent triangles.
    edge_tris: dict[tuple[int, int], list[int]] = {}
    for t in range(len(tris0)):
        for loc in range(3):
            k = _edge_key(tris0[t, loc], tris0[t, (loc + 1) % 3])
            edge_tris.setdefault(k, []).append(t)
    for k, ts in edge_tris.items():
        if len(ts) > 2:
            raise MeshError(f"edge {k} shared by more than two cells")

    # Validate fracture facets and group per input fracture id.
    facet_set: set[tuple[int, int]] = set()
    per_fid: dict[int, list[tuple[int, int]]] = {}
    for a, b, fid in facets0:
        k = _edge_key(int(a), int(b))
        if k in facet_set:
            raise MeshError(f"duplicate fracture facet {k}")
        if k not in edge_tris or len(edge_tris[k]) != 2:
            raise MeshError(f"unpaired fracture facet {k}")
        facet_set.add(k)
        per_fid.setdefault(int(fid), []).append(k)

    # Boundary nodes of the triangulation (for tip-on-boundary rejection).
    boundary_nodes: set[int] = set()
    for k, ts in edge_tris.items():
        if len(ts) == 1:
            boundary_nodes.update(k)

    chains = {fid: _chain_from_facets(fs, fid) for fid, fs in sorted(per_fid.items())}

    # Facet incidence per node and intersection detection.
    node_fids: dict[int, set[int]] = {}
    for fid, chain in chains.items():
        for n in chain:
            node_fids.setdefault(n, set()).add(fid)
    intersection_nodes = sorted(n for n, s in node_fids.items() if len(s) > 1)
    for fid, chain in chains.items():
        for endpoint in (chain[0], chain[-1]):
            if endpoint in boundary_nodes and endpoint not in intersection_nodes:
                raise MeshError(
                    f"fracture {fid} endpoint touches the domain boundary; unsupported"
                )
        for n in chain:
            if n in boundary_nodes:
                raise MeshError(
                    f"fracture {fid} runs along or touches the domain boundary"
                )

    # Split fracture pieces at intersection nodes.
    pieces: list[tuple[int, list[int]]] = []  # (fracture_id, node chain)
    for fid, chain in chains.items():
        cut = [0] + [
            i for i in range(1, len(chain) - 1) if chain[i] in intersection_nodes
        ] + [len(chain) - 1]
        for s, e in zip(cut[:-1], cut[1:]):
            pieces.append((fid, chain[s : e + 1]))

    # --- Node splitting: connected fan components around each facet node.
    fracture_nodes = sorted(node_fids)
    node_tris: dict[int, list[int]] = {n: [] for n in fracture_nodes}
    for t in range(len(tris0)):
        for n in tris0[t]:
            if int(n) in node_tris:
                node_tris[int(n)].append(t)

    new_coords: list[np.ndarray] = []
    # copy_of[(node, tri)] -> split node id, for triangles around split nodes
    copy_of: dict[tuple[int, int], int] = {}
    split_node_ids: dict[int, list[int]] = {}
    n_nodes0 = len(nodes0)
    next_id = n_nodes0
    for n in fracture_nodes:
        tris_here = node_tris[n]
        # Adjacency through non-facet edges incident to n.
        comp = {t: -1 for t in tris_here}
        by_edge: dict[tuple[int, int], list[int]] = {}
        for t in tris_here:
            for m in tris0[t]:
                m = int(m)
                if m == n:
                    continue
                k = _edge_key(n, m)
                if k not in facet_set:
                    by_edge.setdefault(k, []).append(t)
        comp_ids = []
        for seed in tris_here:
            if comp[seed] != -1:
                continue
            cid = len(comp_ids)
            comp_ids.append(cid)
            stack = [seed]
            comp[seed] = cid
            while stack:
                t = stack.pop()
                for m in tris0[t]:
                    m = int(m)
                    if m == n:
                        continue
                    k = _edge_key(n, m)
                    if k in facet_set:
                        continue
                    for t2 in by_edge.get(k, []):
                        if comp[t2] == -1:
                            comp[t2] = cid
                            stack.append(t2)
        ids = []
        for cid in range(len(comp_ids)):
            if cid == 0:
                ids.append(n)
            else:
                ids.append(next_id)
                new_coords.append(nodes0[n])
                next_id += 1
        for t in tris_here:
            copy_of[(n, t)] = ids[comp[t]]
        split_node_ids[n] = ids

    nodes = np.vstack([nodes0] + new_coords) if new_coords else nodes0.copy()
    tris = tris0.copy()
    for (n, t), nid in copy_of.items():
        for loc in range(3):
            if tris0[t, loc] == n:
                tris[t, loc] = nid

    # --- Wall faces: two per facet, keyed by the split node pair.
    # facet_walls[key] = (piece idx, cell idx, {'j': (tri, nodes), 'k': ...})
    # Determined after piece normals are known, so first set up pieces.
    frac_subs: list[Fracture1D] = []
    point_subs: list[Intersection0D] = []
    point_of_node: dict[int, int] = {}
    for n in intersection_nodes:
        point_of_node[n] = len(point_subs)
        point_subs.append(
            Intersection0D(id=-1, x=nodes0[n].copy(), neighbors=[])
        )

    wall_records: list[dict] = []  # per piece: side -> arrays
    for p_idx, (fid, chain) in enumerate(pieces):
        m = len(chain) - 1
        centers = 0.5 * (nodes0[chain[:-1]] + nodes0[chain[1:]])
        vecs = nodes0[chain[1:]] - nodes0[chain[:-1]]
        lens = np.linalg.norm(vecs, axis=1)
        tangents = vecs / lens[:, None]
        normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)
        wall = {
            "tri": {"j": np.empty(m, dtype=np.int64), "k": np.empty(m, dtype=np.int64)},
            "nodes": {"j": np.empty((m, 2), dtype=np.int64), "k": np.empty((m, 2), dtype=np.int64)},
        }
        for c in range(m):
            a, b = chain[c], chain[c + 1]
            t1, t2 = edge_tris[_edge_key(a, b)]
            mid = centers[c]
            side_of = {}
            for t in (t1, t2):
                ctr = nodes0[tris0[t]].mean(axis=0)
                side_of[t] = "j" if np.dot(ctr - mid, normals[c]) < 0 else "k"
            if side_of[t1] == side_of[t2]:
                raise MeshError("fracture facet with both neighbors on one side")
            for t in (t1, t2):
                s = side_of[t]
                wall["tri"][s][c] = t
                na = copy_of.get((a, t), a)
                nb = copy_of.get((b, t), b)
                wall["nodes"][s][c] = (na, nb)
        wall_records.append(wall)

        end_kind = []
        end_point = []
        for end_node, end_i in ((chain[0], 0), (chain[-1], 1)):
            if end_node in point_of_node:
                pid = point_of_node[end_node]
                end_kind.append("point")
                end_point.append(pid)
                point_subs[pid].neighbors.append((p_idx, end_i))
            else:
                end_kind.append("tip")
                end_point.append(-1)

        if m < 2 and end_kind == ["tip", "tip"]:
            raise MeshError(
                f"fracture {fid} resolved by a single cell with free ends; refine h"
            )

        inner_pairs = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
        inner_half = np.stack([0.5 * lens[:-1], 0.5 * lens[1:]], axis=1) if m > 1 else np.zeros((0, 2))
        frac_subs.append(
            Fracture1D(
                id=-1,
                fracture_id=fid,
                cell_centers=centers,
                cell_measures=lens,
                tangents=tangents,
                normals=normals,
                wall_face_j=np.empty(m, dtype=np.int64),
                wall_face_k=np.empty(m, dtype=np.int64),
                wall_tri_j=wall["tri"]["j"],
                wall_tri_k=wall["tri"]["k"],
                wall_nodes_j=wall["nodes"]["j"],
                wall_nodes_k=wall["nodes"]["k"],
                inner_pairs=inner_pairs.astype(np.int64),
                inner_half=inner_half,
                end_kind=(end_kind[0], end_kind[1]),
                end_point_id=(end_point[0], end_point[1]),
                chain_nodes=np.asarray(chain, dtype=np.int64),
            )
        )

    # --- Face arrays on the split triangulation.
    wall_key: dict[tuple[int, int], tuple[int, int, str]] = {}
    for p_idx, f in enumerate(frac_subs):
        for c in range(f.num_cells):
            for s, wn in (("j", f.wall_nodes_j[c]), ("k", f.wall_nodes_k[c])):
                wall_key[_edge_key(int(wn[0]), int(wn[1]))] = (p_idx, c, s)

    edge_tris_split: dict[tuple[int, int], list[int]] = {}
    for t in range(len(tris)):
        for loc in range(3):
            k = _edge_key(int(tris[t, loc]), int(tris[t, (loc + 1) % 3]))
            edge_tris_split.setdefault(k, []).append(t)

    face_keys = sorted(edge_tris_split)
    n_faces = len(face_keys)
    face_nodes = np.array(face_keys, dtype=np.int64)
    face_owner = np.full(n_faces, -1, dtype=np.int64)
    face_neigh = np.full(n_faces, -1, dtype=np.int64)
    for i, k in enumerate(face_keys):
        ts = edge_tris_split[k]
        face_owner[i] = ts[0]
        if len(ts) == 2:
            face_neigh[i] = ts[1]

    p0, p1, p2 = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    centers2 = (p0 + p1 + p2) / 3.0

    fa, fb = nodes[face_nodes[:, 0]], nodes[face_nodes[:, 1]]
    face_center = 0.5 * (fa + fb)
    edge_vec = fb - fa
    face_len = np.linalg.norm(edge_vec, axis=1)
    face_normal = np.stack([edge_vec[:, 1], -edge_vec[:, 0]], axis=1) / face_len[:, None]
    # Orient owner-outward.
    own_ctr = centers2[face_owner]
    flip = np.sum(face_normal * (face_center - own_ctr), axis=1) < 0
    face_normal[flip] *= -1.0

    d_own = np.sum((face_center - own_ctr) * face_normal, axis=1)
    d_neigh = np.full(n_faces, np.nan)
    has_n = face_neigh >= 0
    d_neigh[has_n] = np.sum(
        (centers2[face_neigh[has_n]] - face_center[has_n]) * face_normal[has_n], axis=1
    )
    if np.any(d_own <= 0) or np.any(d_neigh[has_n] <= 0):
        raise MeshError("zero or negative inter-cell distance at a face")
    # Foot of the perpendicular from the owner center onto the face line.
    tvec = edge_vec / face_len[:, None]
    s = np.sum((own_ctr - fa) * tvec, axis=1)
    dirichlet_colloc = fa + s[:, None] * tvec

    interior, boundary, walls = [], [], []
    boundary_tag: dict[int, str] = {}
    face_idx_of_key = {k: i for i, k in enumerate(face_keys)}
    for i, k in enumerate(face_keys):
        if face_neigh[i] >= 0:
            interior.append(i)
        elif k in wall_key:
            walls.append(i)
        else:
            boundary.append(i)
            tag = boundary_tags0.get(k)
            if tag is None:
                raise MeshError(f"unassigned boundary tag on face {k}")
            boundary_tag[i] = tag

    for p_idx, f in enumerate(frac_subs):
        for c in range(f.num_cells):
            kj = _edge_key(int(f.wall_nodes_j[c, 0]), int(f.wall_nodes_j[c, 1]))
            kk = _edge_key(int(f.wall_nodes_k[c, 0]), int(f.wall_nodes_k[c, 1]))
            f.wall_face_j[c] = face_idx_of_key[kj]
            f.wall_face_k[c] = face_idx_of_key[kk]

    matrix = Matrix2D(
        id=0,
        tri_nodes=tris,
        cell_centers=centers2,
        cell_measures=areas,
        grads=_p1_gradients(nodes, tris, areas),
        face_nodes=face_nodes,
        face_owner=face_owner,
        face_neigh=face_neigh,
        face_len=face_len,
        face_normal=face_normal,
        face_center=face_center,
        interior_faces=np.asarray(interior, dtype=np.int64),
        boundary_faces=np.asarray(boundary, dtype=np.int64),
        boundary_tag=boundary_tag,
        wall_faces=np.asarray(walls, dtype=np.int64),
        d_own=d_own,
        d_neigh=d_neigh,
        dirichlet_colloc=dirichlet_colloc,
    )

    # Subdomain ids: matrix 0, fractures, then points.
    for i, f in enumerate(frac_subs):
        f.id = 1 + i
    for i, pt in enumerate(point_subs):
        pt.id = 1 + len(frac_subs) + i
        pt.neighbors = [(frac_subs[p].id, e) for p, e in pt.neighbors]

    interfaces: list[MortarInterface] = []
    for f in frac_subs:
        for side, wf, wt in (("j", f.wall_face_j, f.wall_tri_j), ("k", f.wall_face_k, f.wall_tri_k)):
            interfaces.append(
                MortarInterface(
                    id=len(interfaces),
                    higher_id=0,
                    lower_id=f.id,
                    side=side,
                    mortar_measures=f.cell_measures.copy(),
                    wall_faces=wf.copy(),
                    wall_tris=wt.copy(),
                )
            )

    point_interfaces: list[PointInterface] = []
    for pt in point_subs:
        for f_id, end in pt.neighbors:
            f = frac_subs[f_id - 1]
            h_cell = 0 if end == 0 else f.num_cells - 1
            tan = f.tangents[h_cell] * (-1.0 if end == 0 else 1.0)
            point_interfaces.append(
                PointInterface(
                    id=len(interfaces) + len(point_interfaces),
                    higher_id=f.id,
                    lower_id=pt.id,
                    end=end,
                    h_cell=h_cell,
                    outward_tangent=tan,
                )
            )

    # Tie bookkeeping: each split node copy is tied to the mean of the mortar
    # cells of its incident wall faces.
    intf_index = {(itf.lower_id, itf.side): i for i, itf in enumerate(interfaces)}
    ties_by_copy: dict[int, list[tuple[int, int]]] = {}
    for f in frac_subs:
        for c in range(f.num_cells):
            for side, wn in (("j", f.wall_nodes_j[c]), ("k", f.wall_nodes_k[c])):
                ii = intf_index[(f.id, side)]
                for nid in wn:
                    nid = int(nid)
                    if nid < n_nodes0 and len(split_node_ids.get(nid, [nid])) == 1:
                        continue  # unsplit (tip) node keeps its momentum rows
                    ties_by_copy.setdefault(nid, []).append((ii, c))
    tied_nodes = sorted((nid, sorted(set(lst))) for nid, lst in ties_by_copy.items())

    node_volumes = np.zeros(len(nodes))
    np.add.at(node_volumes, tris.ravel(), np.repeat(areas / 3.0, 3))

    mesh = MdMesh(
        nodes=nodes,
        matrix=matrix,
        fractures=frac_subs,
        points=point_subs,
        interfaces=interfaces,
        point_interfaces=point_interfaces,
        node_volumes=node_volumes,
        tied_nodes=tied_nodes,
        raw=raw,
    )
    _validate(mesh)
    return mesh


def _p1_gradients(nodes: np.ndarray, tris: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """Constant gradients of P1 basis functions, shape (T, 3, 2)."""
    g = np.empty((len(tris), 3, 2))
    p = nodes[tris]  # (T, 3, 2)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        g[:, a, 0] = p[:, b, 1] - p[:, c, 1]
        g[:, a, 1] = p[:, c, 0] - p[:, b, 0]
    g /= (2.0 * areas)[:, None, None]
    return g


def _validate(mesh: MdMesh) -> None:
    m = mesh.matrix
    if np.any(m.cell_measures <= 0):
        raise MeshError("nonpositive cell measure")
    if not np.allclose(np.linalg.norm(m.face_normal, axis=1), 1.0, atol=1e-12):
        raise MeshError("non-unit face normal")
    # Matrix connectivity across interior faces.
    if m.num_cells > 1:
        parent = np.arange(m.num_cells)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i in m.interior_faces:
            a, b = find(m.face_owner[i]), find(m.face_neigh[i])
            parent[a] = b
        roots = {find(c) for c in range(m.num_cells)}
        if len(roots) > 1:
            raise MeshError("matrix subdomain is disconnected by the fracture network")
    # Wall faces map one-to-one onto mortar cells and sides align with n_l.
    seen = set()
    for itf in mesh.interfaces:
        f = mesh.fractures[itf.lower_id - 1]
        if itf.num_cells != f.num_cells:
            raise MeshError("mortar cells not in bijection with fracture cells")
        if abs(itf.mortar_measures.sum() - f.cell_measures.sum()) > 1e-12 * max(
            1.0, f.cell_measures.sum()
        ):
            raise MeshError("interface measure mismatch")
        for c, wf in enumerate(itf.wall_faces):
            if wf in seen:
                raise MeshError("wall face mapped to two mortar cells")
            seen.add(int(wf))
            n_h = m.face_normal[wf]
            n_l = f.normals[c]
            want = n_l if itf.side == "j" else -n_l
            if not np.allclose(n_h, want, atol=1e-9):
                raise MeshError("interface side label inconsistent with fracture normal")
    for f in mesh.fractures:
        if f.num_cells < 1:
            raise MeshError("fracture subdomain without cells")


# ---------------------------------------------------------------------------
# Structured builder
# ---------------------------------------------------------------------------

def build_structured_mesh(
    domain: tuple[float, float, float, float],
    fractures: FractureNetwork | None = None,
    h: float = 1.0,
) -> MdMesh:
    """Build a conforming mixed-dimensional mesh on a rectangle.

    The rectangle ``(x0, y0, x1, y1)`` is covered by an ``nx`` x ``ny`` lattice
    of squares, each split into two triangles with alternating diagonals (the
    alternation makes the two-point flux scheme exact for linear pressure
    fields).  Fractures must be axis-aligned with endpoints on the lattice;
    oblique networks have to be supplied through :func:`load_mesh`.

    Args:
        domain: rectangle corners in meters.
        fractures: axis-aligned fracture segments, or None.
        h: target cell size; the actual spacing is the nearest divisor.
    """
    x0, y0, x1, y1 = map(float, domain)
    if x1 <= x0 or y1 <= y0:
        raise MeshError("degenerate domain rectangle")
    if h <= 0:
        raise MeshError("cell size must be positive")
    nx = max(1, round((x1 - x0) / h))
    ny = max(1, round((y1 - y0) / h))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny

    def node_id(ix: int, iy: int) -> int:
        return iy * (nx + 1) + ix

    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    nodes = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)

    tris = []
    for iy in range(ny):
        for ix in range(nx):
            n00 = node_id(ix, iy)
            n10 = node_id(ix + 1, iy)
            n01 = node_id(ix, iy + 1)
            n11 = node_id(ix + 1, iy + 1)
            if (ix + iy) % 2 == 0:
                tris += [(n00, n10, n11), (n00, n11, n01)]
            else:
                tris += [(n00, n10, n01), (n10, n11, n01)]
    tris = np.asarray(tris, dtype=np.int64)

    facets: list[tuple[int, int, int]] = []
    for fid, (pa, pb) in enumerate(fractures.segments if fractures else ()):
        ia = _snap(pa, x0, y0, hx, hy, nx, ny)
        ib = _snap(pb, x0, y0, hx, hy, nx, ny)
        if ia[0] != ib[0] and ia[1] != ib[1]:
            raise MeshError(
                f"fracture {fid} is not axis-aligned; build oblique networks "
                "externally and import them with load_mesh"
            )
        if ia == ib:
            raise MeshError(f"fracture {fid} has zero length after snapping")
        if ia[0] == ib[0]:  # vertical
            ix = ia[0]
            lo, hi = sorted((ia[1], ib[1]))
            for iy in range(lo, hi):
                facets.append((node_id(ix, iy), node_id(ix, iy + 1), fid))
        else:  # horizontal
            iy = ia[1]
            lo, hi = sorted((ia[0], ib[0]))
            for ix in range(lo, hi):
                facets.append((node_id(ix, iy), node_id(ix + 1, iy), fid))

    btags: dict[tuple[int, int], str] = {}
    for ix in range(nx):
        btags[_edge_key(node_id(ix, 0), node_id(ix + 1, 0))] = "bottom"
        btags[_edge_key(node_id(ix, ny), node_id(ix + 1, ny))] = "top"
    for iy in range(ny):
        btags[_edge_key(node_id(0, iy), node_id(0, iy + 1))] = "left"
        btags[_edge_key(node_id(nx, iy), node_id(nx, iy + 1))] = "right"

    raw = _raw_payload(nodes, tris, facets, btags)
    return _assemble_mesh(nodes, tris, facets, btags, raw)


def _snap(p, x0, y0, hx, hy, nx, ny) -> tuple[int, int]:
    fx = (p[0] - x0) / hx
    fy = (p[1] - y0) / hy
    ix, iy = round(fx), round(fy)
    if not (0 <= ix <= nx and 0 <= iy <= ny):
        raise MeshError(f"fracture endpoint {p} outside the domain")
    off = float(np.hypot((fx - ix) * hx, (fy - iy) * hy))
    if off > 0.5 * min(hx, hy):
        raise MeshError(
            f"fracture endpoint {p} is more than h/2 off the mesh lattice"
        )
    if off > 1e-9 * min(hx, hy):
        warnings.warn(f"fracture endpoint {p} snapped to the lattice", stacklevel=3)
    return int(ix), int(iy)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _raw_payload(nodes, tris, facets, btags) -> dict:
    # Boundary tag keys refer to the lexicographically sorted list of
    # single-sided (boundary) edges of the unsplit triangulation.
    edge_count: dict[tuple[int, int], int] = {}
    for t in range(len(tris)):
        for loc in range(3):
            k = _edge_key(int(tris[t, loc]), int(tris[t, (loc + 1) % 3]))
            edge_count[k] = edge_count.get(k, 0) + 1
    facet_keys = {_edge_key(a, b) for a, b, _ in facets}
    bedges = sorted(k for k, c in edge_count.items() if c == 1 and k not in facet_keys)
    tags = {}
    for i, k in enumerate(bedges):
        if k in btags:
            tags[str(i)] = btags[k]
    return {
        "nodes": [[float(x), float(y)] for x, y in np.asarray(nodes)],
        "cells_2d": [[int(a), int(b), int(c)] for a, b, c in np.asarray(tris)],
        "fracture_facets": [
            {"nodes": [int(a), int(b)], "fracture_id": int(fid)} for a, b, fid in facets
        ],
        "boundary_tags": tags,
    }


def save_mesh(mesh: MdMesh, path) -> None:
    """Serialize the unsplit triangulation to the JSON mesh schema.

    Schema: ``{nodes: [[x, y], ...], cells_2d: [[n0, n1, n2], ...],
    fracture_facets: [{nodes: [a, b], fracture_id}, ...],
    boundary_tags: {face_index: tag}}`` with coordinates in meters.
    ``face_index`` enumerates the boundary edges of the triangulation sorted
    lexicographically by their (min, max) node pair.
    """
    with open(path, "w") as fh:
        json.dump(mesh.raw, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_mesh(path) -> MdMesh:
    """Load and validate a mesh from the JSON schema of :func:`save_mesh`."""
    with open(path) as fh:
        data = json.load(fh)
    for key in ("nodes", "cells_2d", "fracture_facets", "boundary_tags"):
        if key not in data:
            raise MeshError(f"mesh file missing '{key}'")
    nodes = np.asarray(data["nodes"], dtype=float)
    if len(data["cells_2d"]) == 0:
        raise MeshError("empty cell list")
    tris = np.asarray(data["cells_2d"], dtype=np.int64)
    facets = [
        (int(f["nodes"][0]), int(f["nodes"][1]), int(f["fracture_id"]))
        for f in data["fracture_facets"]
    ]
    # Rebuild boundary-edge enumeration to translate tag keys.
    edge_count: dict[tuple[int, int], int] = {}
    for t in range(len(tris)):
        for loc in range(3):
            k = _edge_key(int(tris[t, loc]), int(tris[t, (loc + 1) % 3]))
            edge_count[k] = edge_count.get(k, 0) + 1
    facet_keys = {_edge_key(a, b) for a, b, _ in facets}
    for k in sorted(facet_keys):
        if edge_count.get(k, 0) != 2:
            raise MeshError(f"unpaired fracture facet {k}")
    bedges = sorted(k for k, c in edge_count.items() if c == 1 and k not in facet_keys)
    btags: dict[tuple[int, int], str] = {}
    for key, tag in data["boundary_tags"].items():
        idx = int(key)
        if not 0 <= idx < len(bedges):
            raise MeshError(f"boundary tag index {idx} out of range")
        btags[bedges[idx]] = str(tag)
    raw = _raw_payload(nodes, tris, facets, btags)
    return _assemble_mesh(nodes, tris, facets, btags, raw)
