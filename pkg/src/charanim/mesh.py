"""Indexed triangle meshes with optional vertex colors and rest coordinates,
plus OBJ and binary-little-endian PLY I/O."""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import EmptyMeshError, ToolkitError


@dataclass
class TriMesh:
    """Triangle mesh. Faces with repeated indices or zero area are dropped at
    construction. The front view is the orthographic projection along -z onto
    the xy plane (the character faces +z)."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray = None
    rest_coords: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ToolkitError("face index out of range")
            distinct = ((f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2])
                        & (f[:, 0] != f[:, 2]))
            a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            f = f[distinct & (area2 > 0.0)]
        self.vertices = v
        self.faces = f
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(v):
                raise ToolkitError("colors must be per-vertex")
        if self.rest_coords is not None:
            self.rest_coords = np.asarray(self.rest_coords,
                                          dtype=np.float64).reshape(-1, 2)
            if len(self.rest_coords) != len(v):
                raise ToolkitError("rest coordinates must be per-vertex")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def is_empty(self):
        return self.n_vertices == 0 or self.n_faces == 0

    def bounds(self):
        if self.n_vertices == 0:
            raise EmptyMeshError("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def with_vertices(self, vertices):
        return TriMesh(vertices, self.faces.copy(),
                       None if self.colors is None else self.colors.copy(),
                       None if self.rest_coords is None else self.rest_coords.copy(),
                       dict(self.info))

    def edges(self):
        """Unique undirected edges as an (e, 2) array, lexicographically sorted."""
        e = np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                       self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_vertices(self):
        """Vertices on edges with exactly one incident face."""
        e = np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                       self.faces[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    def adjacency(self):
        """Symmetric vertex adjacency as a sparse boolean CSR matrix."""
        e = self.edges()
        n = self.n_vertices
        data = np.ones(2 * len(e), dtype=bool)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    def vertex_components(self):
        """(count, labels) of connected components in the edge graph."""
        return connected_components(self.adjacency(), directed=False)

    def face_normals(self, normalized=True):
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        if normalized:
            n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        return n

    def vertex_normals(self):
        """Area-weighted vertex normals (unit length; zero for lone vertices)."""
        fn = self.face_normals(normalized=False)
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.faces[:, k], fn)
        norm = np.linalg.norm(out, axis=1, keepdims=True)
        return np.where(norm > 0, out / np.maximum(norm, 1e-300), 0.0)


# ---------------------------------------------------------------------------
# OBJ

def save_obj(path, mesh: TriMesh) -> None:
    with open(path, "w") as f:
        for x, y, z in mesh.vertices:
            f.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a} {b} {c}\n")


def load_obj(path) -> TriMesh:
    verts = []
    faces = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------------------
# PLY (binary little endian; uchar red/green/blue when colored, float s/t for
# rest coordinates)

def save_ply(path, mesh: TriMesh) -> None:
    has_color = mesh.colors is not None
    has_rest = mesh.rest_coords is not None
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {mesh.n_vertices}",
              "property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
    if has_rest:
        header += ["property float s", "property float t"]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        v32 = mesh.vertices.astype("<f4")
        if has_color:
            c8 = np.clip(np.floor(mesh.colors * 255.0 + 0.5), 0, 255).astype(np.uint8)
        if has_rest:
            r32 = mesh.rest_coords.astype("<f4")
        for i in range(mesh.n_vertices):
            f.write(v32[i].tobytes())
            if has_color:
                f.write(c8[i].tobytes())
            if has_rest:
                f.write(r32[i].tobytes())
        for a, b, c in mesh.faces:
            f.write(struct.pack("<Biii", 3, a, b, c))


def load_ply(path) -> TriMesh:
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise ToolkitError(f"{path}: not a PLY file")
    lines = blob[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise ToolkitError(f"{path}: only binary little-endian PLY is supported")
    sizes = {"float": 4, "double": 8, "uchar": 1, "char": 1, "short": 2,
             "ushort": 2, "int": 4, "uint": 4}
    n_vert = n_face = 0
    vprops = []
    element = None
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n_vert = int(parts[2])
            elif element == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and element == "vertex":
            vprops.append((parts[1], parts[2]))

    pos = end + len(b"end_header\n")
    stride = sum(sizes[t] for t, _ in vprops)
    vdata = blob[pos:pos + n_vert * stride]
    pos += n_vert * stride
    offsets = {}
    off = 0
    for t, name in vprops:
        offsets[name] = (off, t)
        off += sizes[t]

    def column(name, dtype):
        o, t = offsets[name]
        fmt = {"float": "<f4", "double": "<f8", "uchar": "u1"}[t]
        raw = np.frombuffer(vdata, dtype=np.uint8).reshape(n_vert, stride)
        width = sizes[t]
        return raw[:, o:o + width].copy().view(fmt)[:, 0].astype(dtype)

    verts = np.stack([column(n, np.float64) for n in ("x", "y", "z")], axis=1)
    colors = None
    if all(n in offsets for n in ("red", "green", "blue")):
        colors = np.stack([column(n, np.float64) for n in ("red", "green", "blue")],
                          axis=1) / 255.0
    rest = None
    if "s" in offsets and "t" in offsets:
        rest = np.stack([column("s", np.float64), column("t", np.float64)], axis=1)

    faces = np.empty((n_face, 3), dtype=np.int64)
    for i in range(n_face):
        (count,) = struct.unpack_from("<B", blob, pos)
        if count != 3:
            raise ToolkitError(f"{path}: face {i} is not a triangle")
        faces[i] = struct.unpack_from("<iii", blob, pos + 1)
        pos += 1 + 12
    return TriMesh(verts, faces, colors, rest)


def save_mesh(path, mesh: TriMesh) -> None:
    path = str(path)
    if path.endswith(".obj"):
        save_obj(path, mesh)
    elif path.endswith(".ply"):
        save_ply(path, mesh)
    else:
        raise ToolkitError(f"unsupported mesh format: {path}")


def load_mesh(path) -> TriMesh:
    path = str(path)
    if path.endswith(".obj"):
        return load_obj(path)
    if path.endswith(".ply"):
        return load_ply(path)
    raise ToolkitError(f"unsupported mesh format: {path}")
