"""Structured conforming triangulations of axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Mesh:
    """Conforming triangle mesh of a rectangle with tagged boundary edges.

    Attributes
    ----------
    vertices : (nv, 2) float array of vertex coordinates.
    triangles : (nt, 3) int array of counterclockwise vertex triples.
    boundary_edges : (ne, 2) int array of boundary vertex pairs.
    boundary_tags : tuple of side names ("left", "right", "bottom", "top"),
        one per boundary edge.
    h : largest element diameter.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    h: float

    def __post_init__(self):
        for arr in (self.vertices, self.triangles, self.boundary_edges):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_boundary_edges(self) -> int:
        return self.boundary_edges.shape[0]

    def bounds(self) -> tuple[float, float, float, float]:
        """Bounding box (xmin, xmax, ymin, ymax)."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(x.min()), float(x.max()), float(y.min()), float(y.max())


def signed_areas(mesh: Mesh) -> np.ndarray:
    """Signed area of every triangle (positive for counterclockwise)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def diameters(mesh: Mesh) -> np.ndarray:
    """Longest edge of every triangle."""
    p = mesh.vertices[mesh.triangles]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    return np.linalg.norm(e, axis=2).max(axis=1)


def build_rectangle(nx: int, ny: int,
                    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Triangulate [x0, x1] x [y0, y1] into nx-by-ny cells, two triangles each.

    Every cell is split along the diagonal running from its lower-left to its
    upper-right corner.  Boundary edges are tagged with the side they lie on;
    corner vertices belong to the edges of both adjacent sides.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    x0, x1, y0, y1 = map(float, extent)
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate extent {extent}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # row-major: vertex id = j*(nx+1) + i
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = (jj * (nx + 1) + ii).ravel()
    lr = ll + 1
    ul = ll + nx + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    # interleave so both triangles of a cell are adjacent in the ordering
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    edges = []
    tags = []
    for i in range(nx):
        edges.append((i, i + 1))
        tags.append("bottom")
    top0 = ny * (nx + 1)
    for i in range(nx):
        edges.append((top0 + i, top0 + i + 1))
        tags.append("top")
    for j in range(ny):
        edges.append((j * (nx + 1), (j + 1) * (nx + 1)))
        tags.append("left")
    for j in range(ny):
        edges.append((j * (nx + 1) + nx, (j + 1) * (nx + 1) + nx))
        tags.append("right")

    boundary_edges = np.array(edges, dtype=np.int64)
    mesh = Mesh(vertices=vertices, triangles=triangles,
                boundary_edges=boundary_edges, boundary_tags=tuple(tags), h=0.0)
    h = float(diameters(mesh).max())
    return Mesh(vertices=vertices, triangles=triangles,
                boundary_edges=boundary_edges, boundary_tags=tuple(tags), h=h)


def build_unit_square(n: int) -> Mesh:
    """Uniform n-by-n triangulation of the unit square (h = sqrt(2)/n)."""
    return build_rectangle(n, n)


def boundary_vertices(mesh: Mesh, tags) -> set:
    """Vertex ids lying on the given sides (corners belong to both sides)."""
    wanted = {tags} if isinstance(tags, str) else set(tags)
    unknown = wanted - set(SIDES)
    if unknown:
        raise ValueError(f"unknown side tags {sorted(unknown)}")
    out = set()
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag in wanted:
            out.add(int(a))
            out.add(int(b))
    return out


def _edge_use_counts(mesh: Mesh) -> dict:
    counts: dict = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def validate(mesh: Mesh, shape_ratio: float = 2.0) -> None:
    """Check mesh invariants; raise ValueError on the first violation.

    Checks: strictly positive triangle areas, edge conformity (every interior
    edge shared by exactly two triangles, boundary edges by exactly one and
    listed in boundary_edges), total area against the bounding box, and
    quasi-uniformity (diameter ratio at most shape_ratio).
    """
    areas = signed_areas(mesh)
    if not (areas > 0.0).all():
        bad = int(np.argmin(areas))
        raise ValueError(f"triangle {bad} has non-positive area {areas[bad]:g}")

    counts = _edge_use_counts(mesh)
    if max(counts.values()) > 2:
        raise ValueError("an edge is shared by more than two triangles")
    once = {e for e, c in counts.items() if c == 1}
    listed = {(int(min(a, b)), int(max(a, b))) for a, b in mesh.boundary_edges}
    if once != listed:
        raise ValueError("boundary_edges do not match the edges used exactly once")

    xmin, xmax, ymin, ymax = mesh.bounds()
    box = (xmax - xmin) * (ymax - ymin)
    if abs(areas.sum() - box) > 1e-12 * max(box, 1.0):
        raise ValueError(f"triangle areas sum to {areas.sum()!r}, bounding box is {box!r}")

    diam = diameters(mesh)
    ratio = float(diam.max() / diam.min())
    if ratio > shape_ratio * (1.0 + 1e-12):
        raise ValueError(f"diameter ratio {ratio:g} exceeds {shape_ratio:g}")
    if abs(mesh.h - diam.max()) > 1e-12 * mesh.h:
        raise ValueError(f"stored h={mesh.h!r} is not the max diameter {diam.max()!r}")


def write_text(mesh: Mesh, path) -> None:
    """Dump the mesh in a plain text format.

    First line: "nv nt ne".  Then nv lines "x y", nt lines "i j k",
    ne lines "i j tag".  Coordinates use repr-style full precision.
    """
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_boundary_edges}"]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{i} {j} {tag}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
