"""Gmsh MSH 2.2 ASCII reader and writer.

Only the sections needed for quadrilateral surface meshes are handled:
``$MeshFormat``, ``$PhysicalNames``, ``$Nodes`` and ``$Elements``.
Quadrangles (type 3) become elements; lines (type 1) carry edge tags
through the name of their physical group; points (type 15) are ignored.
Node ids are renumbered to consecutive zero-based rows.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .mesh import Provenance, SurfaceMesh, TAG_NAMES, _boundary_edges

QUAD, LINE, POINT = 3, 1, 15
NODES_PER_TYPE = {LINE: 2, QUAD: 4, POINT: 1}
SURFACE_NAME = "surface"


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    @property
    def lineno(self) -> int:
        return self.pos  # 1-based number of the line last returned

    def next(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise ParseError("unexpected end of file", self.pos)

    def expect(self, token: str) -> None:
        line = self.next()
        if line != token:
            raise ParseError(f"expected {token}, found {line!r}", self.lineno)

    def count(self) -> int:
        line = self.next()
        try:
            n = int(line)
        except ValueError:
            raise ParseError(f"expected an entry count, found {line!r}", self.lineno) from None
        if n < 0:
            raise ParseError("negative entry count", self.lineno)
        return n


def _numbers(line: str, kind, where: int, what: str):
    try:
        return [kind(tok) for tok in line.split()]
    except ValueError:
        raise ParseError(f"malformed {what}: {line!r}", where) from None


def parse_msh(data: str | bytes) -> SurfaceMesh:
    """Parse MSH 2.2 ASCII text into a mesh without normals."""
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not an ASCII file ({exc.reason})") from None
    src = _Lines(data)
    names: dict[int, str] = {}
    node_ids: dict[int, int] = {}
    positions: list[list[float]] = []
    quads: list[tuple[list[int], int]] = []
    lines: list[tuple[list[int], int, int]] = []
    seen_format = False

    while True:
        try:
            header = src.next()
        except ParseError:
            break
        where = src.lineno
        if header == "$MeshFormat":
            parts = src.next().split()
            if len(parts) < 3 or parts[0] not in ("2.2", "2.2.0") or parts[1] != "0":
                raise ParseError(f"unsupported format {' '.join(parts)!r}; need '2.2 0 8'", src.lineno)
            src.expect("$EndMeshFormat")
            seen_format = True
        elif not seen_format:
            raise ParseError("file must start with $MeshFormat", where)
        elif header == "$PhysicalNames":
            for _ in range(src.count()):
                line = src.next()
                head, _, rest = line.partition('"')
                vals = _numbers(head, int, src.lineno, "physical name")
                if len(vals) != 2 or not rest.endswith('"'):
                    raise ParseError(f"malformed physical name: {line!r}", src.lineno)
                names[vals[1]] = rest[:-1]
            src.expect("$EndPhysicalNames")
        elif header == "$Nodes":
            for _ in range(src.count()):
                vals = _numbers(src.next(), float, src.lineno, "node")
                if len(vals) != 4:
                    raise ParseError("node line needs 'id x y z'", src.lineno)
                nid = int(vals[0])
                if nid in node_ids:
                    raise ParseError(f"duplicate node id {nid}", src.lineno)
                node_ids[nid] = len(positions)
                positions.append(vals[1:])
            src.expect("$EndNodes")
        elif header == "$Elements":
            for _ in range(src.count()):
                vals = _numbers(src.next(), int, src.lineno, "element")
                if len(vals) < 3 or len(vals) < 3 + vals[2]:
                    raise ParseError("truncated element line", src.lineno)
                eid, etype, ntags = vals[:3]
                if etype not in NODES_PER_TYPE:
                    raise ParseError(f"element {eid} has unsupported type {etype} (only quadrangles)", src.lineno)
                tags = vals[3 : 3 + ntags]
                conn = vals[3 + ntags :]
                if len(conn) != NODES_PER_TYPE[etype]:
                    raise ParseError(f"element {eid}: expected {NODES_PER_TYPE[etype]} nodes", src.lineno)
                missing = [n for n in conn if n not in node_ids]
                if missing:
                    raise ParseError(f"element {eid} references undefined node {missing[0]}", src.lineno)
                physical = tags[0] if tags else 0
                rows = [node_ids[n] for n in conn]
                if etype == QUAD:
                    quads.append((rows, src.lineno))
                elif etype == LINE:
                    lines.append((rows, physical, src.lineno))
            src.expect("$EndElements")
        elif header.startswith("$"):
            end = "$End" + header[1:]
            while src.next() != end:
                pass
        else:
            raise ParseError(f"unexpected content {header!r}", where)

    if not seen_format:
        raise ParseError("missing $MeshFormat section", 1)
    if not quads:
        raise ParseError("no quadrangle elements found", src.lineno)
    elements = np.array([q for q, _ in quads], dtype=np.int64)
    boundary = {tuple(sorted(e)): tuple(e) for e in _boundary_edges(elements).tolist()}
    edge_tags: dict[str, list[tuple[int, int]]] = {}
    for rows, physical, where in lines:
        name = names.get(physical)
        if name is None:
            continue
        key = tuple(sorted(rows))
        if key not in boundary:
            raise ParseError(f"tagged line {rows} is not a boundary edge", where)
        edge_tags.setdefault(name, []).append(boundary[key])
    return SurfaceMesh(
        positions=np.array(positions, dtype=float),
        elements=elements,
        normals=None,
        edge_tags={k: np.array(v, dtype=np.int64) for k, v in edge_tags.items()},
        provenance=Provenance("imported"),
    )


def read_msh(path) -> SurfaceMesh:
    with open(path, "rb") as fh:
        return parse_msh(fh.read())


def format_msh(mesh: SurfaceMesh) -> str:
    """MSH 2.2 text; coordinates use 17 significant digits so they round-trip."""
    tag_names = [t for t in TAG_NAMES if t in mesh.edge_tags] + sorted(set(mesh.edge_tags) - set(TAG_NAMES))
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(tag_names) + 1)]
    for i, name in enumerate(tag_names, start=1):
        out.append(f'1 {i} "{name}"')
    surface_id = len(tag_names) + 1
    out += [f'2 {surface_id} "{SURFACE_NAME}"', "$EndPhysicalNames", "$Nodes", str(mesh.n_nodes)]
    out += [f"{i + 1} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(mesh.positions.tolist())]
    out.append("$EndNodes")
    records = []
    for i, name in enumerate(tag_names, start=1):
        for a, b in mesh.edge_tags[name].tolist():
            records.append(f"{LINE} 2 {i} {i} {a + 1} {b + 1}")
    for conn in mesh.elements.tolist():
        records.append(f"{QUAD} 2 {surface_id} 1 " + " ".join(str(n + 1) for n in conn))
    out += ["$Elements", str(len(records))]
    out += [f"{k} {r}" for k, r in enumerate(records, start=1)]
    out.append("$EndElements")
    return "\n".join(out) + "\n"


def format_normals(mesh: SurfaceMesh) -> str:
    """Normals sidecar: one 'node_id nx ny nz' line per node, 1-based ids."""
    if mesh.normals is None:
        raise ValueError("mesh has no normals")
    return "".join(f"{i + 1} {x:.17g} {y:.17g} {z:.17g}\n" for i, (x, y, z) in enumerate(mesh.normals.tolist()))


def parse_normals(text: str, n_nodes: int) -> np.ndarray:
    normals = np.full((n_nodes, 3), np.nan)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        vals = line.split()
        try:
            nid = int(vals[0])
            vec = [float(v) for v in vals[1:]]
        except (ValueError, IndexError):
            raise ParseError(f"malformed normal: {line!r}", lineno) from None
        if len(vec) != 3 or not 1 <= nid <= n_nodes:
            raise ParseError(f"malformed normal: {line!r}", lineno)
        normals[nid - 1] = vec
    if np.isnan(normals).any():
        raise ParseError("normals file does not cover every node")
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(norm == 0.0):
        raise ParseError("zero-length normal")
    return normals / norm
