"""Legacy ASCII VTK output (unstructured grid, triangle cells).

The text format is stable across writes: floats are printed with repr,
so identical states produce identical files.
"""

from __future__ import annotations

__all__ = ["write_fields"]


def _f(x) -> str:
    return repr(float(x))


def write_fields(path, mesh, u, v, title: str = "crackdyn fields") -> None:
    """Write a snapshot with point vector fields u and v.

    2D points and vectors are zero-padded to three components as the
    format requires.  Cell type 5 is the linear triangle.
    """
    verts = mesh.vertices
    cells = mesh.cells
    n = len(verts)
    nc = len(cells)
    un = u.reshape(n, mesh.dim)
    vn = v.reshape(n, mesh.dim)
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255] or "fields",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for p in verts:
        lines.append(f"{_f(p[0])} {_f(p[1])} 0.0")
    lines.append(f"CELLS {nc} {4 * nc}")
    for c in cells:
        lines.append(f"3 {int(c[0])} {int(c[1])} {int(c[2])}")
    lines.append(f"CELL_TYPES {nc}")
    lines.extend("5" for _ in range(nc))
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS u double")
    for row in un:
        lines.append(f"{_f(row[0])} {_f(row[1])} 0.0")
    lines.append("VECTORS v double")
    for row in vn:
        lines.append(f"{_f(row[0])} {_f(row[1])} 0.0")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
