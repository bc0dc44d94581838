"""Legacy ASCII VTK output of nodal P1 fields."""
from __future__ import annotations

import numpy as np

from .mesh import Mesh

_VTK_TRIANGLE = 5


def write_vtk(path, mesh: Mesh, fields: dict, title: str = "algstab") -> None:
    """Write an UNSTRUCTURED_GRID file with one POINT_DATA scalar per field."""
    n = mesh.n_nodes
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    t = mesh.triangles
    lines.append(f"CELLS {len(t)} {4 * len(t)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in t]
    lines.append(f"CELL_TYPES {len(t)}")
    lines += [str(_VTK_TRIANGLE)] * len(t)
    lines.append(f"POINT_DATA {n}")
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise ValueError(f"field {name!r} must have one value per node")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.17g}" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_scalars(path) -> dict:
    """Point scalars from a file written by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {}
    k = 0
    n = None
    while k < len(tokens):
        line = tokens[k].strip()
        if line.startswith("POINT_DATA"):
            n = int(line.split()[1])
        elif line.startswith("SCALARS") and n is not None:
            name = line.split()[1]
            out[name] = np.array([float(v) for v in tokens[k + 2:k + 2 + n]])
            k += 1 + n
        k += 1
    return out
