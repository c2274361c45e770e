"""Legacy-ASCII VTK output of nodal fields on the triangle mesh."""

from __future__ import annotations

import os

import numpy as np

__all__ = ["dump_field"]

_VTK_TRIANGLE = 5


def dump_field(mesh, state, path, which=("u", "v", "sigma")) -> str:
    """Write an unstructured-grid file with the state's nodal fields.

    ``which`` selects among POINT_DATA scalars 'u', 'v' and vector 'sigma';
    entries whose field is absent from the state are skipped.  Returns the
    written path.
    """
    fields = []
    for name in which:
        if name not in ("u", "v", "sigma"):
            raise ValueError(f"unknown field {name!r}; choose among u, v, sigma")
        data = getattr(state, name)
        if data is not None:
            fields.append((name, np.asarray(data, dtype=float)))
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as fp:
        fp.write("# vtk DataFile Version 2.0\n")
        fp.write(f"chemorepfem fields at step {state.step} (t={state.time!r})\n")
        fp.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fp.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fp.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        fp.write(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}\n")
        for a, b, c in mesh.elements:
            fp.write(f"3 {a} {b} {c}\n")
        fp.write(f"CELL_TYPES {mesh.n_elements}\n")
        fp.write("\n".join([str(_VTK_TRIANGLE)] * mesh.n_elements) + "\n")
        if fields:
            fp.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, data in fields:
            if data.ndim == 1:
                fp.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fp.write("\n".join(repr(float(val)) for val in data) + "\n")
            else:
                fp.write(f"VECTORS {name} double\n")
                for vx, vy in data:
                    fp.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
    return path
