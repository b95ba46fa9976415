"""Legacy ASCII VTK export of P2 velocity / discontinuous P1 pressure fields.

Every element contributes its own six P2 nodes (points are not shared), split
into four linear triangles, so the element-wise pressure stays discontinuous
and the quadratic velocity is sampled at all of its nodes.
"""

import numpy as np

# Sub-triangles in local P2 numbering: vertices 0-2, midpoints 3-5 opposite 0-2.
SUBTRIANGLES = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2], [3, 4, 5]])


def write_vtk(path, sys, U, P, title="svdg fields"):
    mesh = sys.mesh
    nt = mesh.n_triangles
    pts = sys.node_coords[sys.element_nodes].reshape(-1, 2)
    coef = sys.element_coefficients(U)  # (nt, 2, 6)
    vel = coef.transpose(0, 2, 1).reshape(-1, 2)
    pv = P.reshape(nt, 3)
    # P1 pressure at the midpoints is the mean of the two edge vertices.
    pmid = 0.5 * np.stack([pv[:, 1] + pv[:, 2], pv[:, 2] + pv[:, 0], pv[:, 0] + pv[:, 1]], axis=1)
    prs = np.hstack([pv, pmid]).reshape(-1)
    cells = (SUBTRIANGLES[None] + 6 * np.arange(nt)[:, None, None]).reshape(-1, 3)
    npts = len(pts)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        np.savetxt(fh, np.column_stack([pts, np.zeros(npts)]), fmt="%.12g")
        fh.write(f"CELLS {len(cells)} {4 * len(cells)}\n")
        np.savetxt(fh, np.column_stack([np.full(len(cells), 3), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(fh, np.full(len(cells), 5), fmt="%d")
        fh.write(f"POINT_DATA {npts}\nVECTORS velocity double\n")
        np.savetxt(fh, np.column_stack([vel, np.zeros(npts)]), fmt="%.12g")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, prs, fmt="%.12g")
        fh.write("SCALARS speed double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, np.hypot(vel[:, 0], vel[:, 1]), fmt="%.12g")
