"""Output writers: time-series CSV, legacy VTK snapshots, run manifest."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .stepper import SERIES_COLUMNS

_INT_COLUMNS = {"step", "case_id", "gmres_psi_iters", "gmres_A_iters"}


class OutputError(OSError):
    pass


def _fmt(key, value) -> str:
    if key in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def write_timeseries(series, path) -> None:
    """One CSV row per step, floats at 17 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in series:
                w.writerow([_fmt(k, row[k]) for k in SERIES_COLUMNS])
    except OSError as exc:
        raise OutputError(f"cannot write time series to {path}: {exc}") from exc


def read_timeseries(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in _INT_COLUMNS else float(v)) for k, v in row.items()} for row in rows]


_P2_SUBTRIANGLES = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]])


def snapshot_cells(mesh, dofmap) -> tuple[np.ndarray, np.ndarray]:
    """Points and linear triangle cells used to write a field.

    P2 triangles are split into four through their edge midpoints, so every
    dof is a point of the output grid.
    """
    if dofmap.order == 1:
        return mesh.vertices, mesh.triangles
    cells = dofmap.cell_dofs[:, _P2_SUBTRIANGLES].reshape(-1, 3)
    return dofmap.coords, cells


def write_snapshot(psi, A, mesh, dofmap, path, title: str = "gsav_gl snapshot") -> None:
    """Legacy ASCII VTK unstructured grid with psi_re, psi_im, psi_abs, A_x, A_y."""
    pts, cells = snapshot_cells(mesh, dofmap)
    psi = np.asarray(psi)
    A = np.asarray(A)
    fields = {
        "psi_re": psi.real, "psi_im": psi.imag, "psi_abs": np.abs(psi),
        "A_x": A[0], "A_y": A[1],
    }
    path = Path(path)
    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {len(pts)} double\n")
            np.savetxt(fh, np.column_stack([pts, np.zeros(len(pts))]), fmt="%.17g")
            fh.write(f"CELLS {len(cells)} {4 * len(cells)}\n")
            np.savetxt(fh, np.column_stack([np.full(len(cells), 3), cells]), fmt="%d")
            fh.write(f"CELL_TYPES {len(cells)}\n")
            np.savetxt(fh, np.full(len(cells), 5), fmt="%d")
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, vals in fields.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, vals, fmt="%.17g")
    except OSError as exc:
        raise OutputError(f"cannot write snapshot to {path}: {exc}") from exc


def read_snapshot(path) -> dict:
    """Minimal reader for files produced by :func:`write_snapshot`."""
    lines = Path(path).read_text().split("\n")
    out: dict = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.loadtxt(lines[i + 1:i + 1 + n], ndmin=2)
            i += 1 + n
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.loadtxt(lines[i + 1:i + 1 + n], dtype=int, ndmin=2)[:, 1:]
            i += 1 + n
        elif parts[0] == "SCALARS":
            n = len(out["points"])
            out[parts[1]] = np.loadtxt(lines[i + 2:i + 2 + n], ndmin=1)
            i += 2 + n
        else:
            i += 1
    return out


def write_manifest(path, manifest: dict) -> None:
    missing = [f for f in manifest.get("outputs", []) if not Path(f).exists()]
    if missing:
        raise OutputError(f"manifest lists missing outputs: {missing}")
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
