"""File formats: OFF meshes, labeled grid files, subject distance CSVs, and
atomic CSV/JSON output with run manifests."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .dataset import Hemisphere, SubjectDistances
from .geometry import Label, LabeledVoxelGrid, TriangleMesh


class InputError(Exception):
    """Malformed input file; carries the path and 1-based line number."""

    def __init__(self, path: str | os.PathLike, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def _content_lines(path: Path) -> list[tuple[int, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                out.append((no, text))
    return out


def _floats(path, no: int, tokens: Sequence[str], what: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise InputError(path, no, f"expected numbers for {what}, got {' '.join(tokens)!r}") from None


def _ints(path, no: int, tokens: Sequence[str], what: str) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise InputError(path, no, f"expected integers for {what}, got {' '.join(tokens)!r}") from None


def read_off(path: str | os.PathLike) -> TriangleMesh:
    """Read an ASCII OFF triangle mesh.  Degenerate triangles raise ValueError."""
    path = Path(path)
    lines = _content_lines(path)
    if not lines:
        raise InputError(path, 1, "empty file, expected OFF header")
    no, head = lines[0]
    tokens = head.split()
    if tokens[0] != "OFF":
        raise InputError(path, no, f"expected 'OFF' header, got {tokens[0]!r}")
    rest = lines[1:]
    if len(tokens) > 1:  # counts on the header line
        rest = [(no, " ".join(tokens[1:]))] + rest
    if not rest:
        raise InputError(path, no, "missing vertex/face counts line")
    no, counts_line = rest[0]
    counts = _ints(path, no, counts_line.split(), "counts")
    if len(counts) < 2 or min(counts[:2]) < 0:
        raise InputError(path, no, "counts line needs nonnegative vertex and face counts")
    nv, nf = counts[0], counts[1]
    body = rest[1:]
    if len(body) < nv + nf:
        last = body[-1][0] if body else no
        raise InputError(path, last, f"expected {nv} vertices and {nf} faces, file ends early")
    verts = np.empty((nv, 3))
    for i in range(nv):
        no, text = body[i]
        vals = _floats(path, no, text.split(), "vertex")
        if len(vals) < 3:
            raise InputError(path, no, "vertex line needs three coordinates")
        verts[i] = vals[:3]
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        no, text = body[nv + i]
        vals = _ints(path, no, text.split()[:4], "face")
        if len(vals) < 4 or vals[0] != 3:
            raise InputError(path, no, "face line must start with 3 followed by three vertex indices")
        if min(vals[1:]) < 0 or max(vals[1:]) >= nv:
            raise InputError(path, no, "face references a vertex index out of range")
        faces[i] = vals[1:4]
    return TriangleMesh(verts, faces)


def write_off(path: str | os.PathLike, mesh: TriangleMesh) -> None:
    buf = io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
    for v in mesh.vertices:
        buf.write(" ".join(repr(float(x)) for x in v) + "\n")
    for t in mesh.triangles:
        buf.write("3 " + " ".join(str(int(i)) for i in t) + "\n")
    atomic_write_text(path, buf.getvalue())


def read_grid(path: str | os.PathLike) -> LabeledVoxelGrid:
    """Read a grid file: ``origin``, ``spacing`` and ``dims`` header lines, then ``i,j,k,label`` rows."""
    path = Path(path)
    lines = _content_lines(path)
    header: dict[str, tuple[int, list[str]]] = {}
    pos = 0
    while pos < len(lines):
        no, text = lines[pos]
        key = text.split()[0].lower()
        if key not in ("origin", "spacing", "dims"):
            break
        header[key] = (no, text.split()[1:])
        pos += 1
    for key in ("origin", "spacing", "dims"):
        if key not in header:
            raise InputError(path, lines[pos][0] if pos < len(lines) else None, f"missing '{key}' header line")
    no, tok = header["origin"]
    origin = _floats(path, no, tok, "origin")
    if len(origin) != 3:
        raise InputError(path, no, "origin needs three coordinates")
    no, tok = header["spacing"]
    spacing = _floats(path, no, tok, "spacing")
    if len(spacing) != 1 or not spacing[0] > 0:
        raise InputError(path, no, "spacing needs one positive value")
    no, tok = header["dims"]
    dims = _ints(path, no, tok, "dims")
    if len(dims) != 3 or min(dims) < 1:
        raise InputError(path, no, "dims needs three positive integers")
    labels = np.zeros(dims, dtype=np.int8)
    for no, text in lines[pos:]:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise InputError(path, no, "voxel row must be i,j,k,label")
        i, j, k = _ints(path, no, parts[:3], "voxel index")
        if not (0 <= i < dims[0] and 0 <= j < dims[1] and 0 <= k < dims[2]):
            raise InputError(path, no, f"voxel index ({i},{j},{k}) outside dims")
        try:
            lab = Label.parse(parts[3])
        except ValueError as exc:
            raise InputError(path, no, str(exc)) from None
        if lab is Label.BACKGROUND:
            raise InputError(path, no, "label must be GM, WM or CSF")
        labels[i, j, k] = lab
    return LabeledVoxelGrid(origin, spacing[0], tuple(dims), labels)


def write_grid(path: str | os.PathLike, grid: LabeledVoxelGrid) -> None:
    buf = io.StringIO()
    buf.write("origin " + " ".join(repr(float(x)) for x in grid.origin) + "\n")
    buf.write(f"spacing {float(grid.spacing)!r}\n")
    buf.write("dims " + " ".join(str(d) for d in grid.dims) + "\n")
    for idx in zip(*np.nonzero(grid.labels)):
        buf.write(",".join(str(int(i)) for i in idx) + f",{Label(int(grid.labels[idx])).name}\n")
    atomic_write_text(path, buf.getvalue())


SUBJECT_COLUMNS = ("subject_id", "group", "hemisphere", "distance_mm")


def read_subject_csv(path: str | os.PathLike) -> list[SubjectDistances]:
    """Read per-voxel distance rows; subjects keep first-appearance order."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(path, 1, "empty file") from None
        missing = [c for c in SUBJECT_COLUMNS if c not in header]
        if missing:
            raise InputError(path, 1, f"missing column(s): {', '.join(missing)}")
        col = {c: header.index(c) for c in SUBJECT_COLUMNS}
        meta: dict[tuple[str, str], tuple[str, int]] = {}
        values: dict[tuple[str, str], list[float]] = {}
        for no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise InputError(path, no, f"expected {len(header)} fields, got {len(row)}")
            sid = row[col["subject_id"]].strip()
            group = row[col["group"]].strip()
            try:
                hemi = Hemisphere.parse(row[col["hemisphere"]])
            except ValueError as exc:
                raise InputError(path, no, str(exc)) from None
            try:
                d = float(row[col["distance_mm"]])
            except ValueError:
                raise InputError(path, no, f"bad distance {row[col['distance_mm']]!r}") from None
            key = (sid, hemi.value)
            if key in meta and meta[key][0] != group:
                raise InputError(path, no, f"subject {sid!r} listed under groups {meta[key][0]!r} and {group!r}")
            meta.setdefault(key, (group, no))
            values.setdefault(key, []).append(d)
    return [SubjectDistances(sid, meta[(sid, h)][0], Hemisphere(h), np.array(values[(sid, h)]))
            for sid, h in values]


# --------------------------------------------------------------------------
# output


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value) -> str:
    """CSV cell text; NaN and None become empty cells."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return ""
        return format(v, ".12g")
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, csv_text(header, list(rows)))


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest_path(output: str | os.PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(output: str | os.PathLike, command: str, config: Mapping,
                   inputs: Sequence[str | os.PathLike] = (), seed: int | None = None,
                   outputs: Sequence[str | os.PathLike] = ()) -> Path:
    """Write ``<output>.manifest.json`` describing how ``output`` was produced."""
    doc = {
        "command": command,
        "config": {k: _jsonable(v) for k, v in config.items()},
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs] or [str(output)],
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    target = manifest_path(output)
    atomic_write_text(target, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return target


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if hasattr(v, "value"):
        return v.value
    return str(v)


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Plain ``key=value`` lines; ``#`` starts a comment.  Keys use flag spelling."""
    path = Path(path)
    out: dict[str, str] = {}
    for no, text in _content_lines(path):
        if "=" not in text:
            raise InputError(path, no, "expected key=value")
        key, value = text.split("=", 1)
        key = key.strip().lstrip("-").replace("_", "-").lower()
        if not key:
            raise InputError(path, no, "empty key")
        out[key] = value.strip()
    return out
