"""Plain-text storage for pattern sets, generators, constraint graphs and layouts.

Every file starts with a ``# key=value ...`` header line.  Integer matrices
follow as CSV rows; constraint graphs follow as ``row,col,value`` triplets
with values written via ``repr`` so they reload bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dataset import Generator, GeneratorSpec, PatternMatrix
from .errors import ValidationError
from .learner import ConstraintGraph
from .recall import MultiLevelNetwork

LAYOUT_FILE = "layout.json"

_SPEC_KEYS = ("n", "L", "k", "k_g", "S", "gamma_gen", "upsilon", "seed", "d_star_cap",
              "rejection_free", "correctable_blocks")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def _write_header(fh, fields: dict) -> None:
    fh.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in fields.items()) + "\n")


def _read_header(line: str) -> dict:
    if not line.startswith("#"):
        raise ValidationError("missing '# key=value' header line")
    out = {}
    for item in line[1:].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"malformed header field {item!r}")
        out[key] = value
    return out


def _spec_fields(spec: GeneratorSpec) -> dict:
    return {k: getattr(spec, k) for k in _SPEC_KEYS}


def _spec_from(header: dict) -> GeneratorSpec:
    try:
        kw = {k: int(header[k]) for k in _SPEC_KEYS}
    except KeyError as err:
        raise ValidationError(f"header lacks {err.args[0]!r}") from None
    kw["rejection_free"] = bool(kw["rejection_free"])
    kw["correctable_blocks"] = bool(kw["correctable_blocks"])
    return GeneratorSpec(**kw)


def _write_int_matrix(path, header: dict, M) -> None:
    with open(path, "w", newline="") as fh:
        _write_header(fh, header)
        csv.writer(fh, lineterminator="\n").writerows(np.asarray(M).tolist())


def _read_int_matrix(path):
    with open(path, newline="") as fh:
        header = _read_header(fh.readline())
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    return header, rows


def save_dataset(path, patterns: PatternMatrix) -> None:
    header = _spec_fields(patterns.provenance)
    header.update(C=patterns.C, rejected=patterns.rejected)
    _write_int_matrix(path, header, patterns.X)


def load_dataset(path) -> PatternMatrix:
    header, rows = _read_int_matrix(path)
    spec = _spec_from(header)
    X = np.array(rows, dtype=np.int64).reshape(-1, spec.n)
    return PatternMatrix(X=X, messages=None, provenance=spec, kept=X.shape[0],
                         rejected=int(header.get("rejected", 0)))


def save_generator(path, gen: Generator) -> None:
    header = _spec_fields(gen.spec)
    header["attempts"] = gen.attempts
    _write_int_matrix(path, header, gen.G)


def load_generator(path) -> Generator:
    header, rows = _read_int_matrix(path)
    spec = _spec_from(header)
    G = np.array(rows, dtype=np.int64).reshape(spec.k_g, spec.n)
    return Generator(G=G, spec=spec, attempts=int(header.get("attempts", 1)))


def save_graph(path, graph: ConstraintGraph) -> None:
    header = {
        "m": graph.m,
        "n": graph.n,
        "norm_x": float(graph.norm_x),
        "params_hash": graph.params_hash or "-",
        "seeds": list(graph.seeds),
        "iterations": list(graph.iterations),
        "residuals": [float(r) for r in graph.residuals],
    }
    rows, cols, vals = graph.triplets()
    with open(path, "w", newline="") as fh:
        _write_header(fh, header)
        fh.write("row,col,value\n")
        for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            fh.write(f"{r},{c},{v!r}\n")


def _split(value: str, kind):
    return [kind(v) for v in value.split(";")] if value else []


def load_graph(path) -> ConstraintGraph:
    with open(path, newline="") as fh:
        header = _read_header(fh.readline())
        reader = csv.reader(fh)
        if next(reader, None) != ["row", "col", "value"]:
            raise ValidationError(f"{path}: expected a 'row,col,value' column line")
        m, n = int(header["m"]), int(header["n"])
        W = np.zeros((m, n))
        for r, c, v in reader:
            W[int(r), int(c)] = float(v)
    params_hash = header.get("params_hash", "")
    return ConstraintGraph(
        W=W,
        residuals=np.array(_split(header.get("residuals", ""), float)),
        norm_x=float(header["norm_x"]),
        seeds=_split(header.get("seeds", ""), int),
        iterations=_split(header.get("iterations", ""), int),
        params_hash="" if params_hash == "-" else params_hash,
    )


def save_layout(directory, local_files, global_file, blocks, extra: dict | None = None) -> Path:
    layout = {
        "locals": [str(f) for f in local_files],
        "global": str(global_file),
        "blocks": [list(map(int, b)) for b in blocks],
    }
    layout.update(extra or {})
    path = Path(directory) / LAYOUT_FILE
    path.write_text(json.dumps(layout, indent=2, sort_keys=True) + "\n")
    return path


def read_layout(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / LAYOUT_FILE
    layout = json.loads(path.read_text())
    for key in ("locals", "global", "blocks"):
        if key not in layout:
            raise ValidationError(f"{path}: layout lacks {key!r}")
    layout["_dir"] = str(path.parent)
    return layout


def load_network(path) -> MultiLevelNetwork:
    """Assemble a two-level network from a layout manifest (or its directory).

    Graph file names in the manifest are resolved relative to the manifest.
    """
    layout = read_layout(path)
    base = Path(layout["_dir"])
    locals_ = [load_graph(base / f) for f in layout["locals"]]
    glob = load_graph(base / layout["global"])
    return MultiLevelNetwork(locals_, glob, [tuple(b) for b in layout["blocks"]])
