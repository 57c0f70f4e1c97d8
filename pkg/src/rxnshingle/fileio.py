"""Dataset, coordinate and checkpoint file formats.

Every write goes to a temporary file in the target directory and is then
renamed over the destination, so readers never observe a partial file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .exceptions import CheckpointError, MissingColumn, ParseError, RxnShingleError
from .molecule import Conformer, LabeledReaction, Reaction
from .smiles import write_smiles_with_order

Format = Literal["csv", "jsonl"]

CHECKPOINT_MAGIC = b"RDSH"
CHECKPOINT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


# ----------------------------------------------------------------------------
# primitives


def atomic_write(path, data: bytes | str):
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    """Sorted keys, compact separators, shortest round-trip floats, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, obj):
    atomic_write(path, canonical_json(obj) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def version_string() -> str:
    from . import __version__

    return f"rxnshingle-{__version__}"


# ----------------------------------------------------------------------------
# datasets


def _infer_format(path) -> Format:
    suffix = Path(path).suffix.lower()
    return "jsonl" if suffix in (".jsonl", ".ndjson") else "csv"


def _parse_label(raw, label_type):
    if raw is None or raw == "":
        return None
    if label_type == "int":
        value = float(raw)
        if value != int(value):
            raise ValueError(f"class label must be an integer, got {raw!r}")
        return int(value)
    value = float(raw)
    if not np.isfinite(value):
        raise ValueError(f"label must be finite, got {raw!r}")
    return value


def _rows(path, fmt: Format) -> Iterable[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            reader = csv.DictReader(fh)
            cols = set(reader.fieldnames or ())
            missing = {"id", "rxn"} - cols
            if missing:
                raise MissingColumn(f"CSV is missing column(s): {', '.join(sorted(missing))}")
            for i, row in enumerate(reader, start=2):
                yield i, row
        else:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    yield i, exc
                    continue
                if not isinstance(row, dict) or "rxn" not in row:
                    yield i, MissingColumn("JSONL record lacks 'rxn'")
                    continue
                yield i, row


def load_dataset(path, format: Format | None = None, label_type: str = "float",
                 strict: bool = False) -> tuple[list[LabeledReaction], list[ParseError]]:
    """Read reactions and labels; bad rows are collected (or raised when ``strict``).

    Row numbers are 1-based file lines (CSV header is line 1).
    """
    fmt = format or _infer_format(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    records, errors = [], []
    for row_no, row in _rows(path, fmt):
        try:
            if isinstance(row, Exception):
                raise row
            rid = str(row.get("id", "") or f"row{row_no}")
            rxn = Reaction.from_smiles(str(row["rxn"]), id=rid)
            records.append(LabeledReaction(rxn, _parse_label(row.get("label"), label_type)))
        except (RxnShingleError, ValueError, KeyError) as exc:
            err = ParseError(row_no, str(exc))
            if strict:
                raise err from exc
            errors.append(err)
    return records, errors


def write_dataset(path, records: Iterable[LabeledReaction], format: Format | None = None):
    fmt = format or _infer_format(path)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "rxn", "label"])
        for r in records:
            w.writerow([r.id, r.reaction.to_smiles(), "" if r.label is None else r.label])
        atomic_write(path, buf.getvalue())
    else:
        lines = [canonical_json({"id": r.id, "rxn": r.reaction.to_smiles(), "label": r.label})
                 for r in records]
        atomic_write(path, "".join(line + "\n" for line in lines))


# ----------------------------------------------------------------------------
# coordinates


def load_coords(path) -> dict[tuple[str, str, int], tuple[list[str], np.ndarray]]:
    """Parse multi-frame XYZ; each comment line reads ``<reaction_id> <r|p> <index>``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            n = int(lines[i].strip())
            rid, side, idx = lines[i + 1].split()[:3]
            if side not in ("r", "p"):
                raise ValueError(f"side must be 'r' or 'p', got {side!r}")
            elems, xyz = [], np.empty((n, 3))
            for k in range(n):
                parts = lines[i + 2 + k].split()
                elems.append(parts[0])
                xyz[k] = [float(v) for v in parts[1:4]]
        except (ValueError, IndexError) as exc:
            raise ParseError(i + 1, f"malformed XYZ block: {exc}") from exc
        out[(rid, side, int(idx))] = (elems, xyz)
        i += 2 + n
    return out


def attach_coords(records: list[LabeledReaction], coords: dict) -> list[LabeledReaction]:
    """Return records whose molecules carry the matching XYZ coordinates, if any."""
    out = []
    for rec in records:
        rxn = rec.reaction
        sides = {}
        for tag, mols in (("r", rxn.reactants), ("p", rxn.products)):
            placed = []
            for k, conf in enumerate(mols):
                entry = coords.get((rxn.id, tag, k))
                if entry is None:
                    placed.append(conf)
                    continue
                elems, xyz = entry
                expected = [a.element for a in conf.graph.atoms]
                if [e.capitalize() for e in elems] != [e.capitalize() for e in expected]:
                    raise ParseError(0, f"coordinates for {rxn.id} {tag}{k} list atoms {elems} "
                                        f"but the molecule has {expected}")
                placed.append(Conformer(conf.graph, xyz))
            sides[tag] = tuple(placed)
        out.append(LabeledReaction(Reaction(sides["r"], sides["p"], rxn.id), rec.label))
    return out


def write_coords(path, reactions: Iterable[Reaction]):
    """Write XYZ blocks with atoms in the order :meth:`Reaction.to_smiles` writes them."""
    blocks = []
    for rxn in reactions:
        for tag, mols in (("r", rxn.reactants), ("p", rxn.products)):
            for k, conf in enumerate(mols):
                if conf.coords is None:
                    continue
                _, order = write_smiles_with_order(conf.graph)
                rows = [f"{conf.graph.atoms[i].element} {x!r} {y!r} {z!r}"
                        for i, (x, y, z) in zip(order, conf.coords[order].tolist())]
                blocks.append("\n".join([str(conf.n_atoms), f"{rxn.id} {tag} {k}", *rows]))
    atomic_write(path, "\n".join(blocks) + "\n")


# ----------------------------------------------------------------------------
# checkpoint container
#
# layout: magic(4) | version u32 | header_len u32 | header JSON | raw tensor data
# header = {"config": ..., "meta": ..., "tensors": [{name, dtype, shape, offset}]}


def write_checkpoint(path, config: dict, tensors: dict[str, np.ndarray], meta: dict | None = None):
    index, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        key = arr.dtype.name
        if key not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {key} for tensor {name}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[key]).tobytes()
        index.append({"name": name, "dtype": key, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = canonical_json({"config": config, "meta": meta or {}, "tensors": index})
    head = header.encode("utf-8")
    blob = CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(head)) + head
    atomic_write(path, blob + b"".join(chunks))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    base = 12 + hlen
    tensors = {}
    for entry in header["tensors"]:
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        end = start + count * dt.itemsize
        if end > len(data):
            raise CheckpointError(f"tensor {entry['name']} runs past end of file")
        arr = np.frombuffer(data[start:end], dtype=dt).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(entry["dtype"])
    return header["config"], tensors, header.get("meta", {})
