import json
import os

import numpy as np
import pytest

from rxnshingle.exceptions import CheckpointError, MissingColumn, ParseError
from rxnshingle.fileio import (
    atomic_write,
    attach_coords,
    canonical_json,
    load_coords,
    load_dataset,
    read_checkpoint,
    write_checkpoint,
    write_coords,
    write_dataset,
)
from rxnshingle.molecule import LabeledReaction
from rxnshingle.synthetic import random_reactions


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [np.float64(0.1), np.int64(2)]}) == '{"a":[0.1,2],"b":1}'
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert os.listdir(p.parent) == ["f.txt"]


def test_csv_jsonl_equivalent(tmp_path):
    recs = [LabeledReaction(r, float(i) / 3) for i, r in enumerate(random_reactions(5, seed=1))]
    write_dataset(tmp_path / "d.csv", recs)
    write_dataset(tmp_path / "d.jsonl", recs)
    a, ea = load_dataset(tmp_path / "d.csv")
    b, eb = load_dataset(tmp_path / "d.jsonl")
    assert not ea and not eb
    assert [(r.id, r.reaction.to_smiles(), r.label) for r in a] == \
           [(r.id, r.reaction.to_smiles(), r.label) for r in b]
    assert [r.label for r in a] == [r.label for r in recs]


def test_bad_rows_reported(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,rxn,label\na,CCO>>CC=O,1.0\nb,C1CC>>C,2\nc,CC>>CO,abc\nd,CC>>CO,\n")
    recs, errors = load_dataset(p)
    assert [r.id for r in recs] == ["a", "d"]
    assert recs[1].label is None
    assert [e.row for e in errors] == [3, 4]
    with pytest.raises(ParseError) as info:
        load_dataset(p, strict=True)
    assert info.value.row == 3


def test_int_labels(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"id": "a", "rxn": "CC>>CO", "label": 2}\n\n{"id": "b", "rxn": "CC>>CO", "label": 1.5}\nnot json\n')
    recs, errors = load_dataset(p, label_type="int")
    assert recs[0].label == 2 and isinstance(recs[0].label, int)
    assert [e.row for e in errors] == [3, 4]


def test_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("name,smiles\nx,CC>>CO\n")
    with pytest.raises(MissingColumn):
        load_dataset(p)


def test_coords_round_trip(tmp_path):
    rxns = random_reactions(3, seed=2, coords=True)
    recs = [LabeledReaction(r, 0.0) for r in rxns]
    write_dataset(tmp_path / "d.csv", recs)
    write_coords(tmp_path / "c.xyz", rxns)
    back, _ = load_dataset(tmp_path / "d.csv")
    back = attach_coords(back, load_coords(tmp_path / "c.xyz"))
    for orig, new in zip(rxns, back):
        for m0, m1 in zip(orig.molecules, new.reaction.molecules):
            d0 = np.linalg.norm(m0.coords[:, None] - m0.coords[None], axis=-1)
            d1 = np.linalg.norm(m1.coords[:, None] - m1.coords[None], axis=-1)
            assert sorted(d0.ravel().tolist()) == pytest.approx(sorted(d1.ravel().tolist()))


def _load_text(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return load_dataset(p)


def test_coords_element_mismatch(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("2\nr0 r 0\nC 0 0 0\nN 1.5 0 0\n")
    recs, _ = _load_text(tmp_path, "id,rxn\nr0,CC>>CO\n")
    with pytest.raises(ParseError):
        attach_coords(recs, load_coords(p))


def test_malformed_xyz(tmp_path):
    p = tmp_path / "c.xyz"
    p.write_text("3\nr0 x 0\nC 0 0 0\n")
    with pytest.raises(ParseError):
        load_coords(p)


def test_checkpoint_container(tmp_path):
    t = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([1, 2], dtype=np.int64),
         "c": np.zeros((0, 4))}
    write_checkpoint(tmp_path / "x.ckpt", {"k": 1}, t, {"m": "v"})
    raw = (tmp_path / "x.ckpt").read_bytes()
    assert raw[:4] == b"RDSH"
    cfg, back, meta = read_checkpoint(tmp_path / "x.ckpt")
    assert cfg == {"k": 1} and meta == {"m": "v"}
    for k in t:
        assert back[k].dtype == t[k].dtype and np.array_equal(back[k], t[k])
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12:12 + hlen])
    assert [e["name"] for e in header["tensors"]] == ["a", "b", "c"]
    (tmp_path / "cut.ckpt").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "cut.ckpt")
    with pytest.raises(CheckpointError):
        write_checkpoint(tmp_path / "y.ckpt", {}, {"s": np.array(["x"])})
