"""Shingle-set transformer with a kernelized, layer-to-layer accumulated pair bias.

Pipeline per reaction:

1. canonicalize the reaction and extract its shingle set (symmetric difference
   by default);
2. embed atoms with a single distance-kernel message layer and average atom
   embeddings over each shingle;
3. prepend a learned summary token and run ``n_layers`` post-norm attention
   blocks whose softmax logits carry an additive per-head pair bias. Each
   layer's raw scores become the next layer's bias;
4. read the summary token through a two-layer GELU head.

Featurization is pure and canonical, so a reaction presented with shuffled
molecules or relabeled atoms yields bit-identical inputs and predictions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import CheckpointError, UnknownAtomBucket
from .fileio import read_checkpoint, write_checkpoint
from .molecule import CanonicalReaction, Reaction
from .pairwise import SIGMA_FLOOR, GkptParams, PairFeatures, pair_features
from .shingles import MODES, Caps, ShingleSet, reaction_shingles
from .smiles import AtomSpec

ATOM_ELEMENTS = (
    "H", "Li", "B", "C", "N", "O", "F", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "K", "Ca",
    "Ti", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ge", "As", "Se", "Br", "Rb", "Sr", "Zr",
    "Ru", "Rh", "Pd", "Ag", "Sn", "Sb", "Te", "I", "Cs", "Ba", "Os", "Ir", "Pt", "Au", "Hg",
    "Pb", "Bi",
)
_ELEMENT_INDEX = {e: i for i, e in enumerate(ATOM_ELEMENTS)}
MAX_ABS_CHARGE = 2
_PER_ELEMENT = (2 * MAX_ABS_CHARGE + 1) * 2
N_ATOM_BUCKETS = len(ATOM_ELEMENTS) * _PER_ELEMENT + 1
OOV_BUCKET = N_ATOM_BUCKETS - 1
INIT_STD = 0.02
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def atom_bucket(atom: AtomSpec) -> int:
    """Embedding row for element x clipped charge x aromatic flag."""
    idx = _ELEMENT_INDEX.get(atom.element)
    if idx is None:
        warnings.warn(f"element {atom.element} has no embedding; using the OOV row",
                      UnknownAtomBucket, stacklevel=3)
        return OOV_BUCKET
    charge = max(-MAX_ABS_CHARGE, min(MAX_ABS_CHARGE, atom.charge))
    return idx * _PER_ELEMENT + (charge + MAX_ABS_CHARGE) * 2 + int(atom.aromatic)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    heads: int = 4
    dim: int = 64
    ffn_dim: int = 128
    dropout: float = 0.1
    n_kernels: int = 16
    atom_kernels: int = 16
    radius: int = 3
    shingle_mode: str = "symdiff"
    caps: tuple[int, int, int] = (10, 100, 280)
    use_pair_bias: bool = True
    use_geometric: bool = True
    use_structural: bool = True
    task: str = "regression"
    n_outputs: int = 1
    pretrain_classes: tuple[int, ...] = ()
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.shingle_mode not in MODES:
            raise ValueError(f"shingle_mode must be one of {MODES}")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        object.__setattr__(self, "caps", tuple(int(c) for c in self.caps))
        object.__setattr__(self, "pretrain_classes", tuple(int(c) for c in self.pretrain_classes))

    @classmethod
    def profile(cls, name: str = "desk", **overrides) -> "ModelConfig":
        presets = {
            "desk": dict(n_layers=2, heads=4, dim=64, ffn_dim=128, n_kernels=16, atom_kernels=16),
            "paper": dict(n_layers=4, heads=64, dim=512, ffn_dim=2048, n_kernels=128,
                          atom_kernels=128),
        }
        if name not in presets:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["caps"] = list(self.caps)
        d["pretrain_classes"] = list(self.pretrain_classes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("caps", "pretrain_classes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# ----------------------------------------------------------------------------
# featurization


@dataclass(frozen=True, eq=False)
class ReactionFeatures:
    """Model inputs of one reaction, all in the canonical frame."""

    atom_buckets: np.ndarray   # (A,)
    pair_dst: np.ndarray       # (P,) receiving atom of each directed intra-molecular pair
    pair_dist: np.ndarray      # (P,)
    pair_bonded: np.ndarray    # (P,) 0/1
    member_atoms: np.ndarray   # (M,) atom index per shingle membership
    member_rows: np.ndarray    # (M,) shingle row per membership
    row_sizes: np.ndarray      # (N,)
    pairs: PairFeatures
    n_shingles: int            # 0 means the null token stands in
    keys: tuple[str, ...] = ()

    @property
    def n_tokens(self) -> int:
        return max(self.n_shingles, 1)


def features_from_shingles(shingles: ShingleSet) -> ReactionFeatures:
    """Featurize an explicit shingle set (its canonical reaction supplies atoms)."""
    canon = shingles.reaction
    buckets, dst, dist, bonded = [], [], [], []
    offsets = {}
    base = 0
    for side in ("reactant", "product"):
        for k, mol in enumerate(canon.side(side)):
            offsets[(side, k)] = base
            g = mol.conformer.graph
            n = g.n_atoms
            buckets.extend(atom_bucket(a) for a in g.atoms)
            if n > 1:
                ii, jj = np.nonzero(~np.eye(n, dtype=bool))
                dst.append(ii + base)
                dist.append(mol.distances[ii, jj])
                bond = np.zeros((n, n), dtype=np.int64)
                for b in g.bonds:
                    i, j = b.endpoints
                    bond[i, j] = bond[j, i] = 1
                bonded.append(bond[ii, jj])
            base += n
    member_atoms, member_rows, sizes = [], [], []
    for row, s in enumerate(shingles):
        off = offsets[(s.side, s.mol_index)]
        member_atoms.extend(off + a for a in s.atom_indices)
        member_rows.extend([row] * len(s.atom_indices))
        sizes.append(len(s.atom_indices))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)
    return ReactionFeatures(
        atom_buckets=np.asarray(buckets, dtype=np.int64),
        pair_dst=cat(dst, np.int64),
        pair_dist=cat(dist, np.float64),
        pair_bonded=cat(bonded, np.int64),
        member_atoms=np.asarray(member_atoms, dtype=np.int64),
        member_rows=np.asarray(member_rows, dtype=np.int64),
        row_sizes=np.asarray(sizes, dtype=np.int64),
        pairs=pair_features(shingles),
        n_shingles=len(shingles),
        keys=tuple(shingles.keys),
    )


def featurize(reaction: Reaction | CanonicalReaction, config: ModelConfig) -> ReactionFeatures:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        shingles = reaction_shingles(reaction, config.radius, config.shingle_mode,
                                     Caps(*config.caps))
    return features_from_shingles(shingles)


# ----------------------------------------------------------------------------
# parameters


def _gkpt_arrays(prefix: str, n_kernels: int, out_dim: int, lo: float, hi: float,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    p = GkptParams.init(n_kernels, out_dim, lo, hi, rng, INIT_STD)
    return {f"{prefix}.e1": p.e1, f"{prefix}.e2": p.e2, f"{prefix}.mu": p.mu,
            f"{prefix}.sigma": p.sigma, f"{prefix}.w": p.w}


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    F, H, ffn = config.dim, config.heads, config.ffn_dim
    normal = lambda *shape: rng.standard_normal(shape) * INIT_STD
    p: dict[str, np.ndarray] = {}
    p["atom.embed"] = normal(N_ATOM_BUCKETS, F)
    p.update(_gkpt_arrays("atom.kernel", config.atom_kernels, F, 0.0, 10.0, rng))
    p["atom.mix"] = normal(F, F)
    p["atom.ln.g"], p["atom.ln.b"] = np.ones(F), np.zeros(F)
    p["null"] = normal(1, F)
    p["summary"] = normal(1, F)
    p.update(_gkpt_arrays("pair_g", config.n_kernels, H, 0.0, 10.0, rng))
    p.update(_gkpt_arrays("pair_s", config.n_kernels, H, 0.0, 1.0, rng))
    for layer in range(config.n_layers):
        b = f"block{layer}"
        for name in ("q", "k", "v", "o"):
            p[f"{b}.w{name}"], p[f"{b}.b{name}"] = normal(F, F), np.zeros(F)
        p[f"{b}.ln1.g"], p[f"{b}.ln1.b"] = np.ones(F), np.zeros(F)
        p[f"{b}.w1"], p[f"{b}.b1"] = normal(F, ffn), np.zeros(ffn)
        p[f"{b}.w2"], p[f"{b}.b2"] = normal(ffn, F), np.zeros(F)
        p[f"{b}.ln2.g"], p[f"{b}.ln2.b"] = np.ones(F), np.zeros(F)
    p["head.w1"], p["head.b1"] = normal(F, F), np.zeros(F)
    p["head.w2"], p["head.b2"] = normal(F, config.n_outputs), np.zeros(config.n_outputs)
    for k, n_cls in enumerate(config.pretrain_classes):
        p[f"pretrain{k}.w"], p[f"pretrain{k}.b"] = normal(F, n_cls), np.zeros(n_cls)
    return {k: np.asarray(v, dtype=config.np_dtype) for k, v in p.items()}


# ----------------------------------------------------------------------------
# batching


@dataclass(eq=False)
class Batch:
    size: int
    length: int                # tokens per reaction incl. summary
    n_atoms: int
    atom_buckets: np.ndarray
    pair_dst: np.ndarray
    pair_dist: np.ndarray
    pair_bonded: np.ndarray
    member_atoms: np.ndarray
    member_rows: np.ndarray
    row_scale: np.ndarray      # (R, 1) reciprocal shingle sizes
    n_rows: int
    real_rows: np.ndarray      # rows that are shingles (not null tokens)
    null_rows: np.ndarray      # rows standing in for empty shingle sets
    token_pos: np.ndarray      # (R,) flat position in (B*T) for every row
    summary_pos: np.ndarray    # (B,)
    bias_pos: np.ndarray       # (Q,) flat position in (B*T*T)
    d_g: np.ndarray
    d_s: np.ndarray
    d_e: np.ndarray
    key_mask: np.ndarray       # (B, T) bool


def make_batch(feats: Sequence[ReactionFeatures]) -> Batch:
    B = len(feats)
    T = 1 + max(f.n_tokens for f in feats)
    atoms, dsts, dists, bonded, m_atoms, m_rows, scales = [], [], [], [], [], [], []
    real, null, tok, bias_pos, dg, ds, de = [], [], [], [], [], [], []
    mask = np.zeros((B, T), dtype=bool)
    a_off = r_off = 0
    for b, f in enumerate(feats):
        atoms.append(f.atom_buckets)
        dsts.append(f.pair_dst + a_off)
        dists.append(f.pair_dist)
        bonded.append(f.pair_bonded)
        n = f.n_tokens
        if f.n_shingles:
            m_atoms.append(f.member_atoms + a_off)
            m_rows.append(f.member_rows + r_off)
            scales.append(1.0 / f.row_sizes)
            real.append(np.arange(n) + r_off)
        else:
            scales.append(np.ones(1))
            null.append(r_off)
        tok.append(b * T + 1 + np.arange(n))
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        bias_pos.append((b * T * T + (ii + 1) * T + (jj + 1)).ravel())
        dg.append(f.pairs.d_g.ravel())
        ds.append(f.pairs.d_s.ravel())
        de.append(f.pairs.d_e.ravel())
        mask[b, : n + 1] = True
        a_off += len(f.atom_buckets)
        r_off += n
    i64 = lambda xs: np.concatenate(xs).astype(np.int64) if xs else np.zeros(0, dtype=np.int64)
    return Batch(
        size=B, length=T, n_atoms=a_off,
        atom_buckets=i64(atoms), pair_dst=i64(dsts), pair_dist=np.concatenate(dists),
        pair_bonded=i64(bonded), member_atoms=i64(m_atoms), member_rows=i64(m_rows),
        row_scale=np.concatenate(scales)[:, None], n_rows=r_off,
        real_rows=i64(real), null_rows=np.asarray(null, dtype=np.int64),
        token_pos=i64(tok), summary_pos=np.arange(B, dtype=np.int64) * T,
        bias_pos=i64(bias_pos), d_g=np.concatenate(dg), d_s=np.concatenate(ds),
        d_e=i64(de), key_mask=mask,
    )


# ----------------------------------------------------------------------------
# model


class ShingleTransformer:
    """Parameters plus the forward pass; training lives in :mod:`rxnshingle.training`."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 label_stats: tuple[float, float] = (0.0, 1.0)):
        self.config = config
        arrays = init_params(config) if params is None else params
        dt = config.np_dtype
        self.params: dict[str, Tensor] = {
            k: Tensor(np.array(v, dtype=dt), requires_grad=True, name=k) for k, v in arrays.items()
        }
        self.label_stats = (float(label_stats[0]), float(label_stats[1]))

    # -- pieces -------------------------------------------------------------
    def _const(self, x) -> Tensor:
        return Tensor(np.asarray(x, dtype=self.config.np_dtype))

    def _gkpt(self, prefix: str, x: np.ndarray, e: np.ndarray) -> Tensor:
        p = self.params
        shifted = p[f"{prefix}.e1"][e] * self._const(x[:, None]) + p[f"{prefix}.e2"][e]
        sigma = ad.maximum(p[f"{prefix}.sigma"], SIGMA_FLOOR)
        z = (shifted - p[f"{prefix}.mu"]) / sigma
        return ad.exp(ad.square(z) * -0.5) * _INV_SQRT_2PI / sigma

    def encode_atoms(self, batch: Batch) -> Tensor:
        p = self.params
        h = p["atom.embed"][batch.atom_buckets]
        if len(batch.pair_dst):
            phi = self._gkpt("atom.kernel", batch.pair_dist, batch.pair_bonded)
            msg = ad.index_add(batch.n_atoms, batch.pair_dst, phi)
            h = h + (msg @ p["atom.kernel.w"]) @ p["atom.mix"]
        return ad.layernorm(h, p["atom.ln.g"], p["atom.ln.b"])

    def pool(self, batch: Batch, atoms: Tensor) -> Tensor:
        """Mean atom embedding per shingle row; null rows get the learned null vector."""
        parts = []
        if len(batch.member_atoms):
            sums = ad.index_add(batch.n_rows, batch.member_rows, atoms[batch.member_atoms])
            parts.append(sums * self._const(batch.row_scale))
        if len(batch.null_rows):
            nulls = self.params["null"][np.zeros(len(batch.null_rows), dtype=np.int64)]
            parts.append(ad.index_add(batch.n_rows, batch.null_rows, nulls))
        return parts[0] if len(parts) == 1 else parts[0] + parts[1]

    def pair_bias(self, batch: Batch) -> Tensor | None:
        cfg = self.config
        if not cfg.use_pair_bias or not (cfg.use_geometric or cfg.use_structural):
            return None
        terms = []
        if cfg.use_geometric:
            terms.append(self._gkpt("pair_g", batch.d_g, batch.d_e) @ self.params["pair_g.w"])
        if cfg.use_structural:
            terms.append(self._gkpt("pair_s", batch.d_s, batch.d_e) @ self.params["pair_s.w"])
        flat = terms[0] if len(terms) == 1 else terms[0] + terms[1]
        B, T, H = batch.size, batch.length, cfg.heads
        full = ad.index_add(B * T * T, batch.bias_pos, flat)
        return full.reshape(B, T, T, H).transpose(0, 3, 1, 2)

    def _block(self, layer: int, x: Tensor, bias, mask: np.ndarray, training: bool, rng):
        p, cfg = self.params, self.config
        b = f"block{layer}"
        B, T, F = x.shape
        H, dh = cfg.heads, cfg.head_dim

        def heads(name):
            y = x @ p[f"{b}.w{name}"] + p[f"{b}.b{name}"]
            return y.reshape(B, T, H, dh).transpose(0, 2, 1, 3)

        q, k, v = heads("q"), heads("k"), heads("v")
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
        if bias is not None:
            scores = scores + bias
        attn = ad.masked_softmax(scores, mask[:, None, None, :])
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, T, F)
        out = ad.dropout(ctx @ p[f"{b}.wo"] + p[f"{b}.bo"], cfg.dropout, rng, training)
        x = ad.layernorm(x + out, p[f"{b}.ln1.g"], p[f"{b}.ln1.b"])
        hid = ad.gelu(x @ p[f"{b}.w1"] + p[f"{b}.b1"])
        out = ad.dropout(hid @ p[f"{b}.w2"] + p[f"{b}.b2"], cfg.dropout, rng, training)
        x = ad.layernorm(x + out, p[f"{b}.ln2.g"], p[f"{b}.ln2.b"])
        return x, scores, attn

    def encode(self, batch: Batch, training: bool = False, rng=None,
               return_attention: bool = False):
        """Summary-token embeddings ``(B, F)`` of a batch."""
        cfg = self.config
        B, T, F = batch.size, batch.length, cfg.dim
        rows = self.pool(batch, self.encode_atoms(batch))
        summary = self.params["summary"][np.zeros(B, dtype=np.int64)]
        tokens = ad.concat([rows, summary], axis=0)
        pos = np.concatenate([batch.token_pos, batch.summary_pos])
        x = ad.index_add(B * T, pos, tokens).reshape(B, T, F)
        bias = self.pair_bias(batch)
        attentions = []
        for layer in range(cfg.n_layers):
            x, bias, attn = self._block(layer, x, bias, batch.key_mask, training, rng)
            attentions.append(attn)
        emb = x[:, 0, :]
        return (emb, attentions) if return_attention else emb

    def head(self, emb: Tensor) -> Tensor:
        p = self.params
        return ad.gelu(emb @ p["head.w1"] + p["head.b1"]) @ p["head.w2"] + p["head.b2"]

    def pretrain_logits(self, emb: Tensor) -> list[Tensor]:
        p = self.params
        return [emb @ p[f"pretrain{k}.w"] + p[f"pretrain{k}.b"]
                for k in range(len(self.config.pretrain_classes))]

    def forward(self, feats: Sequence[ReactionFeatures], training: bool = False, rng=None):
        """Return ``(embedding, head output)`` for a list of featurized reactions."""
        emb = self.encode(make_batch(feats), training, rng)
        return emb, self.head(emb)

    # -- inference ----------------------------------------------------------
    def featurize(self, reaction) -> ReactionFeatures:
        return featurize(reaction, self.config)

    def raw_outputs(self, feats: Sequence[ReactionFeatures]) -> np.ndarray:
        """Head outputs, one reaction per forward pass so results never depend on batch mates."""
        outs = [self.forward([f])[1].data[0] for f in feats]
        return np.stack(outs) if outs else np.zeros((0, self.config.n_outputs))

    def predict_features(self, feats: Sequence[ReactionFeatures]) -> np.ndarray:
        raw = self.raw_outputs(feats).astype(np.float64)
        if self.config.task == "classification":
            return raw.argmax(axis=1)
        mean, std = self.label_stats
        return raw[:, 0] * std + mean

    def predict(self, reactions: Sequence) -> np.ndarray:
        return self.predict_features([self.featurize(r) for r in reactions])

    def embed(self, reactions: Sequence) -> np.ndarray:
        return np.stack([self.encode(make_batch([self.featurize(r)])).data[0] for r in reactions])

    # -- state --------------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def with_config(self, **changes) -> "ShingleTransformer":
        """A model sharing copies of these parameters under a modified config."""
        cfg = replace(self.config, **changes)
        return ShingleTransformer(cfg, {k: v.copy() for k, v in self.state_arrays().items()},
                                  self.label_stats)

    def save(self, path, meta: dict | None = None):
        meta = dict(meta or {})
        meta["label_stats"] = list(self.label_stats)
        write_checkpoint(path, self.config.to_dict(), self.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> "ShingleTransformer":
        cfg_dict, tensors, meta = read_checkpoint(path)
        cfg = ModelConfig.from_dict(cfg_dict)
        expected = init_params(cfg)
        missing = set(expected) - set(tensors)
        if missing:
            raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
        for k, v in expected.items():
            if tensors[k].shape != v.shape:
                raise CheckpointError(f"tensor {k} has shape {tensors[k].shape}, expected {v.shape}")
        stats = tuple(meta.get("label_stats", (0.0, 1.0)))
        return cls(cfg, {k: tensors[k] for k in expected}, stats)
