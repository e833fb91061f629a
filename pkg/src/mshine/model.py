"""Trainable tensors and the recurrent forward pass.

Every node owns three d-dimensional rows: a basic representation ``X[v]``, a
stored state ``H[v]`` and a target (output) row ``W_hy[v]``. Per-meta-path
information is decoded from the shared rows by an elementwise (Hadamard)
product with a learned vector per path (``V_x``, ``V_h``, ``V_y``); each
three-element context type owns a relation vector row of ``R``. The state
unit combines the decoded basic vector of the middle node, the decoded state
of the previous node and the relation vector through three shared d x d
transforms and a tanh.

Checkpoint format (binary, little-endian): magic ``MSHN1``; u64 counts
N, d, n_triple_types, n_paths; the tensors X, H, W_hy, W_xh, W_hh, W_rh, R,
V_x, V_h, V_y as row-major float32; then N node labels and n_paths meta-path
ids, each as a u64 byte length followed by UTF-8 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MSHN1"

_TENSOR_ORDER = ("X", "H", "W_hy", "W_xh", "W_hh", "W_rh", "R", "V_x", "V_h", "V_y")


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint files."""


@dataclass
class ModelParams:
    """All trainable tensors. Arrays are float64 in memory, float32 on disk."""

    X: np.ndarray      # (N, d) basic node rows
    H: np.ndarray      # (N, d) stored state rows
    W_hy: np.ndarray   # (N, d) target node rows
    W_xh: np.ndarray   # (d, d)
    W_hh: np.ndarray   # (d, d)
    W_rh: np.ndarray   # (d, d)
    R: np.ndarray      # (n_triple_types, d) relation vectors
    V_x: np.ndarray    # (n_paths, d) basic decode vectors
    V_h: np.ndarray    # (n_paths, d) state decode vectors
    V_y: np.ndarray    # (n_paths, d) target decode vectors

    @property
    def n_nodes(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_triple_types(self) -> int:
        return self.R.shape[0]

    @property
    def n_paths(self) -> int:
        return self.V_x.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _TENSOR_ORDER}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.tensors().items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.tensors().values())


def init_params(n_nodes: int, dim: int, n_triple_types: int, n_paths: int,
                rng) -> ModelParams:
    """Initialize: X, transforms and R ~ Normal(0, 0.1); H and W_hy zero;
    decode vectors all-ones so every path starts as the identity decode."""
    if min(n_nodes, dim, n_triple_types, n_paths) < 1:
        raise ValueError("all model dimensions must be >= 1")
    scale = 0.1
    return ModelParams(
        X=rng.normal(0.0, scale, size=(n_nodes, dim)),
        H=np.zeros((n_nodes, dim)),
        W_hy=np.zeros((n_nodes, dim)),
        W_xh=rng.normal(0.0, scale, size=(dim, dim)),
        W_hh=rng.normal(0.0, scale, size=(dim, dim)),
        W_rh=rng.normal(0.0, scale, size=(dim, dim)),
        R=rng.normal(0.0, scale, size=(n_triple_types, dim)),
        V_x=np.ones((n_paths, dim)),
        V_h=np.ones((n_paths, dim)),
        V_y=np.ones((n_paths, dim)),
    )


# -- decode and forward ------------------------------------------------------

def decode_basic(p: ModelParams, v: int, m: int) -> np.ndarray:
    return p.X[v] * p.V_x[m]


def decode_state(p: ModelParams, v: int, m: int) -> np.ndarray:
    return p.H[v] * p.V_h[m]


def decode_target(p: ModelParams, v: int, m: int) -> np.ndarray:
    return p.W_hy[v] * p.V_y[m]


def compute_state(p: ModelParams, triple) -> np.ndarray:
    """tanh(W_xh x~_mid + W_hh h~_prev + W_rh r) for a training triple."""
    x_mid = decode_basic(p, triple.mid, triple.path_id)
    h_prev = decode_state(p, triple.prev, triple.path_id)
    r = p.R[triple.triple_id]
    return np.tanh(p.W_xh @ x_mid + p.W_hh @ h_prev + p.W_rh @ r)


def score(p: ModelParams, state: np.ndarray, target: int, m: int) -> float:
    return float(decode_target(p, target, m) @ state)


def predict_prob(p: ModelParams, state: np.ndarray, candidates, m: int) -> np.ndarray:
    """Softmax over the candidate set's scores (the heterogeneous softmax)."""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("empty candidate set")
    scores = (p.W_hy[candidates] * p.V_y[m]) @ state
    z = np.exp(scores - scores.max())
    return z / z.sum()


@dataclass
class ForwardTrace:
    """Intermediates of one triple's forward pass, kept for backprop."""

    triple: object                 # TrainingTriple
    targets: np.ndarray            # positive first, then negatives
    x_mid: np.ndarray
    h_prev: np.ndarray
    h_mid: np.ndarray              # decoded stored state of the middle node
    r: np.ndarray
    state: np.ndarray
    target_rows: np.ndarray        # decoded target rows, (1 + K, d)
    scores: np.ndarray             # (1 + K,)


def forward_triple(p: ModelParams, triple, negatives) -> ForwardTrace:
    """Forward pass for one triple and its negatives."""
    m = triple.path_id
    x_mid = decode_basic(p, triple.mid, m)
    h_prev = decode_state(p, triple.prev, m)
    h_mid = decode_state(p, triple.mid, m)
    r = p.R[triple.triple_id]
    state = np.tanh(p.W_xh @ x_mid + p.W_hh @ h_prev + p.W_rh @ r)
    targets = np.concatenate(([triple.nxt], np.asarray(negatives, dtype=np.int64)))
    target_rows = p.W_hy[targets] * p.V_y[m]
    scores = target_rows @ state
    return ForwardTrace(triple, targets, x_mid, h_prev, h_mid, r, state,
                        target_rows, scores)


# -- checkpoint io -----------------------------------------------------------

def save_checkpoint(path, params: ModelParams, node_labels, metapath_ids) -> None:
    if len(node_labels) != params.n_nodes:
        raise CheckpointError("node label count does not match N")
    if len(metapath_ids) != params.n_paths:
        raise CheckpointError("meta-path id count does not match the decode tables")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4Q", params.n_nodes, params.dim,
                             params.n_triple_types, params.n_paths))
        for name in _TENSOR_ORDER:
            arr = np.ascontiguousarray(getattr(params, name), dtype="<f4")
            fh.write(arr.tobytes())
        for text in list(node_labels) + list(metapath_ids):
            raw = text.encode("utf-8")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def load_checkpoint(path) -> tuple[ModelParams, list[str], list[str]]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic bytes")
        header = fh.read(32)
        if len(header) != 32:
            raise CheckpointError(f"{path}: truncated header")
        n, d, nt, npth = struct.unpack("<4Q", header)
        shapes = {
            "X": (n, d), "H": (n, d), "W_hy": (n, d),
            "W_xh": (d, d), "W_hh": (d, d), "W_rh": (d, d),
            "R": (nt, d), "V_x": (npth, d), "V_h": (npth, d), "V_y": (npth, d),
        }
        tensors = {}
        for name in _TENSOR_ORDER:
            shape = shapes[name]
            count = int(np.prod(shape))
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError(f"{path}: truncated tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

        def read_str():
            size_raw = fh.read(8)
            if len(size_raw) != 8:
                raise CheckpointError(f"{path}: truncated string table")
            (size,) = struct.unpack("<Q", size_raw)
            raw = fh.read(size)
            if len(raw) != size:
                raise CheckpointError(f"{path}: truncated string table")
            return raw.decode("utf-8")

        labels = [read_str() for _ in range(n)]
        metapath_ids = [read_str() for _ in range(npth)]
    return ModelParams(**tensors), labels, metapath_ids
