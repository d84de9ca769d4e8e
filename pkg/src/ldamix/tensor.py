"""Dense symmetric-ish tensors stored as numpy arrays.

A tensor of order N with every mode of length K is an ``ndarray`` of shape
``(K,) * N`` in row-major order. Permutations are 0-based sequences.
"""

import functools
import json

import numpy as np

# Refuse to materialise tensors larger than this many elements.
MAX_ELEMENTS = 10**8


class TensorSizeError(ValueError):
    """Raised when a requested tensor would exceed the element cap."""


def check_size(shape, max_elements=None):
    cap = MAX_ELEMENTS if max_elements is None else max_elements
    n = 1
    for s in shape:
        n *= int(s)
    if n > cap:
        raise TensorSizeError(f"tensor of shape {tuple(shape)} has {n} elements (cap {cap})")
    return n


def diag_tensor(weights, order):
    """Order-``order`` tensor with ``weights`` on the super-diagonal."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if int(order) != order or order < 1:
        raise ValueError("order must be a positive integer")
    order = int(order)
    check_size((w.size,) * order)
    out = np.zeros((w.size,) * order)
    idx = np.arange(w.size)
    out[(idx,) * order] = w
    return out


def _check_perm(perm, n):
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of range({n})")
    return perm


def transpose(t, perm):
    """Return ``R`` with ``R[k_0..k_{N-1}] = t[k_{perm[0]}, ..., k_{perm[N-1]}]``."""
    t = np.asarray(t)
    perm = _check_perm(perm, t.ndim)
    return np.transpose(t, np.argsort(perm))


def outer_product(parts):
    """Outer product of a sequence of tensors, each of order at least one."""
    parts = [np.asarray(p, dtype=float) for p in parts]
    if not parts:
        raise ValueError("need at least one tensor")
    if any(p.ndim == 0 for p in parts):
        raise ValueError("order-0 tensors are not allowed in an outer product")
    check_size(sum((p.shape for p in parts), ()))
    return functools.reduce(np.multiply.outer, parts)


def partition_outer(parts, blocks):
    """Outer product of ``parts`` with modes placed on the coordinates in ``blocks``.

    ``blocks[i]`` lists the output coordinates taken by the modes of
    ``parts[i]``. The blocks must partition ``range(N)``.
    """
    pos = [int(c) for b in blocks for c in b]
    outer = outer_product(parts)
    if len(pos) != outer.ndim:
        raise ValueError("block sizes do not match the tensor orders")
    return transpose(outer, pos)


def weighted_outer(q, theta):
    """Contract every mode of ``q`` (shape ``(K,)*N``) with ``theta`` (K x V)."""
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or (q.ndim and q.shape[0] != theta.shape[0]):
        raise ValueError("theta must be K x V with K matching the tensor")
    K, V = theta.shape
    N = q.ndim
    check_size((V,) * N)
    out = q
    for i in range(N):
        # Intermediate has V^(i+1) * K^(N-i-1) entries.
        check_size((V,) * (i + 1) + (K,) * (N - i - 1))
        out = np.tensordot(out, theta, axes=([0], [0]))
    return out


def contract_repeated(q, x):
    """Contract every mode of ``q`` with the vector ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.asarray(q, dtype=float)
    while out.ndim:
        out = out @ x
    return float(out)


def max_relative_error(a, b, floor=1e-2):
    """``max |a - b| / max(|b|, floor)``.

    With ``floor=1e-2`` a bound of 1e-10 means every entry satisfies a
    relative tolerance of 1e-10 or an absolute tolerance of 1e-12.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def to_json(t):
    t = np.asarray(t, dtype=float)
    return json.dumps({"shape": list(t.shape), "data": t.ravel().tolist()})


def from_json(text):
    obj = json.loads(text)
    shape = tuple(int(s) for s in obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    return data.reshape(shape)
