"""EigenTongue subspace: PCA of vectorized 64x64 frames on the 0-255 scale."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, InputError, SizeError, ValidationError
from .imaging import FRAME_SIZE, RAW255, Frame, devectorize, vectorize

ETB_MAGIC = b"ETBS"
_ETB_HEAD = struct.Struct("<4sII")
N_COMPONENTS = 128


@dataclass(frozen=True, eq=False)
class EigenTongueBasis:
    mean: np.ndarray          # (dim,)
    components: np.ndarray    # (n_components, dim), orthonormal rows
    eigenvalues: np.ndarray   # (n_components,), descending

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        comps = np.array(self.components, dtype=np.float64)
        eig = np.array(self.eigenvalues, dtype=np.float64)
        if mean.ndim != 1 or comps.ndim != 2 or comps.shape[1] != mean.size or eig.shape != comps.shape[:1]:
            raise SizeError("inconsistent basis shapes")
        for a in (mean, comps, eig):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def dim(self):
        return self.mean.size

    def __eq__(self, other):
        if not isinstance(other, EigenTongueBasis):
            return NotImplemented
        return (np.array_equal(self.mean, other.mean) and np.array_equal(self.components, other.components)
                and np.array_equal(self.eigenvalues, other.eigenvalues))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EtCoefficients:
    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("coefficients must be finite")


def _fix_signs(comps):
    """Flip each row so that its largest-magnitude entry is positive."""
    peak = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(comps.shape[0]), peak])
    signs[signs == 0] = 1.0
    return comps * signs[:, None]


def fit_basis(frames, n_components=N_COMPONENTS):
    """Mean-centred PCA by thin SVD; eigenvalues use the unbiased (n - 1) covariance."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise SizeError("fit_basis expects an (n_frames, dim) matrix")
    n, dim = x.shape
    if n <= n_components:
        raise SizeError(f"{n} frames cannot support {n_components} components")
    if n_components > dim:
        raise SizeError(f"{n_components} components exceed the dimension {dim}")
    if not np.all(np.isfinite(x)):
        raise InputError("training frames contain non-finite values")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    eig = s ** 2 / (n - 1)
    order = np.argsort(-eig, kind="stable")[:n_components]
    eig = eig[order]
    eig[eig < 0] = 0.0
    return EigenTongueBasis(mean, _fix_signs(vt[order]), eig)


def project_many(x, basis):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != basis.dim:
        raise SizeError(f"expected {basis.dim}-dim vectors, got {x.shape[1]}")
    return (x - basis.mean) @ basis.components.T


def reconstruct_many(c, basis, n_keep=None, clamp=True):
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    k = basis.n_components if n_keep is None else n_keep
    if c.shape[1] < k or k > basis.n_components:
        raise SizeError(f"need {k} coefficients, got {c.shape[1]}")
    out = basis.mean + c[:, :k] @ basis.components[:k]
    if clamp:
        np.clip(out, 0.0, 255.0, out=out)
    return out


def project(f, basis, frame_index=0):
    if isinstance(f, Frame):
        if f.scale != RAW255:
            raise ValidationError("project expects a raw255 frame")
        v = vectorize(f)
    else:
        v = np.asarray(f, dtype=np.float64)
    return EtCoefficients(project_many(v, basis)[0], frame_index)


def reconstruct(c, basis, n_keep=None):
    values = c.values if isinstance(c, EtCoefficients) else c
    v = reconstruct_many(values, basis, n_keep)[0]
    if v.size == FRAME_SIZE:
        return devectorize(v, RAW255)
    return v


# ---------------------------------------------------------------------------
# .etb files
# ---------------------------------------------------------------------------

def encode_basis(basis):
    return b"".join([
        _ETB_HEAD.pack(ETB_MAGIC, basis.dim, basis.n_components),
        basis.mean.astype("<f8").tobytes(),
        basis.components.astype("<f8").tobytes(order="C"),
        basis.eigenvalues.astype("<f8").tobytes(),
    ])


def decode_basis(data, source="<bytes>"):
    if len(data) < _ETB_HEAD.size:
        raise FormatError(f"{source}: header truncated")
    magic, dim, k = _ETB_HEAD.unpack_from(data)
    if magic != ETB_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    expected = 8 * (dim + k * dim + k)
    if len(data) - _ETB_HEAD.size != expected:
        raise CorruptionError(f"{source}: payload has {len(data) - _ETB_HEAD.size} bytes, expected {expected}")
    vals = np.frombuffer(data, dtype="<f8", offset=_ETB_HEAD.size).astype(np.float64)
    return EigenTongueBasis(vals[:dim], vals[dim:dim + k * dim].reshape(k, dim), vals[dim + k * dim:])


def save_basis(path, basis):
    Path(path).write_bytes(encode_basis(basis))


def load_basis(path):
    path = Path(path)
    return decode_basis(path.read_bytes(), str(path))
