"""Random linear-model instances ``y = X theta* + eps``.

Designs have i.i.d. ``N(0, 1/n)`` entries.  Signals are k-sparse with
entries ``+-magnitude`` on a uniformly random support (default magnitude
``1/sqrt(k)``, so the signal has unit Euclidean norm).  Noise is Gaussian or a
Gaussian/contamination mixture.  All draws come from the streams in
:mod:`amp_lab._rng`, keyed by ``(seed, trial, purpose)``.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._validation import as_vector, check_count, check_scalar
from .exceptions import InvalidParameterError

FORMAT_VERSION = 1
_MAGIC = b"AMPLAB\x00\x00"
_HEADER = struct.Struct("<8sIIQQQQQ")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law.

    ``kind`` is ``"gaussian"`` or ``"huber-mixture"``.  For the mixture each
    coordinate is ``N(0, sigma2)`` with probability ``1 - eps_h`` and is drawn
    from the contaminating law otherwise: ``"point-mass"`` puts it at
    ``contam_value`` (default ``5 sqrt(sigma2)``), ``"heavy-tail"`` draws a
    Cauchy variable with scale ``contam_value`` (default ``sqrt(sigma2)``).
    """

    kind: str = "gaussian"
    sigma2: float = 1.0
    eps_h: float = 0.0
    contam: str = "none"
    contam_value: float = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "huber-mixture"):
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")
        check_scalar(self.sigma2, "sigma2", lo=0)
        if not 0.0 <= float(self.eps_h) < 1.0:
            raise InvalidParameterError(f"eps_h={self.eps_h} must lie in [0, 1)")
        if self.contam not in ("none", "point-mass", "heavy-tail"):
            raise InvalidParameterError(f"unknown contamination {self.contam!r}")
        if self.kind == "gaussian" and self.eps_h > 0:
            raise InvalidParameterError("gaussian noise takes eps_h = 0")
        if self.kind == "huber-mixture" and self.eps_h > 0 and self.contam == "none":
            raise InvalidParameterError("eps_h > 0 needs a contamination law")

    @classmethod
    def for_sparse(cls, n, target_norm=0.5):
        """Gaussian noise whose norm concentrates at ``target_norm``."""
        return cls("gaussian", sigma2=target_norm**2 / n)

    @classmethod
    def for_robust(cls, n, eps_h=0.05):
        """``sigma2 = 1/n`` with a point mass at ``5 sigma``."""
        return cls("huber-mixture", sigma2=1.0 / n, eps_h=eps_h, contam="point-mass")

    @property
    def contam_level(self):
        if self.contam_value is not None:
            return float(self.contam_value)
        sigma = np.sqrt(self.sigma2)
        return 5.0 * sigma if self.contam == "point-mass" else sigma


@dataclass(frozen=True)
class SignalSpec:
    """Signal law: ``"signed-uniform-support"`` or ``"explicit-vector"``."""

    kind: str = "signed-uniform-support"
    magnitude: float = None
    vector: tuple = None

    def __post_init__(self):
        if self.kind not in ("signed-uniform-support", "explicit-vector"):
            raise InvalidParameterError(f"unknown signal kind {self.kind!r}")
        if self.kind == "explicit-vector" and self.vector is None:
            raise InvalidParameterError("explicit-vector signal needs a vector")
        if self.magnitude is not None:
            check_scalar(self.magnitude, "magnitude", lo=0, lo_open=True)


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearModel:
    """An immutable problem instance; arrays are read-only."""

    design: np.ndarray
    signal: np.ndarray
    noise: np.ndarray
    k: int
    seed: int = 0
    trial: int = 0
    contaminated: np.ndarray = field(default=None)
    observations: np.ndarray = field(default=None)

    def __post_init__(self):
        X = _readonly(self.design)
        if X.ndim != 2:
            raise InvalidParameterError("design must be a matrix")
        n, p = X.shape
        theta = _readonly(as_vector(self.signal, "signal", p))
        eps = _readonly(as_vector(self.noise, "noise", n))
        mask = np.zeros(n, bool) if self.contaminated is None else np.asarray(self.contaminated, bool)
        mask = mask.copy()
        mask.setflags(write=False)
        y = X @ theta + eps if self.observations is None else self.observations
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "signal", theta)
        object.__setattr__(self, "noise", eps)
        object.__setattr__(self, "contaminated", mask)
        object.__setattr__(self, "observations", _readonly(as_vector(y, "observations", n)))

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]


def gen_design(n, p, seed, trial=0):
    """``n x p`` matrix of i.i.d. ``N(0, 1/n)`` entries, filled row-major."""
    n = check_count(n, "n")
    p = check_count(p, "p")
    gen = _rng.stream(seed, trial, _rng.DESIGN)
    return _rng.normals(gen, n * p).reshape(n, p) / np.sqrt(n)


def gen_signal(p, k, spec=None, seed=0, trial=0):
    """k-sparse signal.

    The support is the ``k`` smallest of ``p`` uniforms (a uniformly random
    subset); signs come from ``k`` further uniforms.
    """
    spec = SignalSpec() if spec is None else spec
    p = check_count(p, "p")
    k = check_count(k, "k")
    if k > p:
        raise InvalidParameterError(f"sparsity k={k} exceeds p={p}")
    if spec.kind == "explicit-vector":
        return as_vector(spec.vector, "signal", p).copy()
    gen = _rng.stream(seed, trial, _rng.SIGNAL)
    support = np.argsort(_rng.uniforms(gen, p), kind="stable")[:k]
    signs = np.where(_rng.uniforms(gen, k) < 0.5, -1.0, 1.0)
    mag = 1.0 / np.sqrt(k) if spec.magnitude is None else float(spec.magnitude)
    theta = np.zeros(p)
    theta[support] = signs * mag
    return theta


def gen_noise(n, spec, seed=0, trial=0):
    """Noise vector and the boolean mask of contaminated coordinates.

    The Gaussian part always consumes the first ``n`` words of the stream, so
    ``eps_h = 0`` reproduces pure Gaussian noise exactly.
    """
    n = check_count(n, "n")
    gen = _rng.stream(seed, trial, _rng.NOISE)
    eps = _rng.normals(gen, n) * np.sqrt(spec.sigma2)
    mask = np.zeros(n, bool)
    if spec.kind == "huber-mixture" and spec.eps_h > 0:
        mask = _rng.uniforms(gen, n) < spec.eps_h
        m = int(mask.sum())
        if spec.contam == "point-mass":
            eps[mask] = spec.contam_level
        else:
            w = _rng.uniforms(gen, m)
            eps[mask] = spec.contam_level * np.tan(np.pi * (w - 0.5))
    return eps, mask


def make_instance(n, p, k, signal_spec=None, noise_spec=None, seed=0, trial=0):
    """Draw a full :class:`LinearModel`; noise defaults to ``NoiseSpec.for_sparse(n)``."""
    noise_spec = NoiseSpec.for_sparse(n) if noise_spec is None else noise_spec
    X = gen_design(n, p, seed, trial)
    theta = gen_signal(p, k, signal_spec, seed, trial)
    eps, mask = gen_noise(n, noise_spec, seed, trial)
    return LinearModel(X, theta, eps, k=k, seed=seed, trial=trial, contaminated=mask)


def save_instance(model, path):
    """Write a binary replay file.

    Layout (little endian): 8-byte magic, ``u32`` format version, ``u32``
    reserved, ``u64`` n, p, k, seed, trial; then float64 design (row-major),
    signal, noise, observations; then one byte per contamination flag.
    """
    head = _HEADER.pack(_MAGIC, FORMAT_VERSION, 0, model.n, model.p, model.k,
                        int(model.seed) & ((1 << 64) - 1), int(model.trial))
    with open(path, "wb") as fh:
        fh.write(head)
        for arr in (model.design, model.signal, model.noise, model.observations):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(model.contaminated.astype(np.uint8).tobytes())


def load_instance(path):
    """Inverse of :func:`save_instance`; rejects unknown versions."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise InvalidParameterError("file too short for an instance header")
    magic, version, _, n, p, k, seed, trial = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise InvalidParameterError("not an instance file")
    if version != FORMAT_VERSION:
        raise InvalidParameterError(f"unsupported instance format version {version}")
    sizes = [n * p, p, n, n]
    need = _HEADER.size + 8 * sum(sizes) + n
    if len(blob) != need:
        raise InvalidParameterError("instance file has the wrong length")
    off = _HEADER.size
    parts = []
    for size in sizes:
        parts.append(np.frombuffer(blob, "<f8", size, off).astype(np.float64))
        off += 8 * size
    mask = np.frombuffer(blob, np.uint8, n, off).astype(bool)
    X, theta, eps, y = parts
    return LinearModel(X.reshape(n, p), theta, eps, k=k, seed=seed, trial=trial,
                       contaminated=mask, observations=y)
