"""Text encoders: hashed character-trigram vectors, file-backed lookup, noise injection."""

from __future__ import annotations

import hashlib
import zlib

import numpy as np


class DimensionMismatch(ValueError):
    pass


class LookupMiss(KeyError):
    """File-backed encoder has no entry for a text and no fallback is configured."""


def text_key(text: str) -> str:
    """Stable lookup key for the embeddings file: sha256 hex of the UTF-8 text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class TrigramEncoder:
    """Deterministic bag-of-character-trigrams encoder with signed hashing.

    Every trigram of the input is hashed (crc32) into one of `dim` buckets with
    a +/-1 sign taken from the hash's top bit; the bucket counts are then
    L2-normalized. Empty text encodes to the zero vector. Inputs shorter than
    three characters contribute a single gram (the whole string).
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError(f"encoder dim must be >= 1, got {dim}")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def encode(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = np.zeros(self.dim, dtype=np.float64)
        if text:
            grams = (
                [text[i : i + 3] for i in range(len(text) - 2)]
                if len(text) >= 3
                else [text]
            )
            for gram in grams:
                h = zlib.crc32(gram.encode("utf-8"))
                sign = 1.0 if (h >> 31) & 1 == 0 else -1.0
                vec[h % self.dim] += sign
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                # pathological full cancellation: fall back to one whole-string bucket
                vec[zlib.crc32(text.encode("utf-8")) % self.dim] = 1.0
                norm = 1.0
            vec /= norm
        vec.flags.writeable = False
        self._cache[text] = vec
        return vec


class FileEncoder:
    """Exact-string lookup encoder backed by a sidecar embeddings file.

    File format: one record per line, `<sha256-of-text> TAB <d space-separated
    floats>`. Misses raise LookupMiss unless a fallback encoder is given.
    """

    def __init__(self, path: str, dim: int, fallback: TrigramEncoder | None = None):
        self.dim = dim
        self.fallback = fallback
        self._table: dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                key, _, rest = line.partition("\t")
                values = np.array(rest.split(), dtype=np.float64)
                if values.shape[0] != dim:
                    raise ValueError(
                        f"{path}:{lineno}: expected {dim} floats, got {values.shape[0]}"
                    )
                values.flags.writeable = False
                self._table[key] = values

    def encode(self, text: str) -> np.ndarray:
        hit = self._table.get(text_key(text))
        if hit is not None:
            return hit
        if self.fallback is not None:
            return self.fallback.encode(text)
        raise LookupMiss(f"no embedding for text of key {text_key(text)!r}")


def write_embeddings_file(path: str, entries: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for text, vec in entries.items():
            fh.write(text_key(text) + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


def add_noise(
    u: np.ndarray, n: float, rng: np.random.Generator, isotropic: bool = False
) -> np.ndarray:
    """Gaussian-perturb an encoding, per-coordinate std n*|u_i| (or n*||u|| if isotropic)."""
    if n < 0:
        raise ValueError(f"noise level must be >= 0, got {n}")
    if n == 0:
        return u
    if isotropic:
        sigma = n * float(np.linalg.norm(u))
        return u + rng.normal(0.0, 1.0, size=u.shape) * sigma
    return u + rng.normal(0.0, 1.0, size=u.shape) * (n * np.abs(u))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
