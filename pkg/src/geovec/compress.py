"""Compression of float embeddings into binary codes.

Three methods are provided:

- ``binarize``: one bit per component, set when the value is >= 0. The sign
  rule treats zero as positive so the mapping is total. A 768-dim float32
  row (3072 bytes) becomes a 768-bit code (96 bytes), a 32x reduction.
- ``trivial_hash``: the embedding is split into equally sized groups of
  consecutive components, each group is averaged, and the sign of the mean
  becomes one output bit. 768 dims at 64 bits means 12 values per bit.
- ``lsh_hash``: random-hyperplane codes. Each bit is the sign of the dot
  product with a hyperplane normal drawn i.i.d. standard normal.

LSH reproducibility: normals are generated from a PCG64 stream seeded with
the spec seed, converted to normals through the inverse normal CDF applied
to 53-bit uniforms. Both the generator and the sampling method are pinned so
the same seed yields the same hyperplanes everywhere.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, ValidationError
from .vecstore import Dtype, EmbeddingMatrix, pack_bits


class Method(enum.Enum):
    BINARIZE = "binarize"
    TRIVIAL_HASH = "trivial-hash"
    LSH = "lsh"


@dataclass(frozen=True)
class CompressionSpec:
    """How to turn float vectors into codes.

    `output_bits` is ignored for BINARIZE (the code length equals the input
    dim). TRIVIAL_HASH requires `output_bits` to divide the input dim
    exactly; LSH requires a seed.
    """

    method: Method
    output_bits: Optional[int] = None
    seed: Optional[int] = None

    def validate(self, dim: int) -> None:
        if self.method is Method.BINARIZE:
            return
        if self.output_bits is None or self.output_bits < 1:
            raise ConfigError(f"{self.method.value} requires a positive output_bits")
        if self.method is Method.TRIVIAL_HASH and dim % self.output_bits != 0:
            raise ConfigError(
                f"trivial hash needs output_bits to divide dim: dim={dim}, "
                f"bits={self.output_bits}, remainder={dim % self.output_bits}"
            )
        if self.method is Method.LSH and self.seed is None:
            raise ConfigError("lsh requires a seed")


def _require_float(matrix: EmbeddingMatrix, op: str) -> None:
    if matrix.dtype is not Dtype.FLOAT32:
        raise ValidationError(f"{op} requires a float32 matrix, got {matrix.dtype.name}")


def binarize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Sign-binarize each component: bit = 1 iff value >= 0."""
    _require_float(matrix, "binarize")
    bits = matrix.data >= 0.0
    return EmbeddingMatrix(Dtype.PACKED_BITS, matrix.dim, pack_bits(bits))


def trivial_hash(matrix: EmbeddingMatrix, spec: CompressionSpec) -> EmbeddingMatrix:
    """Group-mean hash: average consecutive groups, take the sign of each mean."""
    _require_float(matrix, "trivial_hash")
    if spec.method is not Method.TRIVIAL_HASH:
        raise ConfigError(f"spec method is {spec.method.value}, expected trivial-hash")
    spec.validate(matrix.dim)
    bits_out = spec.output_bits
    group = matrix.dim // bits_out
    # float64 group means; a group mean of exactly zero maps to bit 1
    means = matrix.data.reshape(matrix.count, bits_out, group).mean(axis=2, dtype=np.float64)
    return EmbeddingMatrix(Dtype.PACKED_BITS, bits_out, pack_bits(means >= 0.0))


def lsh_hyperplanes(dim: int, output_bits: int, seed: int) -> np.ndarray:
    """Deterministic `(output_bits, dim)` float64 hyperplane normals.

    PCG64 uniforms on a 53-bit grid in (0, 1), mapped through the inverse
    normal CDF. Pinned so codes are reproducible from the seed alone.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    grid = np.float64(1 << 53)
    u = (rng.integers(1, 1 << 53, size=(output_bits, dim), dtype=np.int64)).astype(np.float64) / grid
    return ndtri(u)


def lsh_hash(matrix: EmbeddingMatrix, spec: CompressionSpec) -> EmbeddingMatrix:
    """Random-hyperplane codes: bit = 1 iff the projection onto the normal is >= 0."""
    _require_float(matrix, "lsh_hash")
    if spec.method is not Method.LSH:
        raise ConfigError(f"spec method is {spec.method.value}, expected lsh")
    spec.validate(matrix.dim)
    planes = lsh_hyperplanes(matrix.dim, spec.output_bits, spec.seed)
    projections = matrix.data.astype(np.float64) @ planes.T
    return EmbeddingMatrix(Dtype.PACKED_BITS, spec.output_bits, pack_bits(projections >= 0.0))


def apply(matrix: EmbeddingMatrix, spec: CompressionSpec) -> EmbeddingMatrix:
    """Dispatch to the method named by the spec."""
    if spec.method is Method.BINARIZE:
        return binarize(matrix)
    if spec.method is Method.TRIVIAL_HASH:
        return trivial_hash(matrix, spec)
    return lsh_hash(matrix, spec)


def compression_ratio(input_matrix: EmbeddingMatrix, output_matrix: EmbeddingMatrix) -> Fraction:
    """Exact payload-size ratio input/output for two matrices of equal row count."""
    if input_matrix.count != output_matrix.count:
        raise ValidationError(
            f"row count mismatch: {input_matrix.count} vs {output_matrix.count}"
        )
    if input_matrix.count == 0:
        # fall back to per-row sizes; both payloads are empty
        def row_bytes(m: EmbeddingMatrix) -> int:
            return m.dim * 4 if m.dtype is Dtype.FLOAT32 else (m.dim + 7) // 8

        return Fraction(row_bytes(input_matrix), row_bytes(output_matrix))
    return Fraction(input_matrix.payload_nbytes, output_matrix.payload_nbytes)
