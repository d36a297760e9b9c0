"""Dense GF(2) linear algebra for small bit-packed matrices.

Matrices are capped at 8x8 so a whole matrix fits in one machine word;
the codec only ever needs 2x4 and 4x4. Entries are packed row-major into
an integer: bit (r * cols + c) holds entry (r, c). The packed integer
doubles as the deterministic enumeration index of the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

MAX_DIM = 8


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class Gf2Vector:
    """Binary vector; bits[0] is the first component."""

    bits: tuple

    def __init__(self, bits: Sequence[int]):
        bits = tuple(bits)
        if not bits:
            raise ValueError("empty vector")
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"vector entries must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def mask(self) -> int:
        m = 0
        for k, b in enumerate(self.bits):
            m |= b << k
        return m

    @classmethod
    def from_mask(cls, mask: int, length: int) -> "Gf2Vector":
        return cls(tuple((mask >> k) & 1 for k in range(length)))

    def concat(self, other: "Gf2Vector") -> "Gf2Vector":
        return Gf2Vector(self.bits + other.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class Gf2Matrix:
    """Binary matrix packed row-major into ``bits``."""

    rows: int
    cols: int
    bits: int

    def __post_init__(self):
        if not (1 <= self.rows <= MAX_DIM and 1 <= self.cols <= MAX_DIM):
            raise ValueError(
                f"dimensions must be in 1..{MAX_DIM}, got {self.rows}x{self.cols}"
            )
        if not (0 <= self.bits < 1 << (self.rows * self.cols)):
            raise ValueError("bit pattern out of range for matrix size")

    @classmethod
    def from_rows(cls, row_lists: Sequence[Sequence[int]]) -> "Gf2Matrix":
        rows = len(row_lists)
        cols = len(row_lists[0])
        bits = 0
        for r, row in enumerate(row_lists):
            if len(row) != cols:
                raise ValueError("ragged rows")
            for c, e in enumerate(row):
                if e not in (0, 1):
                    raise ValueError(f"entries must be 0 or 1, got {e}")
                bits |= e << (r * cols + c)
        return cls(rows, cols, bits)

    @classmethod
    def identity(cls, n: int) -> "Gf2Matrix":
        bits = 0
        for r in range(n):
            bits |= 1 << (r * n + r)
        return cls(n, n, bits)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Gf2Matrix":
        return cls(rows, cols, 0)

    def entry(self, r: int, c: int) -> int:
        return (self.bits >> (r * self.cols + c)) & 1

    def row_mask(self, r: int) -> int:
        return (self.bits >> (r * self.cols)) & ((1 << self.cols) - 1)

    def row_masks(self) -> List[int]:
        return [self.row_mask(r) for r in range(self.rows)]

    def to_rows(self) -> List[List[int]]:
        return [
            [self.entry(r, c) for c in range(self.cols)] for r in range(self.rows)
        ]

    def transpose(self) -> "Gf2Matrix":
        bits = 0
        for r in range(self.rows):
            for c in range(self.cols):
                bits |= self.entry(r, c) << (c * self.rows + r)
        return Gf2Matrix(self.cols, self.rows, bits)

    def vstack(self, other: "Gf2Matrix") -> "Gf2Matrix":
        if self.cols != other.cols:
            raise ValueError("column counts differ")
        return Gf2Matrix(
            self.rows + other.rows,
            self.cols,
            self.bits | (other.bits << (self.rows * self.cols)),
        )

    def top_half(self) -> "Gf2Matrix":
        n = self.rows // 2
        mask = (1 << (n * self.cols)) - 1
        return Gf2Matrix(n, self.cols, self.bits & mask)

    def bottom_half(self) -> "Gf2Matrix":
        n = self.rows // 2
        return Gf2Matrix(self.rows - n, self.cols, self.bits >> (n * self.cols))

    def __str__(self) -> str:
        return "\n".join(
            "".join(str(self.entry(r, c)) for c in range(self.cols))
            for r in range(self.rows)
        )


def mat_mul_mod2(a: Gf2Matrix, v: Gf2Vector) -> Gf2Vector:
    """Matrix-vector product over GF(2)."""
    if a.cols != len(v):
        raise ValueError(f"dimension mismatch: {a.rows}x{a.cols} times {len(v)}")
    m = v.mask
    return Gf2Vector(tuple(_parity(a.row_mask(r) & m) for r in range(a.rows)))


def mat_mat_mod2(a: Gf2Matrix, b: Gf2Matrix) -> Gf2Matrix:
    """Matrix-matrix product over GF(2)."""
    if a.cols != b.rows:
        raise ValueError("dimension mismatch")
    bt = b.transpose()
    bits = 0
    for r in range(a.rows):
        ra = a.row_mask(r)
        for c in range(b.cols):
            bits |= _parity(ra & bt.row_mask(c)) << (r * b.cols + c)
    return Gf2Matrix(a.rows, b.cols, bits)


def rank_mod2(a: Gf2Matrix) -> int:
    """Rank over GF(2) by Gaussian elimination on row masks."""
    work = a.row_masks()
    rank = 0
    for col in range(a.cols):
        pivot = None
        for r in range(rank, len(work)):
            if (work[r] >> col) & 1:
                pivot = r
                break
        if pivot is None:
            continue
        work[rank], work[pivot] = work[pivot], work[rank]
        for r in range(len(work)):
            if r != rank and ((work[r] >> col) & 1):
                work[r] ^= work[rank]
        rank += 1
        if rank == len(work):
            break
    return rank


def invert_mod2(a: Gf2Matrix) -> Optional[Gf2Matrix]:
    """Inverse over GF(2), or None when the matrix is singular."""
    if a.rows != a.cols:
        raise ValueError("only square matrices can be inverted")
    n = a.rows
    work = a.row_masks()
    aug = [1 << r for r in range(n)]
    row = 0
    for col in range(n):
        pivot = None
        for r in range(row, n):
            if (work[r] >> col) & 1:
                pivot = r
                break
        if pivot is None:
            return None
        work[row], work[pivot] = work[pivot], work[row]
        aug[row], aug[pivot] = aug[pivot], aug[row]
        for r in range(n):
            if r != row and ((work[r] >> col) & 1):
                work[r] ^= work[row]
                aug[r] ^= aug[row]
        row += 1
    bits = 0
    for r in range(n):
        bits |= aug[r] << (r * n)
    return Gf2Matrix(n, n, bits)


def enumerate_matrices(rows: int, cols: int) -> Iterator[Gf2Matrix]:
    """All 2^(rows*cols) matrices in ascending bit-pattern order."""
    if rows * cols > 16:
        raise ValueError("enumeration limited to rows*cols <= 16")
    for bits in range(1 << (rows * cols)):
        yield Gf2Matrix(rows, cols, bits)


# --- text format: one matrix per block, '0'/'1' row strings, blank-line separated


def matrix_to_text(a: Gf2Matrix) -> str:
    return str(a)


def matrices_to_text(mats: Sequence[Gf2Matrix]) -> str:
    return "\n\n".join(str(m) for m in mats) + "\n"


def matrices_from_text(text: str) -> List[Gf2Matrix]:
    mats = []
    for block in text.strip().split("\n\n"):
        rows = [[int(ch) for ch in line.strip()] for line in block.splitlines() if line.strip()]
        if rows:
            mats.append(Gf2Matrix.from_rows(rows))
    return mats
