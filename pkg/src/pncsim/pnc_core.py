"""Mapping-matrix design and PNC codec for the two-user 4-QAM uplink.

Covers the constellation geometry (superposition of two 4-QAM signals at
one access point), enumeration of singular fade states (channel ratios
where superimposed points coincide), the offline exhaustive search for
binary mapping matrices that resolve each fade state, the online
selection of a combined invertible mapping, and encode/decode.

Joint source words are indexed 0..15 with UE1's two bits in the counter's
most significant positions: word w = (w1, w2, w3, w4), index
8*w1 + 4*w2 + 2*w3 + w4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import gf2
from .gf2 import Gf2Matrix, Gf2Vector

N_WORDS = 16
N_SFS = 5
COINCIDENCE_TOL = 1e-9


class CatalogIntegrityError(RuntimeError):
    """A decode path hit a matrix that should never be singular."""


@dataclass(frozen=True)
class QamConstellation:
    """Unit-energy 4-QAM with a fixed bit-pair labeling.

    ``points[2*b0 + b1]`` is the symbol for bit pair (b0, b1). The default
    uses Gray labeling: 00 -> (+1+j)/sqrt2, 01 -> (-1+j)/sqrt2,
    11 -> (-1-j)/sqrt2, 10 -> (+1-j)/sqrt2.
    """

    points: tuple

    @classmethod
    def default_4qam(cls) -> "QamConstellation":
        s = 1.0 / math.sqrt(2.0)
        return cls(
            points=(
                complex(s, s),    # 00
                complex(-s, s),   # 01
                complex(s, -s),   # 10
                complex(-s, -s),  # 11
            )
        )

    @property
    def order(self) -> int:
        return len(self.points)

    def labeling_header(self) -> str:
        tags = []
        for b in range(4):
            p = self.points[b]
            tags.append(f"{b >> 1}{b & 1}:{p.real:+.6f}{p.imag:+.6f}j")
        return " ".join(tags)

    def point_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.complex128)


def modulate_4qam(bits: Sequence[int], c: Optional[QamConstellation] = None) -> complex:
    """Map a bit pair to its constellation point."""
    if c is None:
        c = QamConstellation.default_4qam()
    b0, b1 = bits
    return c.points[2 * int(b0) + int(b1)]


def word_bits(index: int) -> Tuple[int, int, int, int]:
    """Joint word (w1, w2, w3, w4) for a 4-bit counter index."""
    return ((index >> 3) & 1, (index >> 2) & 1, (index >> 1) & 1, index & 1)


def word_index(bits: Sequence[int]) -> int:
    w1, w2, w3, w4 = bits
    return (w1 << 3) | (w2 << 2) | (w3 << 1) | w4


@dataclass(frozen=True)
class SourceWord:
    """Joint 4-bit message: UE1 bits then UE2 bits."""

    bits: tuple

    def __init__(self, bits: Sequence[int]):
        bits = tuple(int(b) for b in bits)
        if len(bits) != 4 or any(b not in (0, 1) for b in bits):
            raise ValueError(f"source word must be 4 binary values, got {bits}")
        object.__setattr__(self, "bits", bits)

    @property
    def index(self) -> int:
        return word_index(self.bits)

    @property
    def ue1_bits(self) -> Tuple[int, int]:
        return self.bits[0], self.bits[1]

    @property
    def ue2_bits(self) -> Tuple[int, int]:
        return self.bits[2], self.bits[3]


def ue_symbol_indices(word: int) -> Tuple[int, int]:
    """Constellation indices (UE1, UE2) for a joint word index."""
    return (word >> 2) & 3, word & 3


@dataclass(frozen=True)
class SuperposedConstellation:
    """The 16 superimposed points h1*s1 + h2*s2 in word-counter order."""

    h: Tuple[complex, complex]
    points: np.ndarray

    def pairwise_sq_distances(self) -> np.ndarray:
        d = self.points[:, None] - self.points[None, :]
        return np.abs(d) ** 2


def superimpose(
    h: Tuple[complex, complex], c: Optional[QamConstellation] = None
) -> SuperposedConstellation:
    """All 16 superimposed points at channel pair h = (h1, h2)."""
    if c is None:
        c = QamConstellation.default_4qam()
    h1, h2 = complex(h[0]), complex(h[1])
    if not (np.isfinite(h1) and np.isfinite(h2)):
        raise ValueError("channel coefficients must be finite")
    pts = c.point_array()
    idx = np.arange(N_WORDS)
    points = h1 * pts[(idx >> 2) & 3] + h2 * pts[idx & 3]
    return SuperposedConstellation(h=(h1, h2), points=points)


def ncv_codes(m: Gf2Matrix) -> np.ndarray:
    """2-bit NCV code (x1*2 + x2) of every joint word under a 2x4 mapping."""
    if m.rows != 2 or m.cols != 4:
        raise ValueError("mapping matrices are 2x4")
    r0, r1 = m.row_masks()
    codes = np.empty(N_WORDS, dtype=np.int64)
    for w in range(N_WORDS):
        # word bits (w1..w4) live at mask bits 0..3 in that order
        mask = ((w >> 3) & 1) | (((w >> 2) & 1) << 1) | (((w >> 1) & 1) << 2) | ((w & 1) << 3)
        codes[w] = (gf2._parity(r0 & mask) << 1) | gf2._parity(r1 & mask)
    return codes


def pnc_encode(m_j: Gf2Matrix, w) -> Gf2Vector:
    """Network coded vector x_j = M_j * w over GF(2)."""
    if isinstance(w, SourceWord):
        w = Gf2Vector(w.bits)
    return gf2.mat_mul_mod2(m_j, w)


def coincident_pairs(
    v: complex, c: Optional[QamConstellation] = None, tol: float = COINCIDENCE_TOL
) -> List[Tuple[int, int]]:
    """Word pairs whose superimposed points coincide at h = (1, v)."""
    sc = superimpose((1.0, v), c)
    scale = max(1.0, float(np.max(np.abs(sc.points))))
    dist = np.abs(sc.points[:, None] - sc.points[None, :])
    pairs = []
    for a in range(N_WORDS):
        for b in range(a + 1, N_WORDS):
            if dist[a, b] <= tol * scale:
                pairs.append((a, b))
    return pairs


def resolves_sfs(
    v: complex,
    m: Gf2Matrix,
    tol: float = COINCIDENCE_TOL,
    c: Optional[QamConstellation] = None,
) -> bool:
    """True when every coincident word pair at h=(1, v) shares an NCV."""
    codes = ncv_codes(m)
    return all(codes[a] == codes[b] for a, b in coincident_pairs(v, c, tol))


def min_ncv_distance(sc: SuperposedConstellation, m: Gf2Matrix) -> float:
    """Minimum squared distance between points carrying different NCVs.

    Returns +inf when the mapping sends all 16 words to a single NCV.
    """
    codes = ncv_codes(m)
    if np.all(codes == codes[0]):
        return math.inf
    d2 = sc.pairwise_sq_distances()
    diff = codes[:, None] != codes[None, :]
    return float(np.min(d2[diff]))


@dataclass(frozen=True)
class SfsCatalog:
    """Retained singular fade states, one representative per image class.

    ``values`` is the frozen ordered list; ``members[l]`` holds every raw
    ratio collapsed into entry l (representative first).
    """

    values: tuple
    tolerance: float
    members: tuple = ()

    def __len__(self) -> int:
        return len(self.values)


def _dedupe_complex(values: List[complex], tol: float) -> List[complex]:
    out: List[complex] = []
    for v in values:
        if not any(abs(v - u) <= tol for u in out):
            out.append(v)
    return out


def enumerate_sfs(
    c: Optional[QamConstellation] = None, tol: float = COINCIDENCE_TOL
) -> SfsCatalog:
    """Enumerate channel-ratio singular fade states and remove images.

    Every ratio v = (s1(t) - s1(t')) / (s2(t') - s2(t)) over joint word
    pairs is a fade state: at h = (1, v) the two superimposed points
    coincide. Two fade states are images of each other when one surjective
    2x4 mapping resolves both; each image class keeps a single
    representative. The retained order is frozen: classes sorted by
    representative magnitude, then real part, then imaginary part, with
    the representative chosen as the member with the largest imaginary
    part (ties to the largest real part).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if c is None:
        c = QamConstellation.default_4qam()
    pts = c.point_array()

    raw: List[complex] = []
    for a in range(N_WORDS):
        ia1, ia2 = ue_symbol_indices(a)
        for b in range(a + 1, N_WORDS):
            ib1, ib2 = ue_symbol_indices(b)
            den = pts[ib2] - pts[ia2]
            if abs(den) <= tol:
                continue
            v = complex((pts[ia1] - pts[ib1]) / den)
            raw.append(complex(v.real + 0.0, v.imag + 0.0))  # scrub -0.0
    values = _dedupe_complex(raw, tol)
    values.sort(key=lambda v: (round(abs(v), 9), round(v.real, 9), round(v.imag, 9)))

    # image grouping: union values co-resolved by any one surjective mapping
    pair_lists = [coincident_pairs(v, c, tol) for v in values]
    parent = list(range(len(values)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for m in gf2.enumerate_matrices(2, 4):
        if gf2.rank_mod2(m) != 2:
            continue
        codes = ncv_codes(m)
        resolved = [
            k
            for k, pairs in enumerate(pair_lists)
            if all(codes[a] == codes[b] for a, b in pairs)
        ]
        for k in resolved[1:]:
            union(resolved[0], k)

    groups: Dict[int, List[complex]] = {}
    for k, v in enumerate(values):
        groups.setdefault(find(k), []).append(v)

    classes = []
    for vs in groups.values():
        vs_sorted = sorted(vs, key=lambda v: (-round(v.imag, 9), -round(v.real, 9)))
        classes.append(vs_sorted)
    classes.sort(
        key=lambda vs: (
            round(abs(vs[0]), 9),
            round(vs[0].real, 9),
            round(vs[0].imag, 9),
        )
    )
    return SfsCatalog(
        values=tuple(vs[0] for vs in classes),
        tolerance=tol,
        members=tuple(tuple(vs) for vs in classes),
    )


@dataclass(frozen=True)
class MappingEntry:
    """Combined mapping for one (SFS at AP1, SFS at AP2) pair."""

    i: int
    j: int
    m1: Gf2Matrix
    m2: Gf2Matrix
    combined: Gf2Matrix
    dmin1: float
    dmin2: float

    @property
    def mapping_index(self) -> int:
        return 5 * (self.i - 1) + self.j


@dataclass(frozen=True)
class MappingCatalog:
    """Offline-search output: per-SFS candidates and the 25 combined maps."""

    sfs: SfsCatalog
    candidates: tuple            # per SFS: tuple of resolving 2x4 matrices
    entries: Dict[Tuple[int, int], MappingEntry]
    constellation: QamConstellation

    @property
    def optimal_per_sfs(self) -> List[Gf2Matrix]:
        return [cands[0] for cands in self.candidates]

    def entry(self, i: int, j: int) -> MappingEntry:
        return self.entries[(i, j)]

    def by_mapping_index(self, index: int) -> MappingEntry:
        if not 1 <= index <= 25:
            raise ValueError(f"mapping index must be 1..25, got {index}")
        return self.entries[((index - 1) // 5 + 1, (index - 1) % 5 + 1)]


def offline_search(
    c: Optional[QamConstellation] = None, tol: float = COINCIDENCE_TOL
) -> MappingCatalog:
    """Exhaustive search for per-SFS mappings and full-rank combinations.

    Per fade state: scan all 256 candidate 2x4 matrices and keep the
    surjective (rank-2) ones that resolve it; these all share one row
    space and therefore one NCV distance. Per (i, j) pair: choose the
    full-rank stack maximising min(dmin1, dmin2), then dmin1, then dmin2,
    ties broken by lowest enumeration index. When no full-rank stack of
    resolving candidates exists (the two row spaces do not span GF(2)^4),
    the AP1 side keeps its resolving candidate and the AP2 side falls
    back to the lowest-index rank-2 matrix that completes rank 4; the
    fallback side necessarily has dmin 0.
    """
    if c is None:
        c = QamConstellation.default_4qam()
    sfs = enumerate_sfs(c, tol)

    candidates: List[List[Gf2Matrix]] = []
    dmins: List[float] = []
    superposed = [superimpose((1.0, v), c) for v in sfs.values]
    pair_lists = [coincident_pairs(v, c, tol) for v in sfs.values]
    for l in range(len(sfs.values)):
        cands = []
        for m in gf2.enumerate_matrices(2, 4):
            if gf2.rank_mod2(m) != 2:
                continue
            codes = ncv_codes(m)
            if all(codes[a] == codes[b] for a, b in pair_lists[l]):
                cands.append(m)
        if not cands:
            raise CatalogIntegrityError(f"no resolving mapping for fade state {l + 1}")
        candidates.append(cands)
        dmins.append(min_ncv_distance(superposed[l], cands[0]))

    entries: Dict[Tuple[int, int], MappingEntry] = {}
    for i in range(1, N_SFS + 1):
        for j in range(1, N_SFS + 1):
            chosen = None
            for m1 in candidates[i - 1]:
                for m2 in candidates[j - 1]:
                    if gf2.rank_mod2(m1.vstack(m2)) == 4:
                        chosen = (m1, m2, dmins[i - 1], dmins[j - 1])
                        break
                if chosen:
                    break
            if chosen is None:
                m1 = candidates[i - 1][0]
                m2 = None
                for m in gf2.enumerate_matrices(2, 4):
                    if gf2.rank_mod2(m) == 2 and gf2.rank_mod2(m1.vstack(m)) == 4:
                        m2 = m
                        break
                if m2 is None:
                    raise CatalogIntegrityError(f"no rank-4 completion for ({i},{j})")
                chosen = (m1, m2, dmins[i - 1], min_ncv_distance(superposed[j - 1], m2))
            m1, m2, d1, d2 = chosen
            entries[(i, j)] = MappingEntry(
                i=i, j=j, m1=m1, m2=m2, combined=m1.vstack(m2), dmin1=d1, dmin2=d2
            )
    return MappingCatalog(
        sfs=sfs, candidates=tuple(tuple(cs) for cs in candidates),
        entries=entries, constellation=c,
    )


def nearest_sfs(h_ratio: complex, cat: SfsCatalog) -> int:
    """1-based index of the catalog value closest to the channel ratio."""
    if not np.isfinite(h_ratio):
        raise ValueError("channel ratio must be finite")
    dists = [abs(complex(h_ratio) - v) for v in cat.values]
    return int(np.argmin(dists)) + 1


def online_select(
    i: int, j: int, cat: MappingCatalog
) -> Tuple[Gf2Matrix, Gf2Matrix, Gf2Matrix, int]:
    """Catalog lookup for the SFS pair reported by the two APs."""
    if not (1 <= i <= N_SFS and 1 <= j <= N_SFS):
        raise ValueError(f"SFS indices must be 1..{N_SFS}, got ({i}, {j})")
    e = cat.entry(i, j)
    if gf2.rank_mod2(e.combined) != 4:
        raise CatalogIntegrityError(f"catalog entry ({i},{j}) is singular")
    return e.m1, e.m2, e.combined, e.mapping_index


def ap_detect_ncv(
    y: complex,
    h: Tuple[complex, complex],
    m_j: Gf2Matrix,
    c: Optional[QamConstellation] = None,
) -> Gf2Vector:
    """ML joint-word detection followed by PNC encoding.

    Ties pick the lowest word index, which is harmless when the mapping
    resolves the active fade state: tied hypotheses then share an NCV.
    """
    sc = superimpose(h, c)
    w_star = int(np.argmin(np.abs(complex(y) - sc.points) ** 2))
    return pnc_encode(m_j, Gf2Vector(word_bits(w_star)))


def hub_decode(combined: Gf2Matrix, x1: Gf2Vector, x2: Gf2Vector) -> Gf2Vector:
    """Recover the joint word from both APs' NCVs."""
    inv = gf2.invert_mod2(combined)
    if inv is None:
        raise CatalogIntegrityError("combined mapping matrix is singular")
    return gf2.mat_mul_mod2(inv, x1.concat(x2))


# --- catalog file round trip ------------------------------------------------


def export_catalog(cat: MappingCatalog, path) -> None:
    """Write the catalog: header, SFS values, 25 matrix blocks with dmins."""
    lines = []
    lines.append("# pnc mapping catalog")
    lines.append(f"# labeling: {cat.constellation.labeling_header()}")
    lines.append(f"# tolerance: {cat.sfs.tolerance:.17g}")
    lines.append(f"sfs {len(cat.sfs.values)}")
    for v in cat.sfs.values:
        lines.append(f"{v.real:.17g} {v.imag:.17g}")
    for i in range(1, N_SFS + 1):
        for j in range(1, N_SFS + 1):
            e = cat.entry(i, j)
            lines.append("")
            lines.append(f"M {i} {j}")
            lines.append(str(e.combined))
            lines.append(f"dmin {e.dmin1:.17g} {e.dmin2:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_catalog(path, c: Optional[QamConstellation] = None) -> MappingCatalog:
    """Read a catalog written by export_catalog."""
    if c is None:
        c = QamConstellation.default_4qam()
    with open(path) as fh:
        raw = [ln.rstrip("\n") for ln in fh]
    tol = COINCIDENCE_TOL
    for ln in raw:
        if ln.startswith("# tolerance:"):
            tol = float(ln.split(":", 1)[1])
    body = [ln for ln in raw if ln and not ln.startswith("#")]
    pos = 0
    tag, n_sfs = body[pos].split()
    if tag != "sfs":
        raise ValueError("malformed catalog: missing sfs header")
    pos += 1
    values = []
    for _ in range(int(n_sfs)):
        re_s, im_s = body[pos].split()
        values.append(complex(float(re_s), float(im_s)))
        pos += 1
    sfs = SfsCatalog(values=tuple(values), tolerance=tol)

    entries: Dict[Tuple[int, int], MappingEntry] = {}
    while pos < len(body):
        tag, i_s, j_s = body[pos].split()
        if tag != "M":
            raise ValueError(f"malformed catalog block at: {body[pos]!r}")
        i, j = int(i_s), int(j_s)
        rows = [[int(ch) for ch in body[pos + 1 + r]] for r in range(4)]
        combined = Gf2Matrix.from_rows(rows)
        dtag, d1_s, d2_s = body[pos + 5].split()
        if dtag != "dmin":
            raise ValueError("malformed catalog: missing dmin line")
        entries[(i, j)] = MappingEntry(
            i=i, j=j,
            m1=combined.top_half(), m2=combined.bottom_half(),
            combined=combined, dmin1=float(d1_s), dmin2=float(d2_s),
        )
        pos += 6
    candidates = tuple((entries[(l, 1)].m1,) for l in range(1, N_SFS + 1))
    return MappingCatalog(sfs=sfs, candidates=candidates, entries=entries, constellation=c)
