"""Constellation geometry, fade-state search, mapping selection, codec."""

import math

import numpy as np
import pytest

from pncsim import gf2, pnc_core
from pncsim.gf2 import Gf2Matrix, Gf2Vector
from pncsim.pnc_core import (
    SourceWord,
    min_ncv_distance,
    modulate_4qam,
    ncv_codes,
    nearest_sfs,
    online_select,
    pnc_encode,
    resolves_sfs,
    superimpose,
    word_bits,
)

from reference_tables import (
    ANOMALOUS_ENTRIES,
    FROZEN_SFS_MEMBERS,
    FROZEN_SFS_VALUES,
    RANK_DEFICIENT_PAIRS,
    REFERENCE_MATRICES,
)

XOR_MAP = Gf2Matrix.from_rows([[1, 0, 1, 0], [0, 1, 0, 1]])
UE1_ONLY = Gf2Matrix.from_rows([[1, 0, 0, 0], [0, 1, 0, 0]])


def brute_force_min_ncv(sc, m):
    """Independent oracle: plain loop over all 120 unordered point pairs."""
    codes = [tuple(pnc_encode(m, Gf2Vector(word_bits(w))).bits) for w in range(16)]
    best = math.inf
    for a in range(16):
        for b in range(a + 1, 16):
            if codes[a] != codes[b]:
                best = min(best, abs(sc.points[a] - sc.points[b]) ** 2)
    return best


class TestModulation:
    def test_default_labeling(self, constellation):
        s = 1 / math.sqrt(2)
        assert modulate_4qam((0, 0), constellation) == pytest.approx(complex(s, s))
        assert modulate_4qam((0, 1), constellation) == pytest.approx(complex(-s, s))
        assert modulate_4qam((1, 1), constellation) == pytest.approx(complex(-s, -s))
        assert modulate_4qam((1, 0), constellation) == pytest.approx(complex(s, -s))

    def test_unit_average_energy(self, constellation):
        energies = [abs(p) ** 2 for p in constellation.points]
        assert np.mean(energies) == pytest.approx(1.0)

    def test_gray_antipodal(self, constellation):
        assert modulate_4qam((1, 1), constellation) == pytest.approx(
            -modulate_4qam((0, 0), constellation)
        )

    def test_points_distinct(self, constellation):
        assert len(set(constellation.points)) == 4


class TestSuperimpose:
    def test_ue2_erased(self, constellation):
        sc = superimpose((1.0, 0.0), constellation)
        # 16 points collapse onto the 4 UE1 symbols, each seen 4 times
        uniq = {complex(round(p.real, 12), round(p.imag, 12)) for p in sc.points}
        assert len(uniq) == 4
        for w in range(16):
            assert sc.points[w] == pytest.approx(constellation.points[(w >> 2) & 3])

    def test_equal_gains_coincidence(self, constellation):
        sc = superimpose((1.0, 1.0), constellation)
        # joint words (00,01) and (01,00)
        assert sc.points[0b0001] == pytest.approx(sc.points[0b0100])

    def test_generic_ratio_all_distinct(self, constellation):
        sc = superimpose((1.0, 0.5), constellation)
        d = np.abs(sc.points[:, None] - sc.points[None, :])
        off = d[~np.eye(16, dtype=bool)]
        assert np.min(off) > 1e-6

    def test_word_counter_order(self, constellation):
        h = (0.8 - 0.1j, 0.3 + 0.4j)
        sc = superimpose(h, constellation)
        for w in range(16):
            bits = word_bits(w)
            expected = h[0] * modulate_4qam(bits[:2], constellation) + h[1] * modulate_4qam(
                bits[2:], constellation
            )
            assert sc.points[w] == pytest.approx(expected)


class TestSfsCatalog:
    def test_retained_count(self, catalog):
        assert len(catalog.sfs.values) == 5

    def test_contains_unity_ratio(self, catalog):
        assert any(abs(v - 1.0) < 1e-9 for v in catalog.sfs.values)

    def test_frozen_values(self, catalog):
        for got, want in zip(catalog.sfs.values, FROZEN_SFS_VALUES):
            assert got == pytest.approx(want, abs=1e-9)

    def test_frozen_members(self, catalog):
        assert len(catalog.sfs.members) == 5
        for got, want in zip(catalog.sfs.members, FROZEN_SFS_MEMBERS):
            assert sorted(got, key=lambda z: (z.real, z.imag)) == pytest.approx(
                sorted(want, key=lambda z: (z.real, z.imag)), abs=1e-9
            )

    def test_raw_ratio_derivation(self, constellation, catalog):
        # independent oracle: every pairwise symbol-difference ratio
        pts = constellation.point_array()
        raw = set()
        for a in range(16):
            for b in range(16):
                if a == b:
                    continue
                den = pts[(b & 3)] - pts[(a & 3)]
                if abs(den) < 1e-12:
                    continue
                v = (pts[(a >> 2) & 3] - pts[(b >> 2) & 3]) / den
                raw.add((round(v.real, 9), round(v.imag, 9)))
        members = {
            (round(m.real, 9), round(m.imag, 9))
            for group in catalog.sfs.members
            for m in group
        }
        assert members == raw
        assert len(raw) == 13

    def test_every_value_is_singular(self, catalog, constellation):
        for v in catalog.sfs.values:
            assert len(pnc_core.coincident_pairs(v, constellation)) > 0

    def test_image_removal_soundness(self, catalog, constellation):
        # every discarded ratio is resolved by a mapping that also
        # resolves its retained representative
        for group in catalog.sfs.members:
            rep, rest = group[0], group[1:]
            for v in rest:
                found = any(
                    resolves_sfs(v, m, c=constellation)
                    and resolves_sfs(rep, m, c=constellation)
                    for m in gf2.enumerate_matrices(2, 4)
                    if gf2.rank_mod2(m) == 2
                )
                assert found, f"discarded ratio {v} shares no resolver with {rep}"


class TestMinNcvDistance:
    def test_xor_at_equal_gains(self, constellation):
        sc = superimpose((1.0, 1.0), constellation)
        assert min_ncv_distance(sc, XOR_MAP) > 0

    def test_ue1_only_at_equal_gains(self, constellation):
        sc = superimpose((1.0, 1.0), constellation)
        assert min_ncv_distance(sc, UE1_ONLY) == 0

    def test_zero_matrix_infinite(self, constellation):
        sc = superimpose((0.3 + 0.2j, 1.1), constellation)
        assert min_ncv_distance(sc, Gf2Matrix.zeros(2, 4)) == math.inf

    def test_matches_brute_force(self, constellation):
        rng = np.random.default_rng(17)
        for _ in range(100):
            h = tuple((rng.standard_normal(2) + 1j * rng.standard_normal(2)) / math.sqrt(2))
            sc = superimpose(h, constellation)
            m = Gf2Matrix(2, 4, int(rng.integers(0, 256)))
            fast = min_ncv_distance(sc, m)
            slow = brute_force_min_ncv(sc, m)
            if math.isinf(slow):
                assert math.isinf(fast)
            else:
                assert fast == pytest.approx(slow, rel=1e-12)


class TestResolvesSfs:
    def test_xor_resolves_unity(self, constellation):
        assert resolves_sfs(1.0, XOR_MAP, c=constellation)

    def test_ue1_only_fails_unity(self, constellation):
        assert not resolves_sfs(1.0, UE1_ONLY, c=constellation)

    def test_reference_tops_resolve(self, constellation):
        # the one anomalous duplicate entry is excluded (see fixtures)
        for (i, j), m in REFERENCE_MATRICES.items():
            if (i, j) in ANOMALOUS_ENTRIES:
                continue
            assert resolves_sfs(FROZEN_SFS_VALUES[i - 1], m.top_half(), c=constellation)

    def test_reference_bottoms_resolve_where_achievable(self, constellation):
        for (i, j), m in REFERENCE_MATRICES.items():
            if (i, j) in RANK_DEFICIENT_PAIRS or (i, j) in ANOMALOUS_ENTRIES:
                continue
            assert resolves_sfs(FROZEN_SFS_VALUES[j - 1], m.bottom_half(), c=constellation)


class TestOfflineSearch:
    def test_combined_table_size(self, catalog):
        assert len(catalog.entries) == 25

    def test_five_canonical_candidates(self, catalog):
        assert len(catalog.optimal_per_sfs) == 5
        for l, m in enumerate(catalog.optimal_per_sfs, start=1):
            assert gf2.rank_mod2(m) == 2
            assert resolves_sfs(catalog.sfs.values[l - 1], m, c=catalog.constellation)

    def test_candidates_share_distance(self, catalog, constellation):
        for l, cands in enumerate(catalog.candidates):
            sc = superimpose((1.0, catalog.sfs.values[l]), constellation)
            ds = {round(min_ncv_distance(sc, m), 12) for m in cands}
            assert len(ds) == 1

    def test_all_entries_invertible(self, catalog):
        for e in catalog.entries.values():
            assert gf2.rank_mod2(e.combined) == 4

    def test_top_always_resolves(self, catalog, constellation):
        for (i, j), e in catalog.entries.items():
            assert resolves_sfs(catalog.sfs.values[i - 1], e.m1, c=constellation)

    def test_bottom_resolves_unless_rank_deficient(self, catalog, constellation):
        for (i, j), e in catalog.entries.items():
            resolved = resolves_sfs(catalog.sfs.values[j - 1], e.m2, c=constellation)
            if (i, j) in RANK_DEFICIENT_PAIRS:
                assert not resolved
                assert e.dmin2 == 0.0
            else:
                assert resolved
                assert e.dmin2 > 0.0

    def test_dmin_parity_with_reference(self, catalog, constellation):
        # the two anomalous reference entries are strictly worse than the
        # regenerated ones; everything else matches exactly
        sup = [superimpose((1.0, v), constellation) for v in catalog.sfs.values]
        for (i, j), ref in REFERENCE_MATRICES.items():
            e = catalog.entries[(i, j)]
            d1 = min_ncv_distance(sup[i - 1], ref.top_half())
            d2 = min_ncv_distance(sup[j - 1], ref.bottom_half())
            if (i, j) in ANOMALOUS_ENTRIES:
                assert min(e.dmin1, e.dmin2) >= min(d1, d2)
                assert (e.dmin1, e.dmin2) != (d1, d2)
            else:
                assert e.dmin1 == pytest.approx(d1, abs=1e-12)
                assert e.dmin2 == pytest.approx(d2, abs=1e-12)


class TestOnlineSelection:
    def test_nearest_exact(self, catalog):
        for l, v in enumerate(catalog.sfs.values, start=1):
            assert nearest_sfs(v, catalog.sfs) == l

    def test_near_unity_ratio(self, catalog):
        assert nearest_sfs(1.02 + 0.03j, catalog.sfs) == 4
        assert catalog.sfs.values[3] == pytest.approx(1.0)

    def test_tie_breaks_low(self, catalog):
        v1, v2 = catalog.sfs.values[0], catalog.sfs.values[1]
        mid = (v1 + v2) / 2
        assert nearest_sfs(mid, catalog.sfs) == 1

    def test_scale_invariance(self, catalog):
        rng = np.random.default_rng(23)
        for _ in range(100):
            h1, h2 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            c = rng.standard_normal() + 1j * rng.standard_normal()
            if abs(h1) < 1e-3 or abs(c) < 1e-3:
                continue
            assert nearest_sfs(h2 / h1, catalog.sfs) == nearest_sfs(
                (c * h2) / (c * h1), catalog.sfs
            )

    def test_mapping_indices(self, catalog):
        _, _, _, idx31 = online_select(3, 1, catalog)
        _, _, _, idx44 = online_select(4, 4, catalog)
        _, _, m11, idx11 = online_select(1, 1, catalog)
        assert idx31 == 11
        assert idx44 == 19
        assert idx11 == 1
        assert gf2.rank_mod2(m11) == 4

    def test_invalid_index(self, catalog):
        with pytest.raises(ValueError):
            online_select(0, 3, catalog)
        with pytest.raises(ValueError):
            online_select(1, 6, catalog)


class TestCodec:
    def test_encode_reference_top(self):
        top = REFERENCE_MATRICES[(1, 1)].top_half()
        out = pnc_encode(top, SourceWord((1, 0, 1, 1)))
        assert out.bits == (0, 1)

    def test_zero_word(self, catalog):
        for e in list(catalog.entries.values())[:5]:
            assert pnc_encode(e.m1, SourceWord((0, 0, 0, 0))).bits == (0, 0)

    def test_same_ncv_covers_coincident_words(self, catalog, constellation):
        # every coincident pair at a fade state shares the NCV of the
        # catalog's resolving candidate
        for l, v in enumerate(catalog.sfs.values):
            m = catalog.optimal_per_sfs[l]
            codes = ncv_codes(m)
            for a, b in pnc_core.coincident_pairs(v, constellation):
                assert codes[a] == codes[b]

    def test_detect_noiseless_generic(self, catalog, constellation):
        h = (0.9 + 0.1j, -0.2 + 0.7j)
        sc = superimpose(h, constellation)
        m = catalog.entries[(3, 1)].m1
        for w in range(16):
            ncv = pnc_core.ap_detect_ncv(sc.points[w], h, m, constellation)
            assert ncv.bits == tuple(pnc_encode(m, Gf2Vector(word_bits(w))).bits)

    def test_detect_at_coincident_point(self, catalog, constellation):
        # at a fade state, a resolving mapping returns the shared NCV no
        # matter which word generated the point
        v = catalog.sfs.values[3]
        m = catalog.optimal_per_sfs[3]
        h = (1.0 + 0.0j, v)
        sc = superimpose(h, constellation)
        codes = ncv_codes(m)
        for a, b in pnc_core.coincident_pairs(v, constellation):
            ncv = pnc_core.ap_detect_ncv(sc.points[b], h, m, constellation)
            assert (ncv.bits[0] << 1) | ncv.bits[1] == codes[a]

    def test_detect_noise_margin(self, catalog, constellation):
        h = (1.0, 0.5 + 0.1j)
        m = catalog.entries[(2, 1)].m1
        sc = superimpose(h, constellation)
        dmin = min_ncv_distance(sc, m)
        rng = np.random.default_rng(31)
        codes = ncv_codes(m)
        for w in range(16):
            for _ in range(10):
                phase = np.exp(2j * np.pi * rng.random())
                y = sc.points[w] + 0.45 * math.sqrt(dmin) * phase
                ncv = pnc_core.ap_detect_ncv(y, h, m, constellation)
                assert (ncv.bits[0] << 1) | ncv.bits[1] == codes[w]

    def test_hub_decode_reference_swap(self):
        m = REFERENCE_MATRICES[(1, 1)]
        out = pnc_core.hub_decode(m, Gf2Vector((1, 0)), Gf2Vector((1, 1)))
        assert out.bits == (0, 1, 1, 1)

    def test_hub_decode_identity(self):
        eye = Gf2Matrix.identity(4)
        for w in range(16):
            bits = word_bits(w)
            out = pnc_core.hub_decode(eye, Gf2Vector(bits[:2]), Gf2Vector(bits[2:]))
            assert out.bits == bits

    def test_round_trip_all_words_reference(self):
        for m in REFERENCE_MATRICES.values():
            for w in range(16):
                wv = Gf2Vector(word_bits(w))
                x1 = pnc_encode(m.top_half(), wv)
                x2 = pnc_encode(m.bottom_half(), wv)
                assert pnc_core.hub_decode(m, x1, x2).bits == wv.bits

    def test_round_trip_all_words_catalog(self, catalog):
        for e in catalog.entries.values():
            for w in range(16):
                wv = Gf2Vector(word_bits(w))
                x1 = pnc_encode(e.m1, wv)
                x2 = pnc_encode(e.m2, wv)
                assert pnc_core.hub_decode(e.combined, x1, x2).bits == wv.bits

    def test_singular_combined_rejected(self):
        m = Gf2Matrix.from_rows(
            [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 0, 0, 1]]
        )
        with pytest.raises(pnc_core.CatalogIntegrityError):
            pnc_core.hub_decode(m, Gf2Vector((0, 1)), Gf2Vector((1, 0)))


class TestCatalogFile:
    def test_round_trip(self, catalog, tmp_path):
        path = tmp_path / "catalog.txt"
        pnc_core.export_catalog(catalog, path)
        loaded = pnc_core.load_catalog(path)
        assert tuple(loaded.sfs.values) == tuple(catalog.sfs.values)
        assert len(loaded.entries) == 25
        for key, e in catalog.entries.items():
            other = loaded.entries[key]
            assert other.combined == e.combined
            assert other.dmin1 == e.dmin1
            assert other.dmin2 == e.dmin2

    def test_counts(self, catalog, tmp_path):
        path = tmp_path / "catalog.txt"
        pnc_core.export_catalog(catalog, path)
        text = path.read_text()
        assert text.count("\nM ") == 25
        assert "sfs 5" in text
