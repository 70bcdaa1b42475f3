import numpy as np
import pytest

from sgdelf import DataError, parse_ratings, save_matrix, load_matrix, split
from sgdelf.data import density, density_ratio, make_synthetic


def triples_of(m):
    return [(t.user, t.item, t.value) for t in m.triples()]


class TestParse:
    def test_empty_stream(self):
        m = parse_ratings([])
        assert (m.num_users, m.num_items, len(m)) == (0, 0, 0)

    def test_first_seen_order(self, toy3):
        assert (toy3.num_users, toy3.num_items, len(toy3)) == (2, 2, 3)
        assert toy3.user_index["1"] == 0
        assert toy3.item_index["7"] == 0
        assert triples_of(toy3) == [(0, 0, 5.0), (0, 1, 3.0), (1, 0, 4.0)]

    def test_comments_and_blanks_skipped(self):
        m = parse_ratings(["# header", "", "a x 1.5", "   ", "# tail"])
        assert len(m) == 1

    def test_optional_timestamp_ignored(self):
        m = parse_ratings(["1\t7\t5.0\t874965758"], delimiter="tab")
        assert triples_of(m) == [(0, 0, 5.0)]

    @pytest.mark.parametrize("delimiter,line", [
        ("tab", "1\t7\t5.0"),
        ("comma", "1, 7, 5.0"),
        ("colons", "1::7::5.0"),
        ("ws", "1   7  5.0"),
    ])
    def test_delimiters(self, delimiter, line):
        m = parse_ratings([line], delimiter=delimiter)
        assert triples_of(m) == [(0, 0, 5.0)]

    def test_malformed_line_reports_number(self):
        with pytest.raises(DataError, match="line 2"):
            parse_ratings(["1 7 5.0", "1 9"])

    def test_unreadable_rating(self):
        with pytest.raises(DataError, match="line 1"):
            parse_ratings(["1 7 five"])

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
    def test_non_finite_rating(self, bad):
        with pytest.raises(DataError, match="non-finite"):
            parse_ratings([f"1 7 {bad}"])

    def test_duplicate_pair_is_hard_error(self):
        with pytest.raises(DataError, match="duplicate"):
            parse_ratings(["1 7 5.0", "2 7 4.0", "1 7 3.0"])

    def test_unknown_delimiter(self):
        with pytest.raises(ValueError):
            parse_ratings(["1 7 5.0"], delimiter="semicolon")


class TestPersistence:
    def test_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(3)
        lines = [f"u{rng.integers(0, 12)} i{rng.integers(0, 9)} "
                 f"{rng.uniform(-5, 5):.9g}" for _ in range(200)]
        # Drop duplicate (user, item) lines while keeping 50 survivors.
        seen, unique = set(), []
        for line in lines:
            key = tuple(line.split()[:2])
            if key not in seen:
                seen.add(key)
                unique.append(line)
        m = parse_ratings(unique[:50])
        path1 = tmp_path / "a.hids"
        path2 = tmp_path / "b.hids"
        save_matrix(m, path1)
        back = load_matrix(path1)
        assert (back.num_users, back.num_items) == (m.num_users, m.num_items)
        assert back.user_ids == m.user_ids and back.item_ids == m.item_ids
        assert triples_of(back) == triples_of(m)
        # Canonical re-serialization is byte-identical.
        save_matrix(back, path2)
        assert path1.read_bytes() == path2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_text("NOPE 1 1 0\n")
        with pytest.raises(DataError):
            load_matrix(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short"
        path.write_text("HIDS1 1 1 2\nU\ta\nI\tb\n0 0 1.5\n")
        with pytest.raises(DataError):
            load_matrix(path)


class TestDensity:
    # (num_users, num_items, num_ratings, printed percent)
    DESCRIPTORS = [
        (10_681, 71_567, 10_000_054, 1.31),
        (775_760, 120_492, 13_668_320, 0.015),
        (48_794, 147_612, 8_196_077, 0.11),
        (58_541, 129_490, 16_830_839, 0.22),
    ]

    @pytest.mark.parametrize("nu,ni,n,pct", DESCRIPTORS)
    def test_published_descriptors(self, nu, ni, n, pct):
        assert abs(100.0 * density_ratio(n, nu, ni) - pct) <= 0.005

    def test_full_matrix(self):
        m = parse_ratings(["a x 1", "a y 2", "b x 3", "b y 4"])
        assert density(m) == 1.0

    def test_empty(self):
        assert density(parse_ratings([])) == 0.0

    def test_bounds_random(self):
        for seed in range(5):
            m = make_synthetic(30, 20, rank=2, density=0.1, noise=0.0, seed=seed)
            assert 0.0 <= density(m) <= 1.0


class TestSplit:
    def lines(self, n=10):
        return [f"u{k} i{k % 3} {k + 0.5}" for k in range(n)]

    def test_counts_forced_by_floor(self):
        m = parse_ratings(self.lines(10))
        train, test = split(m, 0.8, seed=1)
        assert (len(train), len(test)) == (8, 2)

    def test_same_seed_identical(self):
        m = parse_ratings(self.lines(30))
        a1, b1 = split(m, 0.7, seed=9)
        a2, b2 = split(m, 0.7, seed=9)
        assert triples_of(a1) == triples_of(a2)
        assert triples_of(b1) == triples_of(b2)

    def test_union_is_original_multiset(self):
        m = make_synthetic(15, 12, rank=2, density=0.3, noise=0.1, seed=4)
        train, test = split(m, 0.65, seed=2)
        combined = sorted(triples_of(train) + triples_of(test))
        assert combined == sorted(triples_of(m))

    def test_halves_keep_dims_and_id_maps(self, toy3):
        train, test = split(toy3, 0.5, seed=0)
        for half in (train, test):
            assert (half.num_users, half.num_items) == (2, 2)
            assert half.user_ids == toy3.user_ids
            assert half.item_ids == toy3.item_ids

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.7])
    def test_fraction_out_of_range(self, toy3, fraction):
        with pytest.raises(ValueError):
            split(toy3, fraction, seed=0)


class TestRowColAccess:
    def test_empty_row_and_column(self):
        from sgdelf import SparseRatingMatrix
        m = SparseRatingMatrix(3, 3, [0, 2], [0, 2], [1.0, 2.0])
        assert m.row_ratings(1) == []
        assert m.col_ratings(1) == []

    def test_stored_order(self, toy3):
        assert toy3.row_ratings(0) == [(0, 5.0), (1, 3.0)]
        assert toy3.row_ratings(1) == [(0, 4.0)]
        assert toy3.col_ratings(0) == [(0, 5.0), (1, 4.0)]

    def test_concatenation_covers_all_triples(self):
        m = make_synthetic(20, 20, rank=2, density=0.2, noise=0.0, seed=8)
        from_rows = sorted((u, i, v) for u in range(20)
                           for i, v in m.row_ratings(u))
        from_cols = sorted((u, i, v) for i in range(20)
                           for u, v in m.col_ratings(i))
        assert from_rows == sorted(triples_of(m)) == from_cols

    def test_row_col_counts_partition(self):
        m = make_synthetic(25, 18, rank=2, density=0.15, noise=0.0, seed=5)
        assert sum(len(m.row_index[u]) for u in range(25)) == len(m)
        assert sum(len(m.col_index[i]) for i in range(18)) == len(m)

    def test_index_out_of_range(self, toy3):
        with pytest.raises(IndexError):
            toy3.row_ratings(2)
        with pytest.raises(IndexError):
            toy3.col_ratings(-1)
