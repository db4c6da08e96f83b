import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longnet.events import (EdgeFormatError, EdgeSet, Partition, bin_edges, equal_partition,
                            load_edges, load_partition, save_edges, save_partition)


def random_edges(rng, n1=4, n2=5, horizon=2.0, count=100):
    return EdgeSet(n1, n2, horizon,
                   rng.integers(1, n1 + 1, count),
                   rng.integers(1, n2 + 1, count),
                   rng.uniform(0, horizon, count))


class TestEqualPartition:
    def test_quarters(self):
        p = equal_partition(1.0, 4)
        np.testing.assert_allclose(p.breakpoints, [0.25, 0.5, 0.75, 1.0])

    def test_five_year_bins(self):
        p = equal_partition(120.0, 24)
        np.testing.assert_allclose(p.widths, np.full(24, 5.0))

    def test_single_interval(self):
        p = equal_partition(3.0, 1)
        np.testing.assert_array_equal(p.breakpoints, [3.0])

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            equal_partition(1.0, 0)


class TestPartitionInvariants:
    def test_not_increasing(self):
        with pytest.raises(ValueError):
            Partition(1.0, np.array([0.5, 0.5, 1.0]))

    def test_last_not_horizon(self):
        with pytest.raises(ValueError):
            Partition(1.0, np.array([0.5, 0.9]))

    def test_interval_of_half_open(self):
        p = Partition(1.0, np.array([0.25, 0.5, 1.0]))
        np.testing.assert_array_equal(p.interval_of(np.array([0.0, 0.25, 0.49, 0.5])),
                                      [0, 1, 1, 2])


class TestBinEdges:
    def test_empty(self):
        e = EdgeSet(2, 3, 1.0)
        np.testing.assert_array_equal(bin_edges(e, equal_partition(1.0, 4)),
                                      np.zeros((2, 3, 4)))

    def test_boundary_edge_at_zero(self):
        e = EdgeSet(2, 2, 1.0, np.array([1]), np.array([2]), np.array([0.0]))
        y = bin_edges(e, equal_partition(1.0, 1))
        assert y[0, 1, 0] == 1.0
        assert y.sum() == 1.0

    def test_breakpoint_goes_right(self):
        e = EdgeSet(1, 1, 1.0, np.array([1]), np.array([1]), np.array([0.5]))
        y = bin_edges(e, equal_partition(1.0, 2))
        np.testing.assert_array_equal(y[0, 0], [0.0, 1.0])

    def test_matches_naive_scan(self):
        rng = np.random.default_rng(11)
        e = random_edges(rng, count=10000)
        p = equal_partition(2.0, 8)
        y = bin_edges(e, p)
        naive = np.zeros((4, 5, 8))
        bps = p.breakpoints
        for i, j, t in zip(e.i, e.j, e.t):
            for l, b in enumerate(bps):
                if t < b:
                    naive[i - 1, j - 1, l] += 1
                    break
        np.testing.assert_array_equal(y, naive)

    def test_horizon_mismatch(self):
        e = EdgeSet(2, 2, 1.0)
        with pytest.raises(ValueError):
            bin_edges(e, equal_partition(2.0, 2))

    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 9))
    @settings(max_examples=25, deadline=None)
    def test_conserves_total_count(self, seed, count):
        e = random_edges(np.random.default_rng(seed), count=37)
        assert bin_edges(e, equal_partition(2.0, count)).sum() == 37

    def test_refinement_sums_to_parent(self):
        rng = np.random.default_rng(13)
        e = random_edges(rng, count=500)
        coarse = Partition(2.0, np.array([0.8, 2.0]))
        fine = Partition(2.0, np.array([0.3, 0.8, 2.0]))
        yc = bin_edges(e, coarse)
        yf = bin_edges(e, fine)
        np.testing.assert_array_equal(yf[:, :, 0] + yf[:, :, 1], yc[:, :, 0])
        np.testing.assert_array_equal(yf[:, :, 2], yc[:, :, 1])


class TestEdgeIO:
    def test_minimal_file(self):
        src = io.StringIO("# comment\nn1=2 n2=2 T=1.0\n1,2,0.25\n")
        e = load_edges(src)
        assert (e.n1, e.n2, e.horizon) == (2, 2, 1.0)
        assert list(zip(e.i, e.j, e.t)) == [(1, 2, 0.25)]

    def test_index_out_of_range(self):
        src = io.StringIO("n1=2 n2=2 T=1.0\n3,1,0.5\n")
        with pytest.raises(EdgeFormatError, match="line 2"):
            load_edges(src)

    def test_timestamp_at_horizon_rejected(self):
        src = io.StringIO("n1=2 n2=2 T=1.0\n1,1,1.0\n")
        with pytest.raises(EdgeFormatError, match="line 2"):
            load_edges(src)

    def test_malformed_line_reports_number(self):
        src = io.StringIO("n1=2 n2=2 T=1.0\n1,2,0.25\noops\n")
        with pytest.raises(EdgeFormatError, match="line 3"):
            load_edges(src)

    def test_missing_header(self):
        with pytest.raises(EdgeFormatError):
            load_edges(io.StringIO("# nothing\n"))

    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        e = random_edges(rng, count=200)
        path = tmp_path / "edges.txt"
        save_edges(e, str(path))
        back = load_edges(str(path))
        assert (back.n1, back.n2, back.horizon) == (e.n1, e.n2, e.horizon)
        np.testing.assert_array_equal(back.i, e.i)
        np.testing.assert_array_equal(back.j, e.j)
        np.testing.assert_array_equal(back.t, e.t)


class TestPartitionIO:
    def test_roundtrip(self, tmp_path):
        p = Partition(2.0, np.array([0.3, 1.1, 2.0]))
        path = tmp_path / "part.txt"
        save_partition(p, str(path))
        back = load_partition(str(path))
        assert back.horizon == 2.0
        np.testing.assert_array_equal(back.breakpoints, p.breakpoints)

    def test_rejects_decreasing(self):
        with pytest.raises(EdgeFormatError):
            load_partition(io.StringIO("T=1.0\n0.8\n0.5\n1.0\n"))
