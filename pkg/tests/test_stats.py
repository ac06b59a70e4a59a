import numpy as np
import pytest

from astnet.errors import InputError
from astnet.stats import betainc, paired_t_test, pearson_r, t_two_sided_p

# reference values computed with scipy.special.betainc / scipy.stats.t.sf
BETAINC_CASES = [
    (0.5, 0.5, 0.25, 0.33333333333333337),
    (2.0, 3.0, 0.4, 0.5247999999999999),
    (5.0, 1.5, 0.9, 0.7761721343162159),
    (1.0, 1.0, 0.5, 0.5),
    (10.0, 0.5, 0.99, 0.6579281751567845),
]

T_TAIL_CASES = [
    (5.0, 2, 0.037749551350623724),
    (1.0, 10, 0.3408931323020601),
    (2.5, 30, 0.018115649068066706),
    (0.5, 4, 0.6433299631818633),
]


class TestBetainc:
    @pytest.mark.parametrize("a,b,x,expected", BETAINC_CASES)
    def test_reference_values(self, a, b, x, expected):
        assert abs(betainc(a, b, x) - expected) < 1e-8

    def test_bounds(self):
        assert betainc(2.0, 2.0, 0.0) == 0.0
        assert betainc(2.0, 2.0, 1.0) == 1.0

    def test_complement_symmetry(self):
        # I_x(a, b) + I_{1-x}(b, a) == 1
        for a, b, x in [(1.5, 2.5, 0.3), (4.0, 0.7, 0.6)]:
            assert abs(betainc(a, b, x) + betainc(b, a, 1.0 - x) - 1.0) < 1e-12

    def test_invalid_shape_params(self):
        with pytest.raises(InputError):
            betainc(-1.0, 2.0, 0.5)


class TestTTail:
    @pytest.mark.parametrize("t,df,expected", T_TAIL_CASES)
    def test_reference_values(self, t, df, expected):
        assert abs(t_two_sided_p(t, df) - expected) < 1e-8

    def test_symmetric_in_sign(self):
        assert abs(t_two_sided_p(2.0, 7) - t_two_sided_p(-2.0, 7)) < 1e-15

    def test_zero_statistic(self):
        assert abs(t_two_sided_p(0.0, 5) - 1.0) < 1e-12


class TestPairedTTest:
    def test_hand_made_sample(self):
        """Pairs {(2,1),(3,1),(4,2)}: t and p against the direct formula."""
        res = paired_t_test([2.0, 3.0, 4.0], [1.0, 1.0, 2.0])
        d = np.array([1.0, 2.0, 2.0])
        t_direct = d.mean() / (d.std(ddof=1) / np.sqrt(3))
        assert abs(res.t_stat - t_direct) < 1e-12
        assert abs(res.t_stat - 5.0) < 1e-12
        assert abs(res.p_value - 0.037749551350623724) < 1e-8
        assert res.df == 2

    def test_identical_samples(self):
        res = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.t_stat == 0.0
        assert res.p_value == 1.0

    def test_constant_nonzero_difference(self):
        res = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
        assert np.isinf(res.t_stat) and res.t_stat > 0
        assert res.p_value == 0.0

    def test_too_few_pairs_rejected(self):
        with pytest.raises(InputError):
            paired_t_test([1.0], [2.0])

    def test_textbook_degrees_of_freedom(self):
        x = np.array([10.0, 12.0, 9.0, 11.0, 14.0])
        y = np.array([9.0, 11.5, 9.5, 10.0, 12.0])
        res = paired_t_test(x, y)
        assert res.df == 4 and res.n == 5
        # cross-check p through the incomplete beta identity
        expected_p = betainc(2.0, 0.5, 4.0 / (4.0 + res.t_stat**2))
        assert abs(res.p_value - expected_p) < 1e-14


class TestPearson:
    def test_perfect_correlation(self):
        x = np.arange(10.0)
        assert abs(pearson_r(x, 3.0 * x + 1.0) - 1.0) < 1e-12
        assert abs(pearson_r(x, -2.0 * x + 5.0) + 1.0) < 1e-12

    def test_against_corrcoef(self):
        rng = np.random.default_rng(99)
        x = rng.normal(size=50)
        y = 0.5 * x + rng.normal(size=50)
        assert abs(pearson_r(x, y) - np.corrcoef(x, y)[0, 1]) < 1e-12

    def test_constant_sample_rejected(self):
        with pytest.raises(InputError):
            pearson_r(np.ones(5), np.arange(5.0))
