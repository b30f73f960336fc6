import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chartsum.rng import Rng, mix64
from chartsum.text import fnv1a64, format_number, is_decimal, label_text, numbers_in, tokenize


class TestRng:
    def test_splitmix64_reference_values(self):
        # First outputs of SplitMix64 seeded with 0, as published with the algorithm.
        r = Rng(0)
        assert [r.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF,
            0x6E789E6AA1B965F4,
            0x06C45D188009454F,
        ]

    def test_mix64_is_64_bit(self):
        assert 0 <= mix64(2**70 + 5) < 2**64

    def test_split_does_not_consume(self):
        a, b = Rng(7), Rng(7)
        a.split("x")
        assert a.next_u64() == b.next_u64()

    def test_split_keys_differ(self):
        r = Rng(1)
        assert r.split("a").next_u64() != r.split("b").next_u64()
        assert r.split(3).next_u64() == r.split("3").next_u64()

    @given(st.integers(0, 2**64 - 1), st.integers(1, 1000))
    def test_below_range(self, seed, n):
        r = Rng(seed)
        assert all(0 <= r.below(n) < n for _ in range(20))

    def test_uniform_range_and_mean(self):
        r = Rng(3)
        xs = [r.uniform() for _ in range(20000)]
        assert min(xs) >= 0.0 and max(xs) < 1.0
        assert abs(sum(xs) / len(xs) - 0.5) < 0.01

    def test_shuffle_is_permutation(self):
        items = list(range(50))
        Rng(11).shuffle(items)
        assert sorted(items) == list(range(50)) and items != list(range(50))

    def test_below_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Rng(0).below(0)


class TestText:
    def test_fnv1a_reference(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

    def test_tokenize_examples(self):
        assert tokenize("Summarize the chart.") == ["summarize", "the", "chart", "."]
        assert tokenize("A  B") == ["a", "b"]
        assert tokenize("") == []
        assert tokenize("Rose from 2.5 to 1,200.") == ["rose", "from", "2.5", "to", "1,200", "."]

    @pytest.mark.parametrize(
        "value, text",
        [(1, "1"), (2.0, "2"), (0.1, "0.1"), (1e-7, "0.0000001"), (1234567.5, "1234567.5"), (-3.25, "-3.25")],
    )
    def test_format_number(self, value, text):
        assert format_number(value) == text

    @given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e12, max_value=1e12))
    def test_format_number_round_trips(self, v):
        s = format_number(v)
        assert float(s) == v and "," not in s and "e" not in s

    def test_is_decimal(self):
        assert is_decimal("12") and is_decimal("-0.5")
        assert not is_decimal("1e3") and not is_decimal("1,000") and not is_decimal("a1")

    def test_numbers_in(self):
        assert numbers_in("from 1,200.5 to -3 in Q2, 2020.") == [1200.5, -3.0, 2020.0]

    def test_label_text(self):
        assert label_text(2020) == "2020" and label_text(2.50) == "2.5" and label_text("x") == "x"
        assert not math.isnan(float(label_text(1.0)))
