import random
import string

import pytest

from agent.tokens import RegexTokenizer, count_tokens, get_tokenizer
from core.errors import ConfigError

ALPHABET = string.ascii_letters + string.digits + "  ,.!?'-" + "日本語です한국"


def random_text(rng, max_len=40):
    return "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, max_len)))


def test_empty_text_has_no_tokens():
    assert count_tokens("") == 0
    assert count_tokens("", get_tokenizer("regex")) == 0


@pytest.mark.parametrize("text, expected", [
    ("Book a flight to Rome.", 6),
    ("hello,world", 3),
    ("東京へ", 3),
    ("   ", 0),
])
def test_known_counts(text, expected):
    assert count_tokens(text) == expected


def test_counts_are_deterministic():
    rng = random.Random(17)
    for _ in range(200):
        text = random_text(rng)
        assert count_tokens(text) == count_tokens(text) == RegexTokenizer().count(text)


def test_concatenation_is_subadditive():
    rng = random.Random(23)
    for _ in range(500):
        a, b = random_text(rng), random_text(rng)
        assert count_tokens(a + b) <= count_tokens(a) + count_tokens(b) + 1


def test_counts_grow_with_the_text():
    rng = random.Random(31)
    for _ in range(200):
        text = random_text(rng)
        counts = [count_tokens(text[:i]) for i in range(len(text) + 1)]
        assert counts == sorted(counts)


def test_truncate_respects_the_limit():
    tokenizer = RegexTokenizer()
    text = "one two, three four"
    assert tokenizer.truncate(text, 3) == "one two,"
    assert tokenizer.truncate(text, 0) == ""
    assert tokenizer.truncate(text, 50) == text


def test_unknown_tokenizer():
    with pytest.raises(ConfigError):
        get_tokenizer("bpe")
