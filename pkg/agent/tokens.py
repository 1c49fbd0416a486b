# agent/tokens.py
"""
Deterministic, provider-independent token counting.

The default tokenizer splits on whitespace and punctuation: a run of word
characters is one token, every punctuation character is one token, and each
CJK/kana/hangul character is its own token.
"""
import re
from typing import Protocol

from core.errors import ConfigError

_CJK = "぀-ヿ㐀-䶿一-鿿가-힯"
TOKEN_PATTERN = re.compile(rf"[{_CJK}]|[^\W{_CJK}]+|[^\w\s]")


class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...


class RegexTokenizer:
    name = "regex"

    def tokens(self, text: str) -> list[str]:
        return TOKEN_PATTERN.findall(text)

    def count(self, text: str) -> int:
        return sum(1 for _ in TOKEN_PATTERN.finditer(text))

    def truncate(self, text: str, max_tokens: int) -> str:
        """Longest prefix of ``text`` holding at most ``max_tokens`` tokens."""
        if max_tokens <= 0:
            return ""
        for n, match in enumerate(TOKEN_PATTERN.finditer(text), start=1):
            if n == max_tokens:
                return text[: match.end()]
        return text


DEFAULT_TOKENIZER = RegexTokenizer()

TOKENIZERS = {"regex": RegexTokenizer}


def get_tokenizer(name: str = "regex") -> Tokenizer:
    try:
        return TOKENIZERS[name]()
    except KeyError:
        raise ConfigError(f"unknown tokenizer provider {name!r}") from None


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    if not text:
        return 0
    return (tokenizer or DEFAULT_TOKENIZER).count(text)
