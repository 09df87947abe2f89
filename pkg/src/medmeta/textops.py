"""Deterministic text primitives shared by the native metrics and rewriters.

Tokenization convention: input is lowercased and split on Unicode
whitespace; the punctuation marks ``. , ; : ( ) /`` are detached as
single-character tokens, except that a period flanked by digits stays
inside its token so measurements like ``4.5`` survive intact.  A hyphen
between a digit and a letter splits the chunk and is dropped, so
``3-cm`` tokenizes to ``3`` and ``cm``.  Other hyphens are kept, which
leaves compounds such as ``mild-to-moderate`` as single tokens.
"""

from __future__ import annotations

from collections import Counter

TokenSeq = list[str]

_DETACH = frozenset(".,;:()/")

# Tokens treated as clause boundaries when scoping negation triggers.
CONJUNCTION_BOUNDARIES = frozenset(("but", "although", "however"))


def tokenize(text: str) -> TokenSeq:
    """Lowercase and split ``text`` into tokens.

    Idempotent on its own output: tokenizing a space-joined token list
    yields the same list back.
    """
    tokens: TokenSeq = []
    for chunk in text.lower().split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def _split_chunk(chunk: str) -> TokenSeq:
    out: TokenSeq = []
    buf: list[str] = []
    n = len(chunk)
    for i, ch in enumerate(chunk):
        if ch == "." and buf and buf[-1].isdigit() and i + 1 < n and chunk[i + 1].isdigit():
            buf.append(ch)
        elif ch in _DETACH:
            if buf:
                out.append("".join(buf))
                buf = []
            out.append(ch)
        elif ch == "-" and buf and buf[-1].isdigit() and i + 1 < n and chunk[i + 1].isalpha():
            out.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if buf:
        out.append("".join(buf))
    return out


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of period-terminated sentences.

    A period ends a sentence when it is not flanked by digits and is
    followed by whitespace or the end of the text.  The terminating
    period belongs to its sentence.  Trailing text without a period
    forms a final sentence.
    """
    spans: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch == "." and not (0 < i < n - 1 and text[i - 1].isdigit() and text[i + 1].isdigit()):
            if i + 1 >= n or text[i + 1].isspace():
                if text[start : i + 1].strip():
                    spans.append((start, i + 1))
                i += 1
                while i < n and text[i].isspace():
                    i += 1
                start = i
                continue
        i += 1
    if start < n and text[start:].strip():
        spans.append((start, n))
    return spans


def split_sentences(text: str) -> list[str]:
    """Sentence strings, in order, per :func:`sentence_spans`."""
    return [text[a:b] for a, b in sentence_spans(text)]


def ngrams(tokens: TokenSeq, n: int) -> Counter:
    """Multiset of ``n``-token windows as a Counter over tuples."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def lcs_length(a: TokenSeq, b: TokenSeq) -> int:
    """Length of the longest common subsequence of two token lists."""
    if not a or not b:
        return 0
    # Single rolling row keeps this O(len(a) * len(b)) time, O(len(b)) space.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        best = 0
        for j, y in enumerate(b, start=1):
            if x == y:
                val = prev[j - 1] + 1
            else:
                val = prev[j] if prev[j] >= cur[j - 1] else cur[j - 1]
            cur.append(val)
        prev = cur
    return prev[-1]


# ---------------------------------------------------------------------------
# Porter stemmer, classic algorithm, steps 1a through 5b.

_VOWELS = frozenset("aeiou")


def _is_cons(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Count of vowel-consonant sequences, the m of [C](VC)^m[V]."""
    m = 0
    i = 0
    n = len(stem)
    while i < n and _is_cons(stem, i):
        i += 1
    while i < n:
        while i < n and not _is_cons(stem, i):
            i += 1
        if i >= n:
            break
        m += 1
        while i < n and _is_cons(stem, i):
            i += 1
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (_is_cons(word, len(word) - 3) and not _is_cons(word, len(word) - 2) and _is_cons(word, len(word) - 1)):
        return False
    return word[-1] not in "wxy"


def _step1a(w: str) -> str:
    if w.endswith("sses"):
        return w[:-2]
    if w.endswith("ies"):
        return w[:-2]
    if w.endswith("ss"):
        return w
    if w.endswith("s"):
        return w[:-1]
    return w


def _step1b(w: str) -> str:
    if w.endswith("eed"):
        if _measure(w[:-3]) > 0:
            return w[:-1]
        return w
    stripped = None
    if w.endswith("ed") and _has_vowel(w[:-2]):
        stripped = w[:-2]
    elif w.endswith("ing") and _has_vowel(w[:-3]):
        stripped = w[:-3]
    if stripped is None:
        return w
    if stripped.endswith(("at", "bl", "iz")):
        return stripped + "e"
    if _ends_double_cons(stripped) and stripped[-1] not in "lsz":
        return stripped[:-1]
    if _measure(stripped) == 1 and _ends_cvc(stripped):
        return stripped + "e"
    return stripped


def _step1c(w: str) -> str:
    if w.endswith("y") and _has_vowel(w[:-1]):
        return w[:-1] + "i"
    return w


_STEP2 = (
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
)

_STEP3 = (
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
)

_STEP4 = (
    "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ion",
    "ism", "ate", "iti", "ous", "ive", "ize", "al", "er", "ic", "ou",
)


def _longest_rule(w: str, rules, min_measure: int) -> str:
    # The longest matching suffix selects the rule; a failed condition
    # ends the step without trying shorter suffixes.
    for suffix, repl in sorted(rules, key=lambda r: -len(r[0])):
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) > min_measure:
                return stem + repl
            return w
    return w


def _step4(w: str) -> str:
    for suffix in sorted(_STEP4, key=len, reverse=True):
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if _measure(stem) <= 1:
                return w
            if suffix == "ion" and not stem.endswith(("s", "t")):
                return w
            return stem
    return w


def _step5a(w: str) -> str:
    if w.endswith("e"):
        stem = w[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            return stem
    return w


def _step5b(w: str) -> str:
    if w.endswith("ll") and _measure(w[:-1]) > 1:
        return w[:-1]
    return w


def porter_stem(token: str) -> str:
    """Stem one token with the classic Porter algorithm.

    Tokens shorter than three characters, and tokens containing
    anything other than ASCII lowercase letters, are returned unchanged.
    """
    if len(token) <= 2 or not token.isascii() or not token.isalpha() or token != token.lower():
        return token
    w = _step1a(token)
    w = _step1b(w)
    w = _step1c(w)
    w = _longest_rule(w, _STEP2, 0)
    w = _longest_rule(w, _STEP3, 0)
    w = _step4(w)
    w = _step5a(w)
    w = _step5b(w)
    return w
