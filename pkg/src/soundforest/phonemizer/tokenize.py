"""Grapheme-to-symbol tokenizers for katakana, pinyin and McCune-Reischauer."""

import re
import unicodedata
from dataclasses import dataclass

from ..errors import DataError, UnknownGraphemeError
from .inventory import Language


@dataclass(frozen=True)
class TokenSequence:
    symbols: tuple
    source: str

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


def _check_language(inv, expected):
    if inv.language is not expected:
        raise DataError(
            f"inventory is for {inv.language.value!r}, not {expected.value!r}"
        )


# -- Japanese -------------------------------------------------------------

def _to_katakana(text):
    text = unicodedata.normalize("NFKC", text)
    return "".join(
        chr(ord(c) + 0x60) if "ぁ" <= c <= "ゖ" else c for c in text
    )


def tokenize_japanese(name, inv):
    """Katakana name to symbols.

    ``ー`` always emits ``:``.  A kana whose rule is a single vowel emits
    ``:`` instead when that vowel equals the vowel of the preceding mora
    (a preceding ``:`` carries its vowel forward).  Distinct-vowel
    sequences such as エイ or オウ are left as two vowels.
    """
    _check_language(inv, Language.JAPANESE)
    text = _to_katakana(name)
    out = []
    last_vowel = None
    pos = 0
    while pos < len(text):
        hit = inv.lookup(text, pos)
        if hit is None:
            raise UnknownGraphemeError(text[pos], pos, name)
        grapheme, seq = hit
        pos += len(grapheme)
        if not seq:
            continue
        if len(seq) == 1 and seq[0] in inv.vowel_symbols and seq[0] == last_vowel:
            out.append(":")
            continue
        out.extend(seq)
        if seq[-1] == ":":
            continue
        last_vowel = seq[-1] if seq[-1] in inv.vowel_symbols else None
    return TokenSequence(tuple(out), name)


# -- Mandarin pinyin ------------------------------------------------------

_TONE_MARKS = {"̄": 1, "́": 2, "̌": 3, "̀": 4}
_VOWELS = set("aeiouüê")
_CHUNK_SPLIT = re.compile(r"[\s'’ʼ\-·]+")


def _pinyin_letters(chunk, offset, name):
    """Split a chunk into base letters with per-letter tone marks."""
    letters, tones, where = [], [], []
    decomposed = unicodedata.normalize("NFD", chunk.lower())
    i = 0
    pos = offset
    while i < len(decomposed):
        c = decomposed[i]
        i += 1
        if unicodedata.combining(c):
            if c == "̈" and letters and letters[-1] == "u":
                letters[-1] = "ü"
            elif c == "̂" and letters and letters[-1] == "e":
                letters[-1] = "ê"
            elif c in _TONE_MARKS and letters:
                if tones[-1]:
                    raise UnknownGraphemeError(c, pos, name)
                tones[-1] = _TONE_MARKS[c]
            else:
                raise UnknownGraphemeError(c, pos, name)
            continue
        if c == "v":
            c = "ü"
        if c.isdigit() or c.isalpha():
            letters.append(c)
            tones.append(0)
            where.append(pos)
        else:
            raise UnknownGraphemeError(c, pos, name)
        pos += 1
    return letters, tones, where


def _syllable_rules(inv):
    initials = {g[:-1]: s for g, s in inv.rules.items() if g.endswith("-") and len(g) > 1}
    finals = {g[1:]: s for g, s in inv.rules.items() if g.startswith("-") and len(g) > 1}
    tones = {g: s for g, s in inv.rules.items() if g.isdigit()}
    whole = {
        g: s for g, s in inv.rules.items()
        if not g.isdigit() and not g.startswith("-") and not g.endswith("-")
    }
    return initials, finals, tones, whole


def _parse_syllable(syl, initials, finals, whole):
    """Symbols for one toneless syllable, or None if it is not a syllable."""
    if syl in whole:
        return whole[syl]
    for n in (2, 1, 0):
        ini, fin = syl[:n], syl[n:]
        if n and ini not in initials:
            continue
        if not fin:
            continue
        if ini in ("j", "q", "x") and fin.startswith("u"):
            fin = "ü" + fin[1:]
        if n == 0 and fin[0] not in "aeoê":
            continue
        if fin in finals:
            return (initials[ini] if n else ()) + finals[fin]
    return None


def _segment(letters, tones, initials, finals, whole, longest):
    """All segmentations of ``letters`` into syllables (each with <= 1 tone mark).

    Non-initial syllables must begin with a consonant letter, matching the
    orthographic rule that a vowel-initial syllable needs an apostrophe.
    Stops after finding two, since ambiguity is an error anyway.
    """
    n = len(letters)
    results = []

    def walk(start, acc):
        if len(results) > 1:
            return
        if start == n:
            results.append(list(acc))
            return
        if start > 0 and letters[start] in _VOWELS:
            return
        for end in range(min(n, start + longest), start, -1):
            syl = "".join(letters[start:end])
            marks = [t for t in tones[start:end] if t]
            if len(marks) > 1:
                continue
            symbols = _parse_syllable(syl, initials, finals, whole)
            if symbols is None:
                continue
            acc.append((start, end, symbols, marks[0] if marks else 0))
            walk(end, acc)
            acc.pop()

    walk(0, [])
    return results


def tokenize_pinyin(name, inv):
    """Pinyin (tone diacritics or digits 1-5) to symbols.

    Each syllable yields its initial, its decomposed final and exactly one
    tone symbol; unmarked syllables get the neutral tone.  Unseparated
    chunks are segmented only when the segmentation is unique.
    """
    _check_language(inv, Language.CHINESE)
    initials, finals, tone_rules, whole = _syllable_rules(inv)
    longest = max(
        [len(w) for w in whole]
        + [len(i) + len(f) for i in initials for f in finals]
        + [1]
    )
    out = []
    offset = 0
    for chunk in _CHUNK_SPLIT.split(name.strip()):
        start_in_name = name.find(chunk, offset) if chunk else offset
        offset = start_in_name + len(chunk)
        if not chunk:
            continue
        letters, tones, where = _pinyin_letters(chunk, start_in_name, name)
        # tone digits close the syllable run before them
        pieces, cur = [], ([], [], [])
        for c, t, w in zip(letters, tones, where):
            if c.isdigit():
                if c not in tone_rules or not cur[0]:
                    raise UnknownGraphemeError(c, w, name)
                pieces.append((cur, int(c)))
                cur = ([], [], [])
            else:
                cur[0].append(c)
                cur[1].append(t)
                cur[2].append(w)
        if cur[0]:
            pieces.append((cur, None))
        for (ls, ts, ws), digit in pieces:
            parses = _segment(ls, ts, initials, finals, whole, longest)
            if not parses:
                raise UnknownGraphemeError("".join(ls), ws[0], name)
            if len(parses) > 1:
                raise DataError(
                    f"ambiguous pinyin segmentation of {''.join(ls)!r} in {name!r}; "
                    "separate syllables with spaces or apostrophes"
                )
            syllables = parses[0]
            for k, (s, e, symbols, mark) in enumerate(syllables):
                tone = mark
                if digit is not None and k == len(syllables) - 1:
                    if mark and digit != mark:
                        raise DataError(f"conflicting tone marks in {name!r}")
                    tone = digit
                out.extend(symbols)
                out.extend(tone_rules[str(tone or 5)])
    return TokenSequence(tuple(out), name)


# -- Korean McCune-Reischauer --------------------------------------------

_APOSTROPHES = str.maketrans({"’": "'", "ʼ": "'", "‘": "'", "`": "'"})


def tokenize_korean_mr(name, inv):
    """McCune-Reischauer romanization to symbols by greedy longest match."""
    _check_language(inv, Language.KOREAN)
    text = unicodedata.normalize("NFC", name).translate(_APOSTROPHES).lower()
    out = []
    pos = 0
    while pos < len(text):
        hit = inv.lookup(text, pos)
        if hit is None:
            raise UnknownGraphemeError(text[pos], pos, name)
        grapheme, seq = hit
        out.extend(seq)
        pos += len(grapheme)
    return TokenSequence(tuple(out), name)


TOKENIZERS = {
    Language.JAPANESE: tokenize_japanese,
    Language.CHINESE: tokenize_pinyin,
    Language.KOREAN: tokenize_korean_mr,
}


def tokenize(name, inv):
    return TOKENIZERS[inv.language](name, inv)
