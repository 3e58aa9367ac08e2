"""Phoneme inventories: the symbol set and grapheme rules for one language.

Inventory files are UTF-8 and line oriented, fields separated by TABs::

    # comment
    language    ja
    symbol      a       vowel
    symbol      tone_level      tone
    rule        キャ    kʲ,a
    rule        ・

A ``symbol`` line declares a feature symbol with optional flags (``tone``,
``vowel``).  A ``rule`` line maps a grapheme to a comma-separated symbol
sequence; an empty sequence marks a separator that emits nothing.  Symbols
must be declared before rules use them.
"""

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from ..errors import InventoryError

FLAGS = frozenset({"tone", "vowel"})
RESERVED = frozenset({"length", "label", "id", "name"})


class Language(str, Enum):
    JAPANESE = "ja"
    CHINESE = "zh"
    KOREAN = "ko"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "ja": cls.JAPANESE, "jp": cls.JAPANESE, "japanese": cls.JAPANESE,
            "zh": cls.CHINESE, "cn": cls.CHINESE, "chinese": cls.CHINESE,
            "mandarin": cls.CHINESE,
            "ko": cls.KOREAN, "kr": cls.KOREAN, "korean": cls.KOREAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown language {value!r}") from None


@dataclass(frozen=True)
class PhonemeInventory:
    language: Language
    symbols: tuple
    rules: dict
    tone_symbols: frozenset = frozenset()
    vowel_symbols: frozenset = frozenset()
    max_grapheme_len: int = field(init=False, default=0)

    def __post_init__(self):
        object.__setattr__(
            self, "max_grapheme_len", max((len(g) for g in self.rules), default=0)
        )
        self.validate()

    def validate(self):
        if len(set(self.symbols)) != len(self.symbols):
            seen, dup = set(), []
            for s in self.symbols:
                if s in seen:
                    dup.append(s)
                seen.add(s)
            raise InventoryError(f"duplicate symbols: {dup}")
        if not self.rules:
            raise InventoryError("inventory has no rules")
        known = set(self.symbols)
        for grapheme, out in self.rules.items():
            unknown = [s for s in out if s not in known]
            if unknown:
                raise InventoryError(f"rule {grapheme!r} emits undeclared symbols {unknown}")
        if not self.tone_symbols <= known or not self.vowel_symbols <= known:
            raise InventoryError("flagged symbols must be declared")
        if self.tone_symbols and self.language is not Language.CHINESE:
            raise InventoryError("only Chinese inventories may declare tone symbols")
        bad = RESERVED & known
        if bad:
            raise InventoryError(f"reserved names used as symbols: {sorted(bad)}")

    @property
    def index(self):
        return {s: i for i, s in enumerate(self.symbols)}

    def lookup(self, text, pos):
        """Longest rule matching ``text`` at ``pos`` as ``(grapheme, symbols)``."""
        for n in range(min(self.max_grapheme_len, len(text) - pos), 0, -1):
            g = text[pos:pos + n]
            if g in self.rules:
                return g, self.rules[g]
        return None


def parse_inventory(text, path=None):
    language = None
    symbols, tones, vowels = [], set(), set()
    rules = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        kind = fields[0].strip()
        if kind == "language":
            if len(fields) != 2:
                raise InventoryError("expected 'language<TAB>code'", lineno, path)
            try:
                language = Language.parse(fields[1])
            except ValueError as exc:
                raise InventoryError(str(exc), lineno, path) from None
        elif kind == "symbol":
            if len(fields) < 2 or not fields[1].strip():
                raise InventoryError("expected 'symbol<TAB>name[<TAB>flag]'", lineno, path)
            name = fields[1].strip()
            flags = {f.strip() for f in fields[2:] if f.strip()}
            if flags - FLAGS:
                raise InventoryError(f"unknown flags {sorted(flags - FLAGS)}", lineno, path)
            if rules:
                raise InventoryError("symbol declared after rules", lineno, path)
            symbols.append(name)
            if "tone" in flags:
                tones.add(name)
            if "vowel" in flags:
                vowels.add(name)
        elif kind == "rule":
            if len(fields) not in (2, 3) or not fields[1]:
                raise InventoryError("expected 'rule<TAB>grapheme<TAB>symbols'", lineno, path)
            grapheme = fields[1]
            out = fields[2] if len(fields) == 3 else ""
            seq = tuple(s.strip() for s in out.split(",") if s.strip())
            if grapheme in rules:
                raise InventoryError(f"duplicate rule for {grapheme!r}", lineno, path)
            declared = set(symbols)
            unknown = [s for s in seq if s not in declared]
            if unknown:
                raise InventoryError(
                    f"rule {grapheme!r} emits undeclared symbols {unknown}", lineno, path
                )
            rules[grapheme] = seq
        else:
            raise InventoryError(f"unknown directive {kind!r}", lineno, path)
    if language is None:
        raise InventoryError("missing 'language' line", None, path)
    try:
        return PhonemeInventory(
            language=language,
            symbols=tuple(symbols),
            rules=rules,
            tone_symbols=frozenset(tones),
            vowel_symbols=frozenset(vowels),
        )
    except InventoryError as exc:
        raise InventoryError(str(exc), None, path) from None


def load_inventory(path):
    path = Path(path)
    return parse_inventory(path.read_text(encoding="utf-8"), path=str(path))


def default_inventory(language):
    language = Language.parse(language)
    text = resources.files(__package__).joinpath("data", f"{language.value}.tsv").read_text(
        encoding="utf-8"
    )
    return parse_inventory(text, path=f"<default {language.value}>")
