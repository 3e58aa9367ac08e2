from .features import LENGTH, FeatureVector, NameFeaturizer, feature_names, featurize, resolve_inventory
from .inventory import Language, PhonemeInventory, default_inventory, load_inventory, parse_inventory
from .tokenize import TokenSequence, tokenize, tokenize_japanese, tokenize_korean_mr, tokenize_pinyin

__all__ = [
    "LENGTH",
    "FeatureVector",
    "Language",
    "NameFeaturizer",
    "PhonemeInventory",
    "TokenSequence",
    "default_inventory",
    "feature_names",
    "featurize",
    "load_inventory",
    "parse_inventory",
    "resolve_inventory",
    "tokenize",
    "tokenize_japanese",
    "tokenize_korean_mr",
    "tokenize_pinyin",
]
