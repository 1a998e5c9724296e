"""Chi-square differential sequence mining (CDSM) over programming process logs."""

from .ingest import Base, EventSequence, EventType, RawEvent, Scheme, SchemeConfig, categorize, collapse_runs, parse_progsnap2
from .seqmine import (FrequentPatternStats, MiningParams, collect_stats, count_instance_support,
                      enumerate_frequent, matches)
from .stats import PatternClass, chi_square_2x2, classify_pattern, odds_ratio, welch_t_test

__version__ = "0.1.0"

__all__ = [
    "Base", "EventSequence", "EventType", "RawEvent", "Scheme", "SchemeConfig", "categorize",
    "collapse_runs", "parse_progsnap2", "FrequentPatternStats", "MiningParams", "collect_stats",
    "count_instance_support", "enumerate_frequent", "matches", "PatternClass", "chi_square_2x2",
    "classify_pattern", "odds_ratio", "welch_t_test",
]
