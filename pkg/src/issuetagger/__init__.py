"""Issue-type classification for issue trackers: bug, enhancement or question."""

__version__ = "0.1.0"

CANONICAL_LABELS = ("bug", "enhancement", "question")
