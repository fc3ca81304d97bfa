"""tacforge: mine reusable proof tactics from proof corpora, validate and
filter them by generalization testing, and integrate the survivors into a
retrieval-guided And-Or goal search."""

__version__ = "0.1.0"
