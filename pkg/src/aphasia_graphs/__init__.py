"""Aphasia severity estimation from CHAT transcripts via word-gesture discourse graphs."""

__version__ = "0.1.0"
