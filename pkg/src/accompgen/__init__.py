"""Text-controllable accompaniment generation on discrete audio tokens."""

__version__ = "0.1.0"
