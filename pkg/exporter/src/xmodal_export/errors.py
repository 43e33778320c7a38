class ExportError(Exception):
    """Base class for expected exporter failures."""


class ModelLoadError(ExportError):
    """Encoder weights or their runtime are unavailable."""


class UnreadableInput(ExportError):
    """An input file or caption cannot be decoded."""
