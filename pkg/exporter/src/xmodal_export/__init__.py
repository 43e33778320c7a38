"""Encoder-to-feature-store exporter."""
from .errors import ExportError, ModelLoadError, UnreadableInput
from .export import ExportJob, export_features, read_listing
from .models import load_encoder
from .xmfs import ExportManifest, ExportRecord, write_xmfs

__version__ = "0.1.0"
