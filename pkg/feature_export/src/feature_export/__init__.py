"""Backbone feature export in the hmk array-file and manifest formats."""

from .backbones import LayerInfo, build_backbone, extract_features, known_stages, stack_depths
from .export import ExportItem, ExportJob, ExportResult, export_features, export_stack_depths

__version__ = "0.1.0"
