"""embed-export: image-folder embedding bridge for the placemine pipeline."""

from .backbone import Embedded, PatchStatsBackbone, get_backbone, load_image, register_backbone
from .exporter import ExportJob, ExportResult, embed_single, export_embeddings

__version__ = "0.1.0"
