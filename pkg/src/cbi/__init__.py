"""Composite biomarker images from IHC stain rasters.

ANFIS pixel filtering, morphological cleanup, ordered pseudo-color fusion and
co-localization attention masks, run tile-parallel over 8-bit RGB rasters.
"""

__version__ = "0.1.0"
