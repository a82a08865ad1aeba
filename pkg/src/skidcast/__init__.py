"""Skid-resistance and macrotexture forecasting after micro-milling.

A from-scratch sequence-to-one Transformer, eight classical baselines, a
synthetic inspection-data generator and a reproducible benchmark pipeline.
"""

__version__ = "0.1.0"
