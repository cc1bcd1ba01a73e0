"""Receptive-field-configurable patch discriminators for unpaired image
translation, and the semantic content discrepancy (SCD) metric."""

__version__ = "0.1.0"
