"""Readmission prognosis from longitudinal multi-view lung-ultrasound feature vectors."""

__version__ = "0.1.0"
