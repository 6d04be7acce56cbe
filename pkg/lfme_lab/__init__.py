"""
LFME Lab

Desk-scale long-tailed classification lab: imbalance metrics, cardinality
splits, expert training, and a student distilled from multiple experts with
self-paced expert weights and curriculum instance weights.
"""

from .shared_helpers import load_environment_variables

load_environment_variables()

__version__ = "0.1.0"
