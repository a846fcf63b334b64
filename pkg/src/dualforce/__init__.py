"""Diverse offline imitation: DICE duals, Van der Waals diversity and bounded multipliers on tabular MDPs."""

__version__ = "0.1.0"
