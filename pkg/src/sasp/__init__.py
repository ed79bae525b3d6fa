"""Systolic array structured pruning simulator."""
