"""
PED: pruning skip-units of a network by energy dependence
"""

__version__ = "1.0.0"
