"""
homux - Higher-Order Multiplex hypergraphs
Discovers, validates and organizes higher-order interactions among ordinal
questionnaire items into layered synergy / redundancy hypergraphs.
"""

__version__ = "2026.1.0"
__author__ = "homux Development Team"
