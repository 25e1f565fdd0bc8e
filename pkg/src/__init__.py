"""
Collaborative linear best-arm identification.

Fixed-budget best-arm identification for linear bandits with multiple agents
on star and general networks, plus the experiment harness around it.
"""

__version__ = "1.0.0"
