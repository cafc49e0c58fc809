"""Structural planning for neural machine translation.

Planner codes summarising the coarse structure of a target sentence are
learned from simplified POS tags, prepended to training targets, and used to
steer decoding.
"""

__version__ = "0.1.0"
