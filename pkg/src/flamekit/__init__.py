"""Federated localization toolkit: geo-domain discovery over DNS, map
servers with landmark-based localization, and a client that stitches
independently hosted maps into one navigable world.
"""

__version__ = "0.1.0"
