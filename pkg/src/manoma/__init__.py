"""Movable-antenna NOMA downlink: channel model, adaptive SIC, SCA precoding,
annealed decoding search, alternating optimization and hippopotamus
position search."""

__version__ = "0.1.0"
