"""Spliced continued fractions for the theta group: digit dynamics, natural
extension, transfer operator, geodesic excursions and extreme value tests."""

__version__ = "0.1.0"
