"""UAV detection in low-altitude clutter: simulation, preprocessing, learned detection."""

__version__ = "0.1.0"
