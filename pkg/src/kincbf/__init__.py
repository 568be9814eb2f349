"""Energy-based control barrier function safety filters for robot dynamics."""

__version__ = "0.1.0"
