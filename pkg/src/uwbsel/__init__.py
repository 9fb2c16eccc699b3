"""Energy-aware LoS/NLoS UWB beacon-pair selection with deep Q-learning."""

__version__ = "0.1.0"
