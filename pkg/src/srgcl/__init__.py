"""Self-reinforced graph contrastive learning on numpy and scipy."""

__version__ = "0.1.0"
