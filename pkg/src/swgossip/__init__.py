"""Gossip-based file location with Bloom filters in clustered small-world overlays."""

__version__ = "0.1.0"
