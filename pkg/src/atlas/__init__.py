"""Semantic retrieval and grounded narrative answers over long intersection
videos: clip segmentation, exact vector search, taxonomy-constrained
knowledge graphs, visual grounding, and the HTTP/WebSocket service."""

__version__ = "0.1.0"
