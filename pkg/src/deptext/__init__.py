"""Text-based depression detection: multi-task BGRU over text embeddings."""
__version__ = "0.1.0"
