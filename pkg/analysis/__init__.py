"""Training objectives and image quality metrics."""
