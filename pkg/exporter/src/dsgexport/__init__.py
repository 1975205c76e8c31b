"""Thin ingestion tool for the dynamic scene graph toolkit.

Runs a vision-transformer patch feature extractor over real video
frames (resized to 224x224), optionally computes keypoint matches
between consecutive frames, and writes DSGF blobs, manifests, and match
files. The primary toolkit is consumed only through those file formats.
"""

__version__ = "0.1.0"
