"""Thorax symmetry assessment from rib and spine masks.

Pipeline: an active contour wraps the ribs, the spine midline splits the
thorax into hemithoraces, seven left/right similarity features are extracted
and a majority-vote ensemble labels the pair symmetric or asymmetric.
"""
__version__ = "0.1.0"
