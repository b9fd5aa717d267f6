"""Semi-supervised video inpainting: complete a whole clip from one annotated mask.

Two jointly trained networks do the work: a completion network fills the
corrupted regions of a frame given its mask, and a mask prediction network
locates the corrupted regions of the next frame by comparing it against the
completed one. Alternating the two propagates a single annotation through
the video.
"""

__version__ = "0.1.0"
