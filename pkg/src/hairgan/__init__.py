"""hairgan: 2D hair-information maps to 3D orientation volumes.

Pipeline pieces: unified model space and direction color coding (mspace),
procedural hairstyles (strands), ground-truth volume and 2D capture
(rasterize), image orientation estimation (orient2d), a small autodiff
engine (autodiff), the adversarial networks and trainer (gan), strand
synthesis from predicted volumes (synth), and the command line (cli).
"""

__version__ = "0.1.0"
