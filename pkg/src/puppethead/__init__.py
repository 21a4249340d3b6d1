"""puppethead: desk-scale stylized head animation.

A parametric head rig drives surface-normal condition maps, a small latent
diffusion model consumes them (plus expression and reference embeddings
through decoupled cross-attention), and everything trains end to end on a
procedural synthetic dataset at 64x64.
"""

__version__ = "0.1.0"
