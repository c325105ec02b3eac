"""Region-of-interest scene decomposition and ray-level composition.

A small volumetric rendering stack: COLMAP-style sparse reconstructions come
in, cameras get grouped per region of interest by point visibility, radiance
fields (analytic or voxel grids) are rendered per region and recombined at the
ray level, and a harness scores the result against oracle renders.
"""

__version__ = "0.1.0"
