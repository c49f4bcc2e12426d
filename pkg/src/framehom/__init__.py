"""framehom: two-scale homogenisation of thin periodic rod frameworks with
epsilon^2-soft inclusions.

Library layout:

- geometry: frameworks, rod regions, crossed-triangle meshes
- materials: plane elasticity tensors and the orthonormal Voigt map
- cell_homog: homogenised tensor of the singular rod measure
- micro_spectral: coupled beam/inclusion eigenproblem on the cell
- limit_spectrum: Zhikov beta function, band structure, homogenised solve
- direct_solver: fine-scale reference problem on the composite
- numerics: sparse assembly, factorisation, shift-invert eigensolves
- cli: the ``homog`` command
"""

__version__ = "0.1.0"
