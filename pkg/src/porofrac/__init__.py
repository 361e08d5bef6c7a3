"""Mixed-dimensional poromechanics with fracture contact mechanics.

Core pieces: mixed-dimensional meshing (:mod:`porofrac.mdgeom`), constitutive
laws (:mod:`porofrac.constitutive`), cell-wise contact kernels
(:mod:`porofrac.contact`), residual/Jacobian assembly
(:mod:`porofrac.assembly`), the three nonlinear solvers
(:mod:`porofrac.solvers`) and the scenario runner / CLI
(:mod:`porofrac.scenarios`, :mod:`porofrac.runner`, :mod:`porofrac.cli`).
"""

__version__ = "0.1.0"
