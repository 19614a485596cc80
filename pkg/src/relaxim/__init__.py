"""Numerical inertial manifolds for hyperbolic relaxations of parabolic equations.

The package works on Galerkin truncations of ``eps u'' + u' + A u = F(u)`` in
the eigenbasis of ``A``: spectra and gap conditions (:mod:`.spectrum`),
weighted norms (:mod:`.spaces`), weighted linear solves (:mod:`.linsolve`),
nonlinearities (:mod:`.nonlin`), the Perron construction (:mod:`.manifold`),
forward dynamics (:mod:`.dynamics`) and the damped-wave pipeline
(:mod:`.wave1d`).
"""

__version__ = "0.1.0"
