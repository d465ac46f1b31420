"""Energy-stable finite element schemes for FENE-P viscoelastic flow.

Two discretizations of the coupled Navier-Stokes / conformation-tensor
system on 2-D triangulations, both of which satisfy a discrete free
energy inequality for any time step:

* a piecewise-constant stress scheme with discontinuous-Galerkin
  upwinding of the stress transport (:mod:`fenep.scheme_p0`);
* a piecewise-linear stress scheme with added stress diffusion, mass
  lumping of the nonlinear terms and an auxiliary trace variable
  (:mod:`fenep.scheme_p1diff`).

Every time step is audited: the free energy inequality, the trace
balance and the positivity indicators are evaluated a posteriori and
reported.  The ``fenep`` command line drives full runs and the
verification suites.
"""

from __future__ import annotations

__version__ = "0.1.0"
