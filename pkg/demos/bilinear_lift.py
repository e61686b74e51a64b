# Lifting a control-affine system to a bilinear system on a monomial
# dictionary, and comparing the lifted and true trajectories.
import numpy as np

from koopgeo import ControlAffineSystem
from koopgeo.lift import bilinearize, build_monomial_dictionary, compare_lift, lift_error
from koopgeo.numerics import ControlSignal

# Double integrator: linear drift and constant input field, so every
# monomial dictionary is closed and the lift is exact.
di = ControlAffineSystem.parse(["x2", "0"], [["0", "1"]], ["x1", "x2"])
d = build_monomial_dictionary(2, 2)
lifted = bilinearize(di, d)
print("dictionary:", d)
print("exact:", lifted.exact)
print("A =\n", lifted.A)
print("N =\n", lifted.N[0])

u = ControlSignal.piecewise_constant([0.3, 0.6], [[1.0], [-1.0], [0.0]])
comp = compare_lift(di, d, u, [0.2, -0.1], 1.0)
print("bang-bang lift error: %.2e" % comp.sup_error)

# x' = x^2 has no finite closed dictionary; the error shrinks as degree grows.
quad = ControlAffineSystem.parse(["x^2"])
for deg in range(2, 7):
    err = lift_error(quad, build_monomial_dictionary(1, deg), None, [0.1], 1.0, tol=1e-12)
    print("degree %d  lift error %.3e" % (deg, err))

# Non-polynomial fields fall back to a least-squares projection on the box.
pend = ControlAffineSystem.parse(["x2", "-sin(x1)"], [["0", "1"]], ["x1", "x2"])
proj = bilinearize(pend, build_monomial_dictionary(2, 3))
print("pendulum projected:", proj.projected, "worst drift fit %.2e" % np.max(proj.residuals[0]))
