# Feedback linearization of the pendulum with output h = x1.
import numpy as np

from koopgeo import ControlAffineSystem
from koopgeo.expr import parse_expr, to_string
from koopgeo.feedback import FeedbackLaw, brunovsky_realization, relative_degree, verify_linearization
from koopgeo.numerics import ControlSignal

pend = ControlAffineSystem.parse(["x2", "-sin(x1) - x2/5"], [["0", "1"]], ["x1", "x2"])
h = [parse_expr("x1", ["x1", "x2"])]

rep = relative_degree(pend, h, [0.0, 0.0])
print(rep.render())

real = brunovsky_realization(pend, h, rep)
print(real.render())

law = FeedbackLaw(pend, h, rep)
print("u =", to_string(law.symbolic[0]))

# Closed loop under the law against the chain of integrators driven by v.
v = ControlSignal.from_exprs(["sin(t)"])
check = verify_linearization(pend, h, rep, v, [0.3, -0.2], 2.0, tol=1e-10)
print("max |phi(x(t)) - zeta(t)| = %.2e" % check.deviation)
print("final phi:", np.round(check.phi[-1], 6), " final zeta:", np.round(check.zeta[-1], 6))
