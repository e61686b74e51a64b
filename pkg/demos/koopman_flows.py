# Flows, the Koopman action h -> h o Phi_t, and numerical checks of its
# operator identities.
import math

import numpy as np

from koopgeo import ControlAffineSystem
from koopgeo.expr import parse_expr
from koopgeo.numerics import (
    check_commutation,
    check_generator,
    check_group_law,
    convergence_slope,
    koopman_apply,
    milnor_check,
)

vdp = ControlAffineSystem.parse(["x2", "-x1 + (1 - x1^2)*x2"], variables=["x1", "x2"])
h = parse_expr("x1^2 + x2", ["x1", "x2"])

# U_t h evaluated at a point is just h at the end of the trajectory.
print("U_1 h (0.5, 0) =", koopman_apply(h, vdp, None, [0.5, 0.0], 1.0))

# Group law: U_{s+t} = U_t U_s.
print("group law residual:", check_group_law(vdp, h, 0.4, -0.7, [0.2, 0.3]))

# Generator: (U_t h - h)/t tends to L_f h at first order.
ts = [1e-2, 1e-3, 1e-4]
res = check_generator(vdp.drift, h, [0.3, -0.4], ts, tol=1e-12)
print("generator residuals:", ["%.2e" % r for r in res], "slope %.3f" % convergence_slope(ts, res))

# Flows of f = x d/dx and g = d/dx do not commute; the pushforward defect is e - 1.
f = ControlAffineSystem.parse(["x"]).drift
g = ControlAffineSystem.parse(["1"]).drift
print("commutation defect:", check_commutation(f, g, [0.0], 1.0), "vs e-1 =", math.e - 1)

# Milnor's circle map: close to the identity, yet 2n-periodic only at k pi/n.
rep = milnor_check(3, 0.01, list(np.arange(6) * math.pi / 3) + [0.1, 0.7, 2.0])
print(rep)
