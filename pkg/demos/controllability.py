# Lie algebra rank condition checks: which directions can the inputs reach?
from koopgeo import ControlAffineSystem
from koopgeo.controllability import controllability_verdict
from koopgeo.fields import Box

# Unicycle: two inputs, three states.  The bracket of "drive" and "turn"
# supplies the missing sideways direction.
uni = ControlAffineSystem.parse(
    ["0", "0", "0"], [["cos(th)", "sin(th)", "0"], ["0", "0", "1"]], ["x", "y", "th"],
    box=Box(((-1, 1), (-1, 1), (-3, 3))))
print(controllability_verdict(uni, samples=3).render())
print()

# A single input moving x1 only: the reachable set is a line.
frozen = ControlAffineSystem.parse(["0", "0"], [["1", "0"]], ["x1", "x2"])
print(controllability_verdict(frozen, samples=3).verdict)

# Double integrator: drift plus one input.  At the origin the drift vanishes,
# so the bracket [f, g1] is needed to reach full rank there.
di = ControlAffineSystem.parse(["x2", "0"], [["0", "1"]], ["x1", "x2"])
print(controllability_verdict(di, points=[[0.0, 0.0]], samples=2).render())
