# Symbolic calculus on expression trees: parsing, canonical forms,
# derivatives, Lie derivatives and brackets.
from koopgeo.expr import diff, evaluate, parse_expr, to_string
from koopgeo.fields import VectorField, iterated_lie_derivative, lie_bracket, lie_derivative

# Expressions are kept in a canonical form, so equal things print the same.
e = parse_expr("(x + 1)^2 - 2*x", ["x"])
print("canonical:", to_string(e))
print("x^2 * x  ->", to_string(parse_expr("x^2 * x", ["x"])))

# Exact derivatives.
h = parse_expr("sin(x)*y + exp(x*y)", ["x", "y"])
print("d/dx", to_string(h), "=", to_string(diff(h, "x")))
print("value at (0.5, 2):", evaluate(diff(h, "x"), {"x": 0.5, "y": 2.0}))

# The Lie derivative is the derivative of an observable along a field.
pend = VectorField.parse(["x2", "-sin(x1)"], ["x1", "x2"])
energy = parse_expr("x2^2/2 - cos(x1)", ["x1", "x2"])
print("L_f energy =", to_string(lie_derivative(pend, energy)), "(energy is conserved)")
print("L_f^2 x1 =", to_string(iterated_lie_derivative(pend, parse_expr("x1", ["x1", "x2"]), 2)))

# Brackets of the unicycle's two input fields give the sideways motion.
vs = ["x", "y", "th"]
drive = VectorField.parse(["cos(th)", "sin(th)", "0"], vs)
turn = VectorField.parse(["0", "0", "1"], vs)
print("[drive, turn] =", lie_bracket(drive, turn))
