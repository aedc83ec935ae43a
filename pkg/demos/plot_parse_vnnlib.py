"""
Reading a VNNLIB property
=========================

A property file declares inputs ``X_i`` and outputs ``Y_j`` and asserts a
formula describing the *unsafe* behaviour. Here we parse one, look at the
normalised atoms and pull out the input box.
"""

from boxverify import extract_input_box, format_spec, has_complex_input_disjunction, parse_spec

text = """
; two inputs, two outputs
(declare-const X_0 Real)
(declare-const X_1 Real)
(declare-const Y_0 Real)
(declare-const Y_1 Real)
(assert (>= X_0 -0.5))
(assert (<= X_0 0.5))
(assert (>= X_1 0.1))
(assert (<= X_1 0.3))
(assert (or (and (<= Y_0 Y_1)) (and (>= (+ Y_0 (* 2 Y_1)) 1.5))))
"""
spec = parse_spec(text)
print(spec.input_count, "inputs,", spec.output_count, "outputs")

###############################################################################
# Every comparison becomes ``sum(c * v) <= k`` or ``>= k`` with exact
# rational coefficients, so ``0.1`` really is one tenth.
print(format_spec(spec))

###############################################################################
# Bounds are rounded inward to doubles, so the box never leaves the region
# the property describes.
box = extract_input_box(spec)
print("lo =", box.lo)
print("hi =", box.hi)
print("0.1 stored as", box.lo[1].hex())

###############################################################################
# Disjunctions over inputs cannot be reduced to one box; the verifier
# answers ``unknown`` for them.
print("complex input disjunction:", has_complex_input_disjunction(spec))
