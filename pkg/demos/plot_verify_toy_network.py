"""
Verifying a small ReLU network
==============================

We build ``y = relu(x0 + x1) + relu(x0 - x1)`` as an ONNX model, whose range
on ``[-1, 1]^2`` is ``[0, 2]``, and check two properties with the same
pipeline the command line uses.
"""

import tempfile
from pathlib import Path

import numpy as np

from boxverify import estimate_output_bounds, extract_input_box, load_network, parse_spec
from boxverify.cli import validate_ce, verify
from boxverify.onnx_runtime import mlp_to_onnx

weights = [np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([[1.0, 1.0]])]
biases = [np.zeros(2), np.zeros(1)]
model_bytes = mlp_to_onnx(weights, biases, "Relu")
net = load_network(model_bytes)

box_text = """
(declare-const X_0 Real)
(declare-const X_1 Real)
(declare-const Y_0 Real)
(assert (>= X_0 -1)) (assert (<= X_0 1))
(assert (>= X_1 -1)) (assert (<= X_1 1))
"""

###############################################################################
# Output range estimate: sampled, then pushed outward by local optimisation.
# Every bound is attained at its witness, so this is an inner estimate.
box = extract_input_box(parse_spec(box_text + "(assert (>= Y_0 0))"))
b = estimate_output_bounds(net, box, seed=0)
print("range ~", b.lo, b.hi, "attained at", b.lo_witness, b.hi_witness)

###############################################################################
# ``Y_0 >= 3`` cannot happen (holds); ``Y_0 >= 1.5`` has a violation region.
work = Path(tempfile.mkdtemp())
model = work / "toy.onnx"
model.write_bytes(model_bytes)
for name, unsafe in [("far", "(assert (>= Y_0 3))"), ("near", "(assert (>= Y_0 1.5))")]:
    spec = work / f"{name}.vnnlib"
    spec.write_text(box_text + unsafe)
    rec = verify(model, spec, seed=0, ce_out=work / f"{name}.counterexample")
    print(name, "->", rec.result, f"({rec.time_seconds:.3f} s)")
    if rec.ce_path:
        print(Path(rec.ce_path).read_text().strip())
        print("re-check:", validate_ce(model, spec, rec.ce_path))
