"""
Batch runs and the bounds cache
===============================

A manifest lists ``model,spec`` pairs. The batch runner produces one CSV row
per pair plus a summary line. Output bounds depend only on the model, the
input box, the seed and the optimiser settings, so properties that share a
box reuse cached bounds.
"""

import io
import tempfile
from pathlib import Path

import numpy as np

from boxverify.cli import run_batch, write_csv
from boxverify.onnx_runtime import mlp_to_onnx

work = Path(tempfile.mkdtemp())
rng = np.random.default_rng(1)
w = [rng.normal(size=(6, 3)), rng.normal(size=(2, 6))]
(work / "net.onnx").write_bytes(mlp_to_onnx(w, [np.zeros(6), np.zeros(2)], "Tanh"))

header = "".join(f"(declare-const X_{i} Real)(assert (>= X_{i} -1))(assert (<= X_{i} 1))\n" for i in range(3))
header += "(declare-const Y_0 Real)(declare-const Y_1 Real)\n"
props = {
    "p_far.vnnlib": "(assert (>= Y_0 100))",
    "p_order.vnnlib": "(assert (<= Y_0 Y_1))",
    "p_either.vnnlib": "(assert (or (and (>= Y_1 50)) (and (<= Y_1 -50))))",
    "p_input_or.vnnlib": "(assert (or (<= X_0 0) (>= Y_0 0)))",
}
for name, body in props.items():
    (work / name).write_text(header + body)
(work / "manifest.csv").write_text("model,spec\n" + "".join(f"net.onnx,{n}\n" for n in props))

###############################################################################
# The first property computes bounds; the other three hit the cache.
records, summary = run_batch(work / "manifest.csv", ce_dir=work, cache_dir=work / "cache")
buf = io.StringIO()
write_csv(records, buf)
print(buf.getvalue())
print(summary)
print([r.provenance for r in records])
print(sorted(p.name for p in (work / "cache").iterdir()))
