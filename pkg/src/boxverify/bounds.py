"""Output range estimation: LHSMDU sampling followed by L-BFGS-B refinement.

The result is an inner estimate: every bound is an output value actually
attained at a recorded witness point, so it may fall short of the true range
but never overshoots it.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import onnx_runtime
from .cache import BoundsCache, cache_key
from .optimizer import Objective, OptConfig, minimize
from .sampler import SampleSet, lhsmdu
from .vnnlib import Box

__all__ = [
    "SAMPLES_PER_INPUT",
    "Provenance",
    "CandidateSet",
    "OutputBounds",
    "extract_optima",
    "refine_bounds",
    "estimate_output_bounds",
]

SAMPLES_PER_INPUT = 20


class Provenance(enum.Enum):
    FRESH = "Fresh"
    CACHE = "Cache"


@dataclass
class CandidateSet:
    argmin: np.ndarray  # (outputs, inputs)
    argmax: np.ndarray
    min_value: np.ndarray
    max_value: np.ndarray


@dataclass
class OutputBounds:
    lo: np.ndarray
    hi: np.ndarray
    lo_witness: np.ndarray  # (outputs, inputs)
    hi_witness: np.ndarray
    provenance: Provenance = Provenance.FRESH
    samples: SampleSet | None = None

    def __len__(self) -> int:
        return self.lo.shape[0]


def extract_optima(net, samples: SampleSet) -> CandidateSet:
    """Evaluate every sample (filling ``samples.outputs``) and pick per-output
    extreme rows; ``argmin``/``argmax`` return the first row on ties."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    if samples.outputs is None:
        samples.outputs = onnx_runtime.infer_many(net, samples.points)
    y = samples.outputs
    imin = np.argmin(y, axis=0)
    imax = np.argmax(y, axis=0)
    cols = np.arange(y.shape[1])
    return CandidateSet(
        argmin=samples.points[imin].copy(),
        argmax=samples.points[imax].copy(),
        min_value=y[imin, cols].copy(),
        max_value=y[imax, cols].copy(),
    )


def _refine_one(net, box: Box, j: int, start, sign: float, cfg: OptConfig):
    def fn(x):
        return sign * onnx_runtime.infer(net, x)[j]

    try:
        res = minimize(Objective(fn), start, box, cfg)
    except onnx_runtime.NonFiniteOutput:
        return None
    x = res.x_best
    return x, float(onnx_runtime.infer(net, x)[j])


def refine_bounds(net, box: Box, cands: CandidateSet, cfg: OptConfig | None = None,
                  jobs: int = 1) -> OutputBounds:
    cfg = cfg or OptConfig()
    m = cands.min_value.shape[0]
    tasks = [(j, cands.argmin[j], 1.0) for j in range(m)]
    tasks += [(j, cands.argmax[j], -1.0) for j in range(m)]

    def run(task):
        j, start, sign = task
        return _refine_one(net, box, j, start, sign, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    lo = cands.min_value.copy()
    hi = cands.max_value.copy()
    lo_w = cands.argmin.copy()
    hi_w = cands.argmax.copy()
    for (j, _, sign), res in zip(tasks, results):
        if res is None:
            continue
        x, val = res
        if sign > 0 and val < lo[j]:
            lo[j], lo_w[j] = val, x
        elif sign < 0 and val > hi[j]:
            hi[j], hi_w[j] = val, x
    return OutputBounds(lo, hi, lo_w, hi_w, Provenance.FRESH)


def estimate_output_bounds(
    net,
    box: Box,
    seed: int = 42,
    cfg: OptConfig | None = None,
    *,
    samples_per_input: int = SAMPLES_PER_INPUT,
    cache: BoundsCache | str | None = None,
    jobs: int = 1,
) -> OutputBounds:
    """Sample ``samples_per_input * input_size`` points, then refine.

    With a cache, a hit returns stored bounds without evaluating the network
    (``samples`` is then None).
    """
    cfg = cfg or OptConfig()
    if box.dim != net.input_dim:
        raise ValueError(f"box has {box.dim} dims, network takes {net.input_dim}")
    n = samples_per_input * onnx_runtime.input_size(net)
    if cache is not None and not isinstance(cache, BoundsCache):
        cache = BoundsCache(cache)
    key = None
    if cache is not None:
        key = cache_key(net.source_digest, box, seed, cfg.fingerprint(), n)
        hit = cache.load(key)
        if hit is not None and len(hit["outputs"]) == net.output_dim:
            outs = hit["outputs"]
            return OutputBounds(
                lo=np.array([o["lo"] for o in outs]),
                hi=np.array([o["hi"] for o in outs]),
                lo_witness=np.array([o["lo_witness"] for o in outs]),
                hi_witness=np.array([o["hi_witness"] for o in outs]),
                provenance=Provenance.CACHE,
            )

    samples = lhsmdu(n, box, seed)
    cands = extract_optima(net, samples)
    bounds = refine_bounds(net, box, cands, cfg, jobs=jobs)
    bounds.samples = samples

    if cache is not None:
        fields = {
            "model_sha256": net.source_digest,
            "box_lo": [float(v).hex() for v in box.lo],
            "box_hi": [float(v).hex() for v in box.hi],
            "seed": int(seed),
            "config": cfg.fingerprint(),
            "samples": n,
        }
        outputs = [
            {"lo": bounds.lo[j], "hi": bounds.hi[j],
             "lo_witness": bounds.lo_witness[j], "hi_witness": bounds.hi_witness[j]}
            for j in range(net.output_dim)
        ]
        cache.store(key, fields, outputs)
    return bounds
