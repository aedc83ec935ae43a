import json
import logging

import numpy as np
import pytest

import boxverify.bounds as bounds_mod
from boxverify import onnx_runtime
from boxverify.bounds import Provenance, estimate_output_bounds, extract_optima, refine_bounds
from boxverify.cache import BoundsCache, cache_key
from boxverify.optimizer import OptConfig
from boxverify.sampler import Box, SampleSet, lhsmdu

from conftest import make_net, random_relu_net


@pytest.fixture
def identity():
    return make_net([[[1.0]]], [[0.0]])[0]


def samples_of(*xs):
    return SampleSet(np.array(xs, dtype=float).reshape(len(xs), -1), seed=0)


def test_extract_optima_identity(identity):
    c = extract_optima(identity, samples_of(0.1, 0.9, 0.4))
    assert c.argmin[0].tolist() == [0.1] and c.argmax[0].tolist() == [0.9]
    assert c.min_value.tolist() == [0.1] and c.max_value.tolist() == [0.9]


def test_extract_optima_single(identity):
    c = extract_optima(identity, samples_of(0.3))
    assert c.argmin[0].tolist() == c.argmax[0].tolist() == [0.3]


def test_extract_optima_sign_flip():
    net, _ = make_net([[[1.0], [-1.0]]], [[0.0, 0.0]])
    c = extract_optima(net, samples_of(0.2, 0.8))
    assert c.argmin[:, 0].tolist() == [0.2, 0.8]
    assert c.argmax[:, 0].tolist() == [0.8, 0.2]


def test_extract_optima_ties_take_lowest_row():
    net, _ = make_net([[[0.0]]], [[1.0]])
    c = extract_optima(net, samples_of(0.5, 0.1, 0.7))
    assert c.argmin[0].tolist() == c.argmax[0].tolist() == [0.5]


def test_refine_affine_reaches_corners():
    net, _ = make_net([[[2.0]]], [[1.0]])
    box = Box((0.0,), (1.0,))
    b = refine_bounds(net, box, extract_optima(net, samples_of(0.4, 0.6)))
    assert b.lo[0] == pytest.approx(1, abs=1e-6) and b.hi[0] == pytest.approx(3, abs=1e-6)


def test_refine_quadratic_minimum():
    # the op set has no smooth quadratic, so stand a python function in for infer
    class Square:
        input_dim = output_dim = 1

    net = Square()
    real_infer = onnx_runtime.infer
    try:
        onnx_runtime.infer = lambda n, x: np.array([(np.asarray(x)[0] - 0.5) ** 2]) if n is net else real_infer(n, x)
        box = Box((0.0,), (1.0,))
        c = extract_optima(net, samples_of(0.49, 0.9))
        b = refine_bounds(net, box, c)
    finally:
        onnx_runtime.infer = real_infer
    assert b.lo[0] == pytest.approx(0, abs=1e-8)
    assert b.lo_witness[0][0] == pytest.approx(0.5, abs=1e-4)


def dense_grid(weights, biases, box, per_dim=201):
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(box.lo, box.hi)]
    h = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    for k, (w, b) in enumerate(zip(weights, biases)):
        h = h @ np.asarray(w, float).T + b
        if k < len(weights) - 1:
            h = np.maximum(h, 0)
    return h.min(axis=0), h.max(axis=0)


def test_two_two_one_against_grid(tiny_relu):
    weights, biases = [np.array([[1, 1], [1, -1]]), np.array([[1, 1]])], [np.zeros(2), np.zeros(1)]
    box = Box((-1.0, -1.0), (1.0, 1.0))
    g_lo, g_hi = dense_grid(weights, biases, box)
    samples = lhsmdu(40, box, seed=0)
    c = extract_optima(tiny_relu, samples)
    b = refine_bounds(tiny_relu, box, c)
    assert b.lo[0] >= g_lo[0] - 0.02 and b.hi[0] <= g_hi[0] + 0.02
    assert b.lo[0] <= c.min_value[0] and b.hi[0] >= c.max_value[0]


def test_identity_bounds(identity):
    b = estimate_output_bounds(identity, Box((-2.0,), (5.0,)), seed=1)
    assert b.lo[0] == pytest.approx(-2, abs=1e-6) and b.hi[0] == pytest.approx(5, abs=1e-6)


def test_constant_bounds():
    net, _ = make_net([[[0.0, 0.0]]], [[2.5]])
    b = estimate_output_bounds(net, Box((0.0, 0.0), (1.0, 1.0)), seed=1)
    assert b.lo[0] == b.hi[0] == 2.5


def check_invariants(net, b, samples):
    ys = samples.outputs
    assert np.all(b.lo <= ys.min(axis=0)) and np.all(b.hi >= ys.max(axis=0))
    assert np.all(b.lo <= b.hi)
    for j in range(net.output_dim):
        assert abs(onnx_runtime.infer(net, b.lo_witness[j])[j] - b.lo[j]) <= 1e-9
        assert abs(onnx_runtime.infer(net, b.hi_witness[j])[j] - b.hi[j]) <= 1e-9


def test_random_nets_inner_bounds():
    rng = np.random.default_rng(11)
    for _ in range(6):
        n_in = int(rng.integers(1, 3))
        weights, biases = random_relu_net(rng, n_in, 2, [int(rng.integers(2, 8))])
        net, _ = make_net(weights, biases)
        box = Box.from_arrays(-np.ones(n_in), np.ones(n_in))
        g_lo, g_hi = dense_grid(weights, biases, box)
        b = estimate_output_bounds(net, box, seed=int(rng.integers(1000)))
        check_invariants(net, b, b.samples)
        # kinks between grid nodes let attained values undercut the grid slightly
        assert np.all(b.lo >= g_lo - 0.05) and np.all(b.hi <= g_hi + 0.05)


def test_parallel_refinement_matches_sequential():
    rng = np.random.default_rng(12)
    net, _ = make_net(*random_relu_net(rng, 2, 3, [6]))
    box = Box((-1.0, -1.0), (1.0, 1.0))
    a = estimate_output_bounds(net, box, seed=5)
    b = estimate_output_bounds(net, box, seed=5, jobs=4)
    assert a.lo.tobytes() == b.lo.tobytes() and a.hi.tobytes() == b.hi.tobytes()


def test_box_dimension_mismatch(identity):
    with pytest.raises(ValueError):
        estimate_output_bounds(identity, Box((0.0, 0.0), (1.0, 1.0)))


# -- cache ---------------------------------------------------------------------

def count_infer(monkeypatch):
    calls = {"n": 0}
    real = onnx_runtime.infer

    def counting(net, x):
        calls["n"] += 1
        return real(net, x)

    monkeypatch.setattr(onnx_runtime, "infer", counting)
    return calls


def test_cache_hit_skips_inference(tmp_path, monkeypatch):
    rng = np.random.default_rng(13)
    net, _ = make_net(*random_relu_net(rng, 2, 2, [5]))
    box = Box((-1.0, 0.0), (1.0, 0.5))
    cfg = OptConfig()
    fresh = estimate_output_bounds(net, box, seed=9, cfg=cfg, cache=tmp_path)
    assert fresh.provenance is Provenance.FRESH
    calls = count_infer(monkeypatch)
    cached = estimate_output_bounds(net, box, seed=9, cfg=cfg, cache=tmp_path)
    assert calls["n"] == 0
    assert cached.provenance is Provenance.CACHE and cached.samples is None
    for name in ("lo", "hi", "lo_witness", "hi_witness"):
        assert getattr(fresh, name).tobytes() == getattr(cached, name).tobytes()


def test_cache_key_sensitivity(tmp_path):
    box = Box((0.0,), (1.0,))
    base = cache_key("abc", box, 1, "cfg", 20)
    assert base != cache_key("abd", box, 1, "cfg", 20)
    assert base != cache_key("abc", Box((0.0,), (np.nextafter(1.0, 2.0),)), 1, "cfg", 20)
    assert base != cache_key("abc", box, 2, "cfg", 20)
    assert base != cache_key("abc", box, 1, "cfg2", 20)
    assert base != cache_key("abc", box, 1, "cfg", 40)


def test_cache_file_contents(tmp_path, identity):
    box = Box((-0.1,), (0.3,))
    estimate_output_bounds(identity, box, seed=4, cache=tmp_path)
    (path,) = tmp_path.glob("*.json")
    raw = json.loads(path.read_text())
    assert raw["format_version"] == 1 and raw["key"] == path.stem
    assert raw["fields"]["seed"] == 4 and raw["fields"]["samples"] == 20
    assert float.fromhex(raw["outputs"][0]["lo"]) == -0.1
    assert "created" in raw
    assert not list(tmp_path.glob(".tmp-*"))


def test_corrupt_cache_is_a_miss(tmp_path, identity, caplog):
    box = Box((0.0,), (1.0,))
    estimate_output_bounds(identity, box, seed=4, cache=tmp_path)
    (path,) = tmp_path.glob("*.json")
    path.write_text("{not json")
    with caplog.at_level(logging.WARNING):
        b = estimate_output_bounds(identity, box, seed=4, cache=BoundsCache(tmp_path))
    assert b.provenance is Provenance.FRESH
    assert "corrupt" in caplog.text
    assert json.loads(path.read_text())["format_version"] == 1  # rewritten
