import json
from pathlib import Path

import numpy as np
import pytest

import boxverify.checker as checker_mod
from boxverify import onnx_runtime
from boxverify.onnx_runtime import load_network, mlp_to_onnx

DATA = Path(__file__).parent / "data"

# Every Violated verdict produced anywhere in the test session is re-checked
# from scratch when the session ends.
VIOLATED_LOG: list = []
_original_decide = checker_mod.decide


def _recording_decide(spec, net, box, bounds, samples):
    verdict = _original_decide(spec, net, box, bounds, samples)
    if verdict.kind is checker_mod.VerdictKind.VIOLATED:
        VIOLATED_LOG.append((spec, net, verdict))
    return verdict


checker_mod.decide = _recording_decide


def recheck(spec, net, verdict) -> bool:
    y = onnx_runtime.infer(net, verdict.x)
    return bool(np.array_equal(y, verdict.y) and checker_mod.eval_point(spec.assertion, verdict.x, y))


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list = []


@pytest.hookimpl(tryfirst=True)
def pytest_sessionfinish(session, exitstatus):
    bad = [v for v in VIOLATED_LOG if not recheck(*v)]
    status = "PASS" if not bad else "FAIL"
    ACCEPTANCE_LINES.append(
        f"[criterion 8, session-wide] {status}: {len(VIOLATED_LOG) - len(bad)}/{len(VIOLATED_LOG)} "
        "violated verdicts re-validated")
    if bad:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


def make_net(weights, biases, activation="Relu", **kw):
    weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in weights]
    biases = [np.asarray(b, dtype=float).reshape(-1) for b in biases]
    data = mlp_to_onnx(weights, biases, activation, dtype=np.float64, **kw)
    return load_network(data), data


@pytest.fixture
def tiny_relu():
    """2-2-1 ReLU net: y = relu(x0 + x1) + relu(x0 - x1)."""
    net, _ = make_net([[[1, 1], [1, -1]], [[1, 1]]], [[0, 0], [0]])
    return net


@pytest.fixture
def write_model(tmp_path):
    def write(weights, biases, name="net.onnx", **kw):
        _, data = make_net(weights, biases, **kw)
        p = tmp_path / name
        p.write_bytes(data)
        return p
    return write


@pytest.fixture(scope="session")
def vnnlib_corpus():
    folder = DATA / "vnnlib"
    expected = json.loads((folder / "expected.json").read_text())
    return folder, expected


def random_relu_net(rng, n_in, n_out, hidden):
    sizes = [n_in, *hidden, n_out]
    weights = [rng.normal(size=(b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(scale=0.5, size=b) for b in sizes[1:]]
    return weights, biases
