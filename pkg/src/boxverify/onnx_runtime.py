"""Load single-chain feedforward ONNX models and run them as black boxes.

Only the operators found in fully connected networks are supported (MatMul,
Gemm, elementwise arithmetic with a constant operand, Relu/Sigmoid/Tanh and
Flatten). The model is evaluated in binary64 one sample at a time, so the same
input always gives bitwise-identical output.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import onnx
from onnx import numpy_helper

__all__ = [
    "ModelError",
    "UnsupportedOperator",
    "NonChainGraph",
    "MalformedModel",
    "NonFiniteOutput",
    "OpKind",
    "LayerOp",
    "Network",
    "load_network",
    "load_network_file",
    "input_size",
    "infer",
    "infer_many",
    "mlp_to_onnx",
]


class ModelError(Exception):
    """Base class for model loading and evaluation errors."""


class UnsupportedOperator(ModelError):
    pass


class NonChainGraph(ModelError):
    pass


class MalformedModel(ModelError):
    pass


class NonFiniteOutput(ModelError):
    pass


class OpKind(enum.Enum):
    MATMUL = "MatMul"
    ADD = "Add"
    SUB = "Sub"
    MUL = "Mul"
    DIV = "Div"
    GEMM = "Gemm"
    RELU = "Relu"
    SIGMOID = "Sigmoid"
    TANH = "Tanh"
    FLATTEN = "Flatten"


_ELEMENTWISE = {OpKind.RELU, OpKind.SIGMOID, OpKind.TANH, OpKind.FLATTEN}
_BINARY = {OpKind.ADD, OpKind.SUB, OpKind.MUL, OpKind.DIV}


@dataclass(frozen=True, eq=False)
class LayerOp:
    """One step of the chain.

    ``const`` is the constant operand (weight matrix or broadcast vector);
    ``const_first`` records that it is the left operand (``c - x``, ``W @ x``).
    For Gemm, ``const`` is the already transposed and alpha-scaled matrix and
    ``bias`` is beta*C.
    """

    kind: OpKind
    const: np.ndarray | None = None
    const_first: bool = False
    bias: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Network:
    input_dim: int
    output_dim: int
    layers: tuple[LayerOp, ...]
    source_digest: str

    def __call__(self, x) -> np.ndarray:
        return infer(self, x)


def _feature_dims(value_info) -> list:
    """Declared dims with a leading batch dimension of 1 or symbolic removed."""
    dims = []
    for d in value_info.type.tensor_type.shape.dim:
        dims.append(d.dim_value if d.HasField("dim_value") else None)
    if len(dims) >= 2:
        if dims[0] not in (None, 1):
            raise MalformedModel(f"batch dimension {dims[0]} is not 1")
        dims = dims[1:]
    return dims


def _as_broadcast(c: np.ndarray, width: int, what: str) -> np.ndarray:
    core = c.reshape([s for s in c.shape if s != 1])
    if core.ndim == 0:
        return core.reshape(())
    if core.ndim == 1 and core.shape[0] == width:
        return core
    raise MalformedModel(f"{what}: constant of shape {c.shape} does not broadcast to width {width}")


def load_network(data: bytes) -> Network:
    try:
        model = onnx.load_from_string(data)
    except Exception as exc:  # protobuf raises DecodeError and friends
        raise MalformedModel(f"cannot decode ONNX model: {exc}") from exc
    graph = model.graph

    consts: dict[str, np.ndarray] = {}
    for init in graph.initializer:
        consts[init.name] = numpy_helper.to_array(init).astype(np.float64)
    nodes = []
    for node in graph.node:
        if node.op_type == "Constant":
            attr = {a.name: a for a in node.attribute}
            if "value" not in attr:
                raise UnsupportedOperator("Constant node without a tensor value")
            consts[node.output[0]] = numpy_helper.to_array(attr["value"].t).astype(np.float64)
        else:
            nodes.append(node)

    inputs = [vi for vi in graph.input if vi.name not in consts]
    if len(inputs) != 1 or len(graph.output) != 1:
        raise NonChainGraph("model must have exactly one data input and one output")
    for node in nodes:
        try:
            OpKind(node.op_type)
        except ValueError:
            raise UnsupportedOperator(f"operator {node.op_type!r} is not supported") from None

    in_dims = _feature_dims(inputs[0])
    if any(d is None for d in in_dims) or not in_dims:
        raise MalformedModel("input shape must be fully specified")
    width = int(np.prod(in_dims))
    non_unit = [d for d in in_dims if d != 1]
    if len(non_unit) > 1 and (not nodes or nodes[0].op_type != "Flatten"):
        raise MalformedModel(f"multi-axis input {in_dims} must be flattened first")

    layers = []
    current = inputs[0].name
    remaining = list(nodes)
    while remaining:
        users = [n for n in remaining if current in n.input]
        if not users:
            break
        if len(users) > 1:
            raise NonChainGraph(f"tensor {current!r} feeds several nodes")
        node = users[0]
        remaining.remove(node)
        if len(node.output) != 1:
            raise NonChainGraph(f"{node.op_type} node has {len(node.output)} outputs")
        layer, width = _build_layer(node, current, consts, width)
        layers.append(layer)
        current = node.output[0]
    if remaining:
        raise NonChainGraph(f"{len(remaining)} node(s) are not on the input-output chain")
    if current != graph.output[0].name:
        raise NonChainGraph("chain does not end at the graph output")

    out_dims = _feature_dims(graph.output[0])
    if out_dims and all(d is not None for d in out_dims) and int(np.prod(out_dims)) != width:
        raise MalformedModel(f"declared output shape {out_dims} does not match width {width}")

    return Network(
        input_dim=int(np.prod(in_dims)),
        output_dim=width,
        layers=tuple(layers),
        source_digest=hashlib.sha256(data).hexdigest(),
    )


def _build_layer(node, current: str, consts: dict, width: int) -> tuple[LayerOp, int]:
    kind = OpKind(node.op_type)
    others = [name for name in node.input if name and name != current]
    if list(node.input).count(current) != 1:
        raise NonChainGraph(f"{node.op_type} uses the running tensor more than once")
    for name in others:
        if name not in consts:
            raise NonChainGraph(f"{node.op_type} reads non-constant tensor {name!r}")

    if kind in _ELEMENTWISE:
        if others:
            raise MalformedModel(f"{node.op_type} takes no constant operands")
        return LayerOp(kind), width

    if kind in _BINARY:
        if len(node.input) != 2:
            raise MalformedModel(f"{node.op_type} needs two operands")
        const_first = node.input[0] != current
        c = _as_broadcast(consts[others[0]], width, node.op_type)
        if kind is OpKind.DIV and not const_first and np.any(c == 0):
            raise MalformedModel("division by a constant containing zero")
        return LayerOp(kind, c, const_first), width

    if kind is OpKind.MATMUL:
        if len(node.input) != 2:
            raise MalformedModel("MatMul needs two operands")
        w = consts[others[0]]
        if w.ndim != 2:
            raise MalformedModel(f"MatMul weight must be 2-D, got shape {w.shape}")
        const_first = node.input[0] != current
        inner = w.shape[1] if const_first else w.shape[0]
        if inner != width:
            raise MalformedModel(f"MatMul weight {w.shape} does not accept width {width}")
        out = w.shape[0] if const_first else w.shape[1]
        return LayerOp(kind, np.ascontiguousarray(w), const_first), out

    # Gemm: running tensor must be A
    attrs = {a.name: onnx.helper.get_attribute_value(a) for a in node.attribute}
    alpha = float(attrs.get("alpha", 1.0))
    beta = float(attrs.get("beta", 1.0))
    if node.input[0] != current:
        raise UnsupportedOperator("Gemm with a constant A operand is not supported")
    if int(attrs.get("transA", 0)):
        raise MalformedModel("Gemm transA=1 on a row vector input")
    b = consts[node.input[1]]
    if b.ndim != 2:
        raise MalformedModel("Gemm B must be 2-D")
    if int(attrs.get("transB", 0)):
        b = b.T
    if b.shape[0] != width:
        raise MalformedModel(f"Gemm B {b.shape} does not accept width {width}")
    out = b.shape[1]
    bias = None
    if len(node.input) > 2 and node.input[2]:
        bias = beta * _as_broadcast(consts[node.input[2]], out, "Gemm C")
    layer = LayerOp(kind, np.ascontiguousarray(alpha * b), False, bias,
                    {"alpha": alpha, "beta": beta})
    return layer, out


def load_network_file(path) -> Network:
    with open(path, "rb") as fh:
        return load_network(fh.read())


def input_size(net: Network) -> int:
    return net.input_dim


def _apply(layer: LayerOp, v: np.ndarray) -> np.ndarray:
    k = layer.kind
    if k is OpKind.MATMUL:
        return layer.const @ v if layer.const_first else v @ layer.const
    if k is OpKind.GEMM:
        out = v @ layer.const
        return out + layer.bias if layer.bias is not None else out
    if k is OpKind.RELU:
        return np.maximum(v, 0.0)
    if k is OpKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-v))
    if k is OpKind.TANH:
        return np.tanh(v)
    if k is OpKind.FLATTEN:
        return v
    c = layer.const
    a, b = (c, v) if layer.const_first else (v, c)
    if k is OpKind.ADD:
        return a + b
    if k is OpKind.SUB:
        return a - b
    if k is OpKind.MUL:
        return a * b
    return a / b


def infer(net: Network, x) -> np.ndarray:
    v = np.array(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("input contains non-finite values")
    with np.errstate(all="ignore"):
        for layer in net.layers:
            v = _apply(layer, v)
    v = np.broadcast_to(v, (net.output_dim,)).copy()
    if not np.all(np.isfinite(v)):
        raise NonFiniteOutput("network produced inf or NaN")
    return v


def infer_many(net: Network, points) -> np.ndarray:
    """Row-by-row ``infer``; results match single calls bit for bit."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.empty((points.shape[0], net.output_dim))
    for i, row in enumerate(points):
        out[i] = infer(net, row)
    return out


def mlp_to_onnx(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    activation: str = "Relu",
    *,
    style: str = "matmul",
    dtype=np.float32,
) -> bytes:
    """Serialize a dense network ``y = W_k(...act(W_1 x + b_1)...) + b_k``.

    ``weights[i]`` has shape ``(out, in)``. ``style`` selects MatMul+Add or
    Gemm nodes. Handy for tests and demos.
    """
    from onnx import TensorProto, helper

    elem = TensorProto.DOUBLE if np.dtype(dtype) == np.float64 else TensorProto.FLOAT
    n_in = np.asarray(weights[0]).shape[1]
    n_out = np.asarray(weights[-1]).shape[0]
    nodes, inits = [], []
    cur = "input"
    for i, (w, b) in enumerate(zip(weights, biases)):
        w = np.asarray(w, dtype=dtype)
        b = np.asarray(b, dtype=dtype).reshape(-1)
        if style == "gemm":
            inits += [numpy_helper.from_array(w, f"W{i}"), numpy_helper.from_array(b, f"b{i}")]
            nodes.append(helper.make_node("Gemm", [cur, f"W{i}", f"b{i}"], [f"g{i}"], transB=1))
            cur = f"g{i}"
        else:
            inits += [numpy_helper.from_array(np.ascontiguousarray(w.T), f"W{i}"),
                      numpy_helper.from_array(b, f"b{i}")]
            nodes.append(helper.make_node("MatMul", [cur, f"W{i}"], [f"m{i}"]))
            nodes.append(helper.make_node("Add", [f"m{i}", f"b{i}"], [f"a{i}"]))
            cur = f"a{i}"
        if i < len(weights) - 1 and activation:
            nodes.append(helper.make_node(activation, [cur], [f"h{i}"]))
            cur = f"h{i}"
    nodes[-1].output[0] = "output"
    graph = helper.make_graph(
        nodes, "mlp",
        [helper.make_tensor_value_info("input", elem, [1, n_in])],
        [helper.make_tensor_value_info("output", elem, [1, n_out])],
        initializer=inits,
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    return model.SerializeToString()
