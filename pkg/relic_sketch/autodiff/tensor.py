"""
Relic Sketch - Tensor and Differentiation Graph
Dense float64 tensors recorded on an append-only tape for reverse-mode differentiation
"""

import logging
import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from relic_sketch.errors import ContractError

logger = logging.getLogger(__name__)

VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Node:
    """One tape entry: operation tag, input handles and the vector-Jacobian product"""

    __slots__ = ("tag", "inputs", "vjp", "shape")

    def __init__(self, tag: str, inputs: Tuple[Optional[int], ...], vjp: Optional[VJP], shape: Tuple[int, ...]):
        self.tag = tag
        self.inputs = inputs
        self.vjp = vjp
        self.shape = shape


class Tensor:
    """
    Value-semantic n-D array of 64-bit floats.
    A tensor with a grad_id lives on a Graph; one without is a constant.
    """

    __slots__ = ("data", "graph", "grad_id")

    def __init__(self, data, graph: Optional["Graph"] = None, grad_id: Optional[int] = None):
        array = np.ascontiguousarray(data, dtype=np.float64)
        self.data = array
        self.graph = graph
        self.grad_id = grad_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tracked = f", grad_id={self.grad_id}" if self.grad_id is not None else ""
        return f"Tensor(shape={list(self.shape)}{tracked})"


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Graph:
    """
    Append-only tape. Nodes are appended in evaluation order so the append
    order is already a topological order. Confined to the thread that made it.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.parameters: Dict[str, int] = {}
        self._owner = threading.get_ident()

    def _check_thread(self):
        if threading.get_ident() != self._owner:
            raise ContractError("Graph used from a thread other than the one that created it")

    def parameter(self, name: str, value) -> Tensor:
        """Register a named leaf whose gradient backward() reports"""
        self._check_thread()
        if name in self.parameters:
            raise ContractError(f"Parameter '{name}' registered twice on the same graph")
        tensor = Tensor(value)
        handle = len(self.nodes)
        self.nodes.append(Node("parameter", (), None, tensor.shape))
        self.parameters[name] = handle
        tensor.graph = self
        tensor.grad_id = handle
        return tensor

    def record(self, tag: str, inputs: Sequence[Tensor], data: np.ndarray, vjp: VJP) -> Tensor:
        self._check_thread()
        handles = tuple(t.grad_id if t.graph is self else None for t in inputs)
        handle = len(self.nodes)
        out = Tensor(data, self, handle)
        self.nodes.append(Node(tag, handles, vjp, out.shape))
        return out

    def __len__(self) -> int:
        return len(self.nodes)


def graph_of(*tensors: Tensor) -> Optional[Graph]:
    """The single graph the tracked inputs live on, or None when all are constants"""
    found = None
    for tensor in tensors:
        if tensor is None or tensor.graph is None:
            continue
        if found is None:
            found = tensor.graph
        elif tensor.graph is not found:
            raise ContractError("Inputs belong to different graphs")
    return found


def record(tag: str, inputs: Sequence[Tensor], data: np.ndarray, vjp: VJP) -> Tensor:
    graph = graph_of(*inputs)
    if graph is None:
        return Tensor(data)
    return graph.record(tag, inputs, data, vjp)


def backward(graph: Graph, loss: Tensor) -> Dict[str, np.ndarray]:
    """
    Reverse sweep over the tape in strict reverse append order.
    Returns the gradient of the scalar loss for every registered parameter;
    parameters the loss does not depend on get exact zeros.
    """
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {list(loss.shape)}")
    if loss.graph is not graph or loss.grad_id is None:
        raise ContractError("Loss is not reachable from any parameter on this graph")

    grads: List[Optional[np.ndarray]] = [None] * len(graph.nodes)
    grads[loss.grad_id] = np.ones(loss.shape, dtype=np.float64)

    for handle in range(len(graph.nodes) - 1, -1, -1):
        grad = grads[handle]
        node = graph.nodes[handle]
        if grad is None or node.vjp is None:
            continue
        for source, contribution in zip(node.inputs, node.vjp(grad)):
            if source is None or contribution is None:
                continue
            if grads[source] is None:
                grads[source] = np.array(contribution, dtype=np.float64, copy=True)
            else:
                grads[source] += contribution

    result = {}
    for name, handle in graph.parameters.items():
        grad = grads[handle]
        result[name] = grad if grad is not None else np.zeros(graph.nodes[handle].shape)
    return result


def make_generator(seed: int) -> np.random.Generator:
    """
    Seeded PCG64 generator. PCG64 advances a 128-bit linear congruential state
    (state <- state * 0x2360ed051fc65da44385df649fccf645 + increment mod 2**128)
    and emits the XSL-RR permutation of it, so a seed fixes every draw.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))
