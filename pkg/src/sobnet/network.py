"""Explicit feed-forward networks with per-neuron ReLU / ReLU^2 activations.

A network is a plain list of layers, each holding a dense weight matrix, a
bias vector, and one activation tag per neuron.  The final layer is always
affine (all-identity).  Networks are immutable after construction; evaluation,
differentiation, and the structural combinators (stack, parallel, identity
padding) never mutate their arguments.

Width counts the largest hidden layer; depth counts hidden layers.  Both are
the quantities the size budgets of the constructions in this package refer to.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

IDENTITY = 0
RELU = 1
RELU2 = 2

_ACT_NAMES = {IDENTITY: "identity", RELU: "relu", RELU2: "relu2"}
_ACT_CODES = {name: code for code, name in _ACT_NAMES.items()}

# Weight matrices denser than this (and big enough to matter) are kept dense;
# sparser ones get a cached CSR copy for batch evaluation.
_SPARSE_DENSITY = 0.25
_SPARSE_MIN_SIZE = 64 * 64


class ShapeError(ValueError):
    """Dimension mismatch in a network structure or evaluation call."""


class ParameterError(ValueError):
    """A builder precondition was violated."""


class ParseError(ValueError):
    """Malformed serialized network."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class SizeBudget:
    """Width/depth budget a constructed network is guaranteed to satisfy."""

    max_width: int
    max_depth: int


class Layer:
    """One affine map plus per-neuron activation tags."""

    __slots__ = ("weights", "bias", "acts", "_sparse")

    def __init__(self, weights, bias, acts):
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.bias = np.asarray(bias, dtype=float)
        self.acts = np.asarray(acts, dtype=np.int8)
        if self.weights.ndim != 2:
            raise ShapeError("layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias length {self.bias.shape} does not match weight rows {self.weights.shape[0]}"
            )
        if self.acts.shape != (self.weights.shape[0],):
            raise ShapeError("one activation tag per neuron required")
        if not np.isin(self.acts, (IDENTITY, RELU, RELU2)).all():
            raise ShapeError(f"unknown activation codes in {set(self.acts.tolist())}")
        self._sparse = None

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def _matvec(self, batch: np.ndarray) -> np.ndarray:
        """batch @ W.T + b, via a cached sparse matrix when worthwhile."""
        w = self.weights
        if self._sparse is None:
            if w.size >= _SPARSE_MIN_SIZE and np.count_nonzero(w) < _SPARSE_DENSITY * w.size:
                from scipy.sparse import csr_matrix

                self._sparse = csr_matrix(w)
            else:
                self._sparse = False
        if self._sparse is False:
            return batch @ w.T + self.bias
        return (self._sparse @ batch.T).T + self.bias


class Network:
    """Layered feed-forward model; the last layer must be all-identity."""

    def __init__(self, input_dim: int, layers: list[Layer], metadata: str = ""):
        if input_dim < 1:
            raise ShapeError("input_dim must be positive")
        if not layers:
            raise ShapeError("a network needs at least its affine output layer")
        expect = input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != expect:
                raise ShapeError(
                    f"layer {i} expects {layer.in_dim} inputs, previous provides {expect}"
                )
            expect = layer.out_dim
        if not (layers[-1].acts == IDENTITY).all():
            raise ShapeError("output layer must be affine (identity activations)")
        self.input_dim = int(input_dim)
        self.layers = list(layers)
        self.metadata = metadata

    # -- structural quantities -------------------------------------------------

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layers) - 1

    @property
    def width(self) -> int:
        """Maximum hidden-layer size (0 for a purely affine network)."""
        return max((l.out_dim for l in self.layers[:-1]), default=0)

    @property
    def is_relu_only(self) -> bool:
        return not any((l.acts == RELU2).any() for l in self.layers)

    def check_budget(self, budget: SizeBudget) -> None:
        if self.width > budget.max_width or self.depth > budget.max_depth:
            raise AssertionError(
                f"construction exceeded its budget: width {self.width} vs "
                f"{budget.max_width}, depth {self.depth} vs {budget.max_depth}"
            )

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, x) -> np.ndarray:
        """Forward pass; accepts a point (d,) or a batch (n, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = np.atleast_2d(x)
        if batch.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} inputs, got {batch.shape[1]}")
        for layer in self.layers:
            z = layer._matvec(batch)
            batch = _activate(z, layer.acts)
        return batch[0] if single else batch

    __call__ = evaluate

    def jacobian(self, x) -> np.ndarray:
        """Exact a.e. Jacobian via forward-mode, (out, d) or (n, out, d).

        The a.e. convention relu'(0) = 0 applies; callers sampling derivatives
        should jitter away from first-layer breakpoints.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = np.atleast_2d(x)
        if batch.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} inputs, got {batch.shape[1]}")
        n, d = batch.shape
        tang = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        for layer in self.layers:
            z = layer._matvec(batch)
            tang = np.matmul(layer.weights, tang)
            batch, dfac = _activate_with_slope(z, layer.acts)
            if dfac is not None:
                tang *= dfac[:, :, None]
        return tang[0] if single else tang

    def jet(self, x, direction, order: int) -> list[np.ndarray]:
        """Directional derivatives [f, D_v f, ..., D_v^order f] along v.

        Forward-mode Taylor propagation; supports order <= 3, which covers
        ReLU^2 networks up to their third a.e. derivatives.
        """
        if not 0 <= order <= 3:
            raise ParameterError("jet propagation supports orders 0..3")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = np.atleast_2d(x)
        if batch.shape[1] != self.input_dim:
            raise ShapeError(f"expected {self.input_dim} inputs, got {batch.shape[1]}")
        v = np.asarray(direction, dtype=float)
        if v.shape != (self.input_dim,):
            raise ShapeError("direction must match input_dim")
        n = batch.shape[0]
        jets = [batch] + [np.zeros_like(batch) for _ in range(order)]
        if order >= 1:
            jets[1] = np.broadcast_to(v, batch.shape).copy()
        for layer in self.layers:
            z = [layer._matvec(jets[0])]
            for k in range(1, order + 1):
                z.append(jets[k] @ layer.weights.T)
            jets = _activate_jets(z, layer.acts)
        return [j[0] for j in jets] if single else jets

    # -- serialization -----------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "input_dim": self.input_dim,
            "layers": [
                {
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                    "activations": [_ACT_NAMES[int(a)] for a in layer.acts],
                }
                for layer in self.layers
            ],
            "metadata": self.metadata,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Network":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at offset {e.pos}: {e.msg}", offset=e.pos) from e
        try:
            layers = [
                Layer(
                    np.asarray(spec["weights"], dtype=float),
                    spec["bias"],
                    [_ACT_CODES[name] for name in spec["activations"]],
                )
                for spec in doc["layers"]
            ]
            return cls(doc["input_dim"], layers, doc.get("metadata", ""))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"malformed network document: {e}") from e


def _activate(z: np.ndarray, acts: np.ndarray) -> np.ndarray:
    if (acts == IDENTITY).all():
        return z
    out = z.copy()
    relu_cols = acts == RELU
    if relu_cols.any():
        out[:, relu_cols] = np.maximum(out[:, relu_cols], 0.0)
    sq_cols = acts == RELU2
    if sq_cols.any():
        r = np.maximum(out[:, sq_cols], 0.0)
        out[:, sq_cols] = r * r
    return out


def _activate_with_slope(z, acts):
    """Activation values plus per-neuron a.e. derivative factors."""
    if (acts == IDENTITY).all():
        return z, None
    out = z.copy()
    dfac = np.ones_like(z)
    relu_cols = acts == RELU
    if relu_cols.any():
        pos = out[:, relu_cols] > 0.0
        out[:, relu_cols] = np.where(pos, out[:, relu_cols], 0.0)
        dfac[:, relu_cols] = pos
    sq_cols = acts == RELU2
    if sq_cols.any():
        r = np.maximum(out[:, sq_cols], 0.0)
        out[:, sq_cols] = r * r
        dfac[:, sq_cols] = 2.0 * r
    return out, dfac


def _activate_jets(z: list[np.ndarray], acts: np.ndarray) -> list[np.ndarray]:
    order = len(z) - 1
    if (acts == IDENTITY).all():
        return z
    out = [zi.copy() for zi in z]
    relu_cols = acts == RELU
    if relu_cols.any():
        mask = out[0][:, relu_cols] > 0.0
        out[0][:, relu_cols] = np.where(mask, out[0][:, relu_cols], 0.0)
        for k in range(1, order + 1):
            out[k][:, relu_cols] *= mask
    sq_cols = acts == RELU2
    if sq_cols.any():
        mask = z[0][:, sq_cols] > 0.0
        u = [np.where(mask, z[0][:, sq_cols], 0.0)]
        for k in range(1, order + 1):
            u.append(z[k][:, sq_cols] * mask)
        out[0][:, sq_cols] = u[0] * u[0]
        if order >= 1:
            out[1][:, sq_cols] = 2.0 * u[0] * u[1]
        if order >= 2:
            out[2][:, sq_cols] = 2.0 * (u[0] * u[2] + u[1] * u[1])
        if order >= 3:
            out[3][:, sq_cols] = 2.0 * (u[0] * u[3] + 3.0 * u[1] * u[2])
    return out


# -- combinators ------------------------------------------------------------------


def affine_network(matrix, bias=None, metadata: str = "affine") -> Network:
    """Depth-0 network computing x -> A x + c."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    c = np.zeros(a.shape[0]) if bias is None else np.asarray(bias, dtype=float)
    return Network(a.shape[1], [Layer(a, c, [IDENTITY] * a.shape[0])], metadata)


def precompose_affine(net: Network, matrix, bias=None) -> Network:
    """net(A x + c) with the affine map fused into the first layer."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    c = np.zeros(a.shape[0]) if bias is None else np.asarray(bias, dtype=float)
    if a.shape[0] != net.input_dim:
        raise ShapeError("affine map output does not match network input")
    first = net.layers[0]
    fused = Layer(first.weights @ a, first.weights @ c + first.bias, first.acts)
    return Network(a.shape[1], [fused] + net.layers[1:], net.metadata)


def postcompose_affine(net: Network, matrix, bias=None) -> Network:
    """A net(x) + c with the affine map fused into the output layer."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    c = np.zeros(a.shape[0]) if bias is None else np.asarray(bias, dtype=float)
    if a.shape[1] != net.output_dim:
        raise ShapeError("affine map input does not match network output")
    last = net.layers[-1]
    fused = Layer(a @ last.weights, a @ last.bias + c, [IDENTITY] * a.shape[0])
    return Network(net.input_dim, net.layers[:-1] + [fused], net.metadata)


def stack(a: Network, b: Network) -> Network:
    """Composition b(a(x)).

    a's output affine map is merged into b's first layer, so no hidden layer
    is added at the junction and depth(stack) = depth(a) + depth(b) exactly.
    """
    if a.output_dim != b.input_dim:
        raise ShapeError(
            f"cannot stack: first network outputs {a.output_dim}, second expects {b.input_dim}"
        )
    a_out = a.layers[-1]
    b_first = b.layers[0]
    fused = Layer(
        b_first.weights @ a_out.weights,
        b_first.weights @ a_out.bias + b_first.bias,
        b_first.acts,
    )
    layers = a.layers[:-1] + [fused] + b.layers[1:]
    return Network(a.input_dim, layers, f"{a.metadata}>>{b.metadata}")


def pad_identity(d: int, depth: int, kind: str = "relu") -> Network:
    """Exact identity on R^d with `depth` hidden layers of 2d ReLU neurons.

    Realizes x = relu(x) - relu(-x) per hidden layer; valid inside both the
    ReLU-only and the ReLU/ReLU^2 network families (`kind` is a label only).
    """
    if depth < 1:
        raise ParameterError("identity padding needs depth >= 1")
    if kind not in ("relu", "relu2"):
        raise ParameterError(f"unknown activation family {kind!r}")
    eye = np.eye(d)
    first = Layer(np.vstack([eye, -eye]), np.zeros(2 * d), [RELU] * (2 * d))
    recombine = np.hstack([eye, -eye])
    mid = Layer(
        np.vstack([recombine, -recombine]), np.zeros(2 * d), [RELU] * (2 * d)
    )
    out = Layer(recombine, np.zeros(d), [IDENTITY] * d)
    return Network(d, [first] + [mid] * (depth - 1) + [out], f"id{d}x{depth}")


def relu_carry(d: int, depth: int) -> Network:
    """Pass-through for nonnegative signals: one ReLU channel per coordinate.

    Agrees with the identity only on [0, inf)^d; half the width of
    pad_identity, used where the carried values are known nonnegative.
    """
    if depth < 1:
        raise ParameterError("carry needs depth >= 1")
    eye = np.eye(d)
    hidden = Layer(eye, np.zeros(d), [RELU] * d)
    out = Layer(eye, np.zeros(d), [IDENTITY] * d)
    return Network(d, [hidden] * depth + [out], f"carry{d}x{depth}")


def parallel(nets: list[Network], slices=None, metadata: str = "parallel") -> Network:
    """Side-by-side combination; outputs are concatenated.

    With `slices=None` every component reads the full (shared) input, which
    must then agree across components.  Otherwise `slices[k]` lists the input
    coordinates routed to component k, and the joint input dimension is the
    largest index mentioned plus one.  Components of unequal depth are
    equalized by appending identity padding before merging.
    """
    if not nets:
        raise ShapeError("parallel needs at least one network")
    if slices is None:
        d_in = nets[0].input_dim
        if any(n.input_dim != d_in for n in nets):
            raise ShapeError("shared-input parallel requires equal input dims")
        slices = [list(range(d_in))] * len(nets)
    else:
        if len(slices) != len(nets):
            raise ShapeError("one input slice per component required")
        slices = [list(map(int, s)) for s in slices]
        for net, sl in zip(nets, slices):
            if net.input_dim != len(sl):
                raise ShapeError("slice length must match component input dim")
        d_in = max(max(s) for s in slices) + 1

    target = max(n.depth for n in nets)
    padded = []
    for net in nets:
        if net.depth < target:
            net = stack(net, pad_identity(net.output_dim, target - net.depth))
        padded.append(net)

    layers = []
    for j in range(target + 1):
        rows = sum(n.layers[j].out_dim for n in padded)
        cols = d_in if j == 0 else sum(n.layers[j].in_dim for n in padded)
        w = np.zeros((rows, cols))
        b = np.zeros(rows)
        acts = np.zeros(rows, dtype=np.int8)
        r0 = 0
        c0 = 0
        for net, sl in zip(padded, slices):
            lay = net.layers[j]
            if j == 0:
                w[r0 : r0 + lay.out_dim, sl] = lay.weights
            else:
                w[r0 : r0 + lay.out_dim, c0 : c0 + lay.in_dim] = lay.weights
                c0 += lay.in_dim
            b[r0 : r0 + lay.out_dim] = lay.bias
            acts[r0 : r0 + lay.out_dim] = lay.acts
            r0 += lay.out_dim
        layers.append(Layer(w, b, acts))
    return Network(d_in, layers, metadata)
