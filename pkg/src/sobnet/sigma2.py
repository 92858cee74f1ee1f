"""Exact polynomial networks from ReLU / ReLU^2 neurons.

Squares and pairwise products are exact with a single hidden layer, using
relu(t)^2 + relu(-t)^2 = t^2.  Monomials chain product gadgets: N gadgets per
layer extend running chains by fresh coordinate copies, and a dyadic tree
merges the chains.  Polynomials arrange monomial blocks in an a x b grid that
shares one set of coordinate-identity channels per column and accumulates the
terms in a two-neuron running-sum channel.
"""
from __future__ import annotations

import math

import numpy as np

from .indices import MultiIndex
from .network import (
    IDENTITY,
    RELU,
    RELU2,
    Layer,
    Network,
    ParameterError,
    SizeBudget,
    affine_network,
)


def build_exact_square() -> Network:
    """x^2 on all of R: one hidden layer, two ReLU^2 neurons."""
    hidden = Layer(np.array([[1.0], [-1.0]]), np.zeros(2), [RELU2, RELU2])
    out = Layer(np.array([[1.0, 1.0]]), [0.0], [IDENTITY])
    return Network(1, [hidden, out], "exact_square")


def build_exact_product2() -> Network:
    """xy = ((x+y)^2 - (x-y)^2)/4 on all of R^2: one hidden layer, 4 neurons."""
    w = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    hidden = Layer(w, np.zeros(4), [RELU2] * 4)
    out = Layer(np.array([[0.25, 0.25, -0.25, -0.25]]), [0.0], [IDENTITY])
    return Network(2, [hidden, out], "exact_product2")


class _Assembler:
    """Layer-by-layer builder with named channels.

    Channels are either neurons of the previous layer or registered linear
    combinations of them (virtual channels), so carried signed values and
    product-gadget outputs can be referenced by name while the explicit
    weight matrices are filled in mechanically.
    """

    def __init__(self, input_names):
        self.input_dim = len(input_names)
        self.layers: list[Layer] = []
        # symbol -> ({column: coeff}, bias) over the previous layer's outputs
        self.symbols = {name: ({i: 1.0}, 0.0) for i, name in enumerate(input_names)}
        self._pending = []  # (name, combo dict, bias, act)

    def _expand(self, combo, bias):
        cols: dict[int, float] = {}
        total_bias = float(bias)
        for sym, coeff in combo.items():
            base, sym_bias = self.symbols[sym]
            total_bias += coeff * sym_bias
            for col, c in base.items():
                cols[col] = cols.get(col, 0.0) + coeff * c
        return cols, total_bias

    def neuron(self, name, combo, bias, act):
        self._pending.append((name, dict(combo), float(bias), act))

    def close_layer(self):
        in_dim = self.layers[-1].out_dim if self.layers else self.input_dim
        rows = len(self._pending)
        w = np.zeros((rows, in_dim))
        b = np.zeros(rows)
        acts = np.zeros(rows, dtype=np.int8)
        for r, (_, combo, bias, act) in enumerate(self._pending):
            cols, total = self._expand(combo, bias)
            for col, c in cols.items():
                w[r, col] = c
            b[r] = total
            acts[r] = act
        self.layers.append(Layer(w, b, acts))
        self.symbols = {
            name: ({r: 1.0}, 0.0) for r, (name, _, _, _) in enumerate(self._pending)
        }
        self._pending = []

    def register(self, name, combo, bias=0.0):
        """Name an affine combination of the current layer's channels."""
        self.symbols[name] = self._expand(combo, bias)

    def finish(self, combo, bias=0.0, metadata="") -> Network:
        cols, total = self._expand(combo, bias)
        in_dim = self.layers[-1].out_dim if self.layers else self.input_dim
        w = np.zeros((1, in_dim))
        for col, c in cols.items():
            w[0, col] = c
        self.layers.append(Layer(w, [total], [IDENTITY]))
        return Network(self.input_dim, self.layers, metadata)


def _emit_gadget(asm: _Assembler, name: str, u: dict, v: dict, u_bias=0.0, v_bias=0.0):
    """Four ReLU^2 neurons computing u*v; afterwards `name` refers to it."""
    plus = {k: u.get(k, 0.0) + v.get(k, 0.0) for k in set(u) | set(v)}
    minus = {k: u.get(k, 0.0) - v.get(k, 0.0) for k in set(u) | set(v)}
    asm.neuron(f"{name}+a", plus, u_bias + v_bias, RELU2)
    asm.neuron(f"{name}+b", {k: -c for k, c in plus.items()}, -(u_bias + v_bias), RELU2)
    asm.neuron(f"{name}-a", minus, u_bias - v_bias, RELU2)
    asm.neuron(f"{name}-b", {k: -c for k, c in minus.items()}, -(u_bias - v_bias), RELU2)
    return name


def _register_gadget(asm: _Assembler, name: str):
    asm.register(
        name,
        {f"{name}+a": 0.25, f"{name}+b": 0.25, f"{name}-a": -0.25, f"{name}-b": -0.25},
    )


def _emit_carry(asm: _Assembler, name: str, src: dict, bias=0.0):
    """Two ReLU neurons carrying a signed value to the next layer."""
    asm.neuron(f"{name}+", src, bias, RELU)
    asm.neuron(f"{name}-", {k: -c for k, c in src.items()}, -bias, RELU)
    return name


def _register_carry(asm: _Assembler, name: str):
    asm.register(name, {f"{name}+": 1.0, f"{name}-": -1.0})


class _MonomialBlock:
    """Schedules the product chain for one monomial inside an assembler.

    Each advance() call contributes this block's neurons for one layer:
    up to `N` product gadgets extending chains by fresh coordinate copies,
    then a pairwise merge tree.  `done` exposes the symbol holding x^alpha
    once the chain has collapsed to a single value.
    """

    def __init__(self, tag: str, alpha: MultiIndex, N: int):
        self.tag = tag
        self.n_gadgets = N
        self.fresh = []
        for j, a in enumerate(alpha):
            self.fresh.extend([j] * a)
        self.chains: list[str] = []
        self.started = False
        self._count = 0
        self.done: str | None = None
        if len(self.fresh) == 0:
            self.done = "__one__"
        elif len(self.fresh) == 1:
            self.done = f"x{self.fresh[0]}"

    def needs_fresh(self) -> bool:
        return bool(self.fresh)

    def _next_name(self):
        self._count += 1
        return f"{self.tag}p{self._count}"

    def emit(self, asm: _Assembler):
        """Queue this block's neurons for the layer being assembled."""
        if self.done:
            return []
        emitted = []
        new_chains = []
        n_slots = self.n_gadgets
        if not self.started:
            # open chains on pairs of fresh copies
            while n_slots > 0 and len(self.fresh) >= 2:
                u, v = self.fresh.pop(0), self.fresh.pop(0)
                name = self._next_name()
                _emit_gadget(asm, name, {f"x{u}": 1.0}, {f"x{v}": 1.0})
                emitted.append(("gadget", name))
                new_chains.append(name)
                n_slots -= 1
            self.started = True
        elif self.fresh:
            # extend chains by one fresh copy each while slots and copies last
            for chain in self.chains:
                if n_slots > 0 and self.fresh:
                    u = self.fresh.pop(0)
                    name = self._next_name()
                    _emit_gadget(asm, name, {chain: 1.0}, {f"x{u}": 1.0})
                    emitted.append(("gadget", name))
                    new_chains.append(name)
                    n_slots -= 1
                else:
                    _emit_carry(asm, chain + "c", {chain: 1.0})
                    emitted.append(("carry", chain + "c"))
                    new_chains.append(chain + "c")
        else:
            # merge tree; odd chain carried
            items = list(self.chains)
            while len(items) >= 2 and n_slots > 0:
                u, v = items.pop(0), items.pop(0)
                name = self._next_name()
                _emit_gadget(asm, name, {u: 1.0}, {v: 1.0})
                emitted.append(("gadget", name))
                new_chains.append(name)
                n_slots -= 1
            for leftover in items:
                _emit_carry(asm, leftover + "c", {leftover: 1.0})
                emitted.append(("carry", leftover + "c"))
                new_chains.append(leftover + "c")
        self.chains = new_chains
        self._emitted = emitted
        return emitted

    def commit(self, asm: _Assembler):
        """Register symbols for the neurons queued by emit()."""
        for kind, name in getattr(self, "_emitted", []):
            if kind == "gadget":
                _register_gadget(asm, name)
            else:
                _register_carry(asm, name)
        self._emitted = []
        if self.done is None and self.started and not self.fresh and len(self.chains) == 1:
            self.done = self.chains[0]

    def result_combo(self):
        if self.done == "__one__":
            return {}, 1.0
        return {self.done: 1.0}, 0.0


def _run_blocks(asm: _Assembler, blocks: list[_MonomialBlock], d: int, max_depth: int):
    """Drive monomial blocks layer by layer, sharing coordinate carries."""
    depth = 0
    while any(b.done is None for b in blocks):
        if depth >= max_depth:
            raise AssertionError("monomial scheduling exceeded its depth budget")
        need_x = any(b.needs_fresh() for b in blocks)
        for b in blocks:
            b.emit(asm)
        if need_x:
            for j in range(d):
                _emit_carry(asm, f"x{j}c", {f"x{j}": 1.0})
        asm.close_layer()
        for b in blocks:
            b.commit(asm)
        if need_x:
            for j in range(d):
                _register_carry(asm, f"x{j}c")
                asm.register(f"x{j}", {f"x{j}c": 1.0})
        depth += 1
    return depth


def build_exact_monomial_sigma2(N: int, L: int, alpha) -> tuple[Network, SizeBudget]:
    """x^alpha exactly on R^d with width <= 4N + 2d, depth <= L + ceil(log2 N).

    Requires N*L + 2^floor(log2 N) >= |alpha|.
    """
    if not isinstance(alpha, MultiIndex):
        alpha = MultiIndex(tuple(int(a) for a in alpha))
    if N < 1 or L < 1:
        raise ParameterError("N and L must be positive integers")
    cap = N * L + 2 ** int(math.floor(math.log2(N)))
    if cap < alpha.order:
        raise ParameterError(
            f"need N*L + 2^floor(log2 N) >= |alpha|: {cap} < {alpha.order}"
        )
    d = alpha.dim
    tree_depth = math.ceil(math.log2(N)) if N > 1 else 0
    budget = SizeBudget(max_width=4 * N + 2 * d, max_depth=L + tree_depth)
    if alpha.order == 0:
        return affine_network(np.zeros((1, d)), [1.0], metadata="monomial_one"), budget
    if alpha.order == 1:
        j = next(i for i, a in enumerate(alpha) if a)
        row = np.zeros((1, d))
        row[0, j] = 1.0
        return affine_network(row, metadata=f"monomial_x{j}"), budget

    asm = _Assembler([f"x{j}" for j in range(d)])
    block = _MonomialBlock("m", alpha, N)
    _run_blocks(asm, [block], d, budget.max_depth)
    combo, bias = block.result_combo()
    net = asm.finish(combo, bias, metadata=f"exact_monomial({alpha.components},N={N},L={L})")
    net.check_budget(budget)
    return net, budget


def build_exact_polynomial_sigma2(
    N: int, L: int, a: int, b: int, terms
) -> tuple[Network, SizeBudget]:
    """P(x) = sum_j c_j x^alpha_j exactly on R^d.

    Width <= 4*N*a + 2d + 2 and depth <= L, for ab >= J terms and
    (L - 2b - b*log2 N) * N >= b * max_j |alpha_j|.  Terms of degree <= 1
    fold into the running sum without consuming a grid block.
    """
    if N < 1 or L < 1 or a < 1 or b < 1:
        raise ParameterError("N, L, a, b must be positive integers")
    terms = [(float(c), al if isinstance(al, MultiIndex) else MultiIndex(tuple(al))) for c, al in terms]
    if not terms:
        raise ParameterError("polynomial needs at least one term")
    d = terms[0][1].dim
    if any(al.dim != d for _, al in terms):
        raise ParameterError("all multi-indices must share the dimension")
    j_terms = len(terms)
    if a * b < j_terms:
        raise ParameterError(f"need a*b >= J: {a}*{b} < {j_terms}")
    budget = SizeBudget(max_width=4 * N * a + 2 * d + 2, max_depth=L)

    affine_terms = [(c, al) for c, al in terms if al.order <= 1]
    grid_terms = [(c, al) for c, al in terms if al.order > 1]

    # constant + linear part of the running sum
    lin = np.zeros(d)
    const = 0.0
    for c, al in affine_terms:
        if al.order == 0:
            const += c
        else:
            j = next(i for i, v in enumerate(al) if v)
            lin[j] += c
    if not grid_terms:
        return (
            affine_network(lin.reshape(1, d), [const], metadata="exact_polynomial_affine"),
            budget,
        )
    max_deg = max(al.order for _, al in grid_terms)
    if (L - 2 * b - b * math.log2(N)) * N < b * max_deg:
        raise ParameterError(
            f"need (L - 2b - b log2 N) N >= b max|alpha|: "
            f"({L} - {2 * b} - {b}*log2({N}))*{N} < {b * max_deg}"
        )

    columns = [grid_terms[c0 : c0 + a] for c0 in range(0, len(grid_terms), a)]
    asm = _Assembler([f"x{j}" for j in range(d)])
    sum_combo = {f"x{j}": lin[j] for j in range(d) if lin[j]}
    sum_bias = const
    sum_live = False  # becomes a carried channel once the first column closes
    depth = 0
    for col, col_terms in enumerate(columns):
        blocks = [_MonomialBlock(f"c{col}t{t}", al, N) for t, (_, al) in enumerate(col_terms)]
        while any(blk.done is None for blk in blocks):
            if depth >= L:
                raise AssertionError("polynomial grid exceeded its depth budget")
            for blk in blocks:
                blk.emit(asm)
            for j in range(d):
                _emit_carry(asm, f"x{j}c", {f"x{j}": 1.0})
            if sum_live or sum_combo or sum_bias:
                _emit_carry(asm, "sumc", dict(sum_combo), sum_bias)
            asm.close_layer()
            depth += 1
            for blk in blocks:
                blk.commit(asm)
            for j in range(d):
                _register_carry(asm, f"x{j}c")
                asm.register(f"x{j}", {f"x{j}c": 1.0})
            if sum_live or sum_combo or sum_bias:
                _register_carry(asm, "sumc")
                sum_combo, sum_bias = {"sumc": 1.0}, 0.0
                sum_live = True
        # fold the column's monomials into the running sum
        for (c, _), blk in zip(col_terms, blocks):
            combo, bias = blk.result_combo()
            for sym, coeff in combo.items():
                sum_combo[sym] = sum_combo.get(sym, 0.0) + c * coeff
            sum_bias += c * bias
    net = asm.finish(sum_combo, sum_bias, metadata=f"exact_polynomial(J={j_terms},N={N},L={L},a={a},b={b})")
    net.check_budget(budget)
    return net, budget
