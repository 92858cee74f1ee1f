"""Step-function networks and point-matching networks.

Both come in two modes:

* ``direct`` -- shallow constructions that hit their defining property to
  float64 exactness (zero error at the plateau points / integer nodes), at
  the cost of width proportional to the number of pieces.
* ``budget`` -- constructions meeting the width/depth formulas
  4*floor(N^(1/d)) + 3 x (4L + 5) for steps and
  16 s (N+1) log2(8N) x (5L+2) log2(4L) for point matching, built from
  radix digit extraction resp. grouped dyadic encoding with exact bit
  peeling.  Quantization lives inside float64, which caps encodings at 48
  bits; parameters outside that envelope raise ParameterError.

Exactness rests on two floating-point facts used throughout: relu(h) is
exactly zero for h <= 0, and multiplication by a power of two is exact.  A
staircase step therefore uses one hinge neuron relu(x - a) followed by one
saturator relu(1 - 2^t * hinge); both plateau sides land on exact zeros of
some neuron, making the plateau values exact integers.
"""
from __future__ import annotations

import math

import numpy as np

from .network import (
    IDENTITY,
    RELU,
    Layer,
    Network,
    ParameterError,
    SizeBudget,
    affine_network,
    parallel,
    relu_carry,
    stack,
)


def int_root_floor(n: int, d: int) -> int:
    """Largest m with m**d <= n, computed in integer arithmetic."""
    if n < 1:
        raise ParameterError("n must be positive")
    m = int(round(n ** (1.0 / d)))
    while m**d > n:
        m -= 1
    while (m + 1) ** d <= n:
        m += 1
    return m


def step_partition(N: int, L: int, d: int) -> int:
    """K = floor(N^(1/d))^2 * floor(L^(2/d))."""
    return int_root_floor(N, d) ** 2 * int_root_floor(L * L, d)


def _anchor(p: float, tpow: int) -> float:
    """Largest float a with (p - a) * 2^tpow >= 1 in float64 arithmetic.

    Guarantees the saturator relu(1 - 2^tpow * relu(x - a)) is exactly zero
    for every float x >= p.
    """
    a = p - 2.0**-tpow
    while not ((p - a) * 2.0**tpow >= 1.0):
        a = np.nextafter(a, -np.inf)
    return a


def _exact_staircase(breaks, gap: float, lo_frac: float = 0.0) -> Network:
    """Counting staircase x -> #{j : x >= c_j}, exact on both plateau sides.

    Ramps live inside (c_j - gap, c_j - lo_frac * gap); for lo_frac > 0 the
    output is exactly saturated already at c_j - lo_frac * gap, giving slack
    against float drift in composed inputs.
    """
    breaks = np.asarray(breaks, dtype=float)
    b = len(breaks)
    if b == 0:
        return affine_network(np.zeros((1, 1)), metadata="staircase0")
    avail = gap * (1.0 - lo_frac)
    tpow = max(1, math.ceil(-math.log2(avail)) + 1)
    anchors = np.empty(b)
    for j, c in enumerate(breaks):
        p = c - lo_frac * gap
        a = _anchor(p, tpow)
        if not a > c - gap:
            raise ParameterError("staircase gap too small for a float-exact ramp")
        anchors[j] = a
    hinge = Layer(np.ones((b, 1)), -anchors, [RELU] * b)
    sat = Layer(-(2.0**tpow) * np.eye(b), np.ones(b), [RELU] * b)
    out = Layer(-np.ones((1, b)), [float(b)], [IDENTITY])
    return Network(1, [hinge, sat, out], "staircase")


def _bump_layers(count: int):
    """Hinge + saturator + bump layers producing an exact one-hot over
    integer inputs 0..count-1 (a partition of unity in between)."""
    b = count - 1
    hinge = Layer(np.ones((b, 1)), -(np.arange(1, count) - 0.5), [RELU] * b)
    sat = Layer(-2.0 * np.eye(b), np.ones(b), [RELU] * b)
    w = np.zeros((count, b))
    bias = np.zeros(count)
    for p in range(count):
        if p < b:
            w[p, p] = -1.0
        else:
            bias[p] += 1.0
        if p >= 1:
            w[p, p - 1] = 1.0
    bump = Layer(w, bias, [RELU] * count)
    return [hinge, sat, bump]


def _exact_bump_lookup(values) -> Network:
    """x -> values[x] for integer x in 0..len(values)-1, float-exact there.

    Realized as sum_p values[p] * bump_p(x); between integers the bumps form
    a partition of unity, so the output interpolates and stays within
    [min(values), max(values)].  Constant outside the node range.
    """
    values = np.asarray(values, dtype=float)
    count = len(values)
    if count == 1:
        return affine_network(np.zeros((1, 1)), [values[0]], metadata="lookup1")
    layers = _bump_layers(count)
    out = Layer(values.reshape(1, count), [0.0], [IDENTITY])
    return Network(1, layers + [out], "bump_lookup")


def _exact_bump_onehot(count: int) -> Network:
    """x -> (bump_0(x), ..., bump_{count-1}(x)); exact one-hot at integers."""
    if count == 1:
        return affine_network(np.zeros((1, 1)), [1.0], metadata="onehot1")
    layers = _bump_layers(count)
    out = Layer(np.eye(count), np.zeros(count), [IDENTITY] * count)
    return Network(1, layers + [out], "bump_onehot")


# -- step networks ---------------------------------------------------------------


def build_step(N: int, L: int, d: int, delta: float, mode: str = "direct"):
    """One-dimensional staircase psi(x) = k on [k/K, (k+1)/K - delta*1_{k<K-1}].

    K = floor(N^(1/d))^2 * floor(L^(2/d)).  The plateau values are exact in
    float64 in both modes.
    """
    if N < 1 or L < 1 or d < 1:
        raise ParameterError("N, L, d must be positive integers")
    K = step_partition(N, L, d)
    if not 0.0 < delta <= 1.0 / (3 * K):
        raise ParameterError(f"delta must lie in (0, 1/(3K)] = (0, {1.0 / (3 * K)}], got {delta}")
    if mode not in ("direct", "budget"):
        raise ParameterError(f"unknown mode {mode!r}")

    if K == 1:
        net = affine_network(np.zeros((1, 1)), metadata=f"step(K=1,{mode})")
        budget = SizeBudget(1, 1)
        return net, budget

    if mode == "direct":
        breaks = np.arange(1, K) / K
        net = _exact_staircase(breaks, delta, lo_frac=0.0)
        net.metadata = f"step(K={K},direct)"
        budget = SizeBudget(max_width=2 * K + 1, max_depth=2)
        net.check_budget(budget)
        return net, budget

    return _build_step_budget(N, L, d, K, delta)


def _build_step_budget(N: int, L: int, d: int, K: int, delta: float):
    """Radix digit extraction: a chain of coarse-to-fine exact staircases.

    Stage j splits the remaining K_j cells into P_j groups of C_j cells
    (P_j <= 4*floor(N^(1/d)) + 2 pieces, so each stage fits the width
    budget) and hands the in-group residual to the next stage.  Residuals
    drift by a few ulp through the affine updates, so stages after the first
    saturate a quarter-gap early; delta must stay above ~1e-12 for that
    margin to dominate the drift.
    """
    if delta < 1e-12:
        raise ParameterError(
            "budget-mode step construction needs delta >= 1e-12 (float drift margin)"
        )
    M = int_root_floor(N, d)
    radix = 4 * M + 2

    plan = []  # (pieces P_j, group size C_j in cells)
    kc = K
    while kc > 1:
        c = math.ceil(kc / radix)
        p = math.ceil(kc / c)
        plan.append((p, c))
        kc = c

    net = None
    for j, (pieces, group) in enumerate(plan):
        breaks = np.array([(t * group) / K for t in range(1, pieces)])
        stair = _exact_staircase(breaks, delta, lo_frac=0.0 if j == 0 else 0.25)
        cellw = group / K
        if j == 0:
            # [x] -> [a_0, x] -> [r, A]
            stage = parallel([stair, relu_carry(1, stair.depth)], metadata="step_stage0")
            post = np.array([[-cellw, 1.0], [float(group), 0.0]])
            net = stack(stage, affine_network(post))
        else:
            # [r, A] -> [a_j, r, A] -> [r', A']
            stage = parallel(
                [stair, relu_carry(1, stair.depth), relu_carry(1, stair.depth)],
                slices=[[0], [0], [1]],
                metadata=f"step_stage{j}",
            )
            post = np.array([[-cellw, 1.0, 0.0], [float(group), 0.0, 1.0]])
            net = stack(net, stack(stage, affine_network(post)))
    # output the accumulated index
    net = stack(net, affine_network(np.array([[0.0, 1.0]])))
    net.metadata = f"step(K={K},budget,N={N},L={L},d={d})"
    budget = SizeBudget(max_width=4 * M + 3, max_depth=4 * L + 5)
    net.check_budget(budget)
    return net, budget


# -- point matching ----------------------------------------------------------------


def matcher_budget_formulas(N: int, L: int, s: int) -> tuple[float, float]:
    width = 16.0 * s * (N + 1) * math.log2(8.0 * N)
    depth = (5.0 * L + 2) * math.log2(4.0 * L)
    return width, depth


def build_point_matcher(N: int, L: int, s: int, xi, mode: str = "direct"):
    """Network with phi(i) matching xi[i] at integers i and 0 <= phi <= 1 on R.

    direct: exact lookup, |phi(i) - xi_i| = 0, width ~ len(xi).
    budget: |phi(i) - xi_i| <= N^(-2s) L^(-2s) within the paper-formula
    width/depth; values are quantized to m = ceil(2s log2(NL)) bits.
    """
    xi = np.asarray(xi, dtype=float)
    n = len(xi)
    if N < 1 or L < 1 or s < 1:
        raise ParameterError("N, L, s must be positive integers")
    if n < 1:
        raise ParameterError("need at least one target value")
    if n > N * N * L * L:
        raise ParameterError(f"got {n} values, limit N^2 L^2 = {N * N * L * L}")
    if xi.min() < 0.0 or xi.max() > 1.0:
        raise ParameterError("target values must lie in [0, 1]")
    if mode not in ("direct", "budget"):
        raise ParameterError(f"unknown mode {mode!r}")

    if mode == "direct":
        net = _exact_bump_lookup(xi)
        net.metadata = f"point_matcher(n={n},direct)"
        budget = SizeBudget(max_width=max(1, n), max_depth=3)
        net.check_budget(budget)
        return net, budget

    width_f, depth_f = matcher_budget_formulas(N, L, s)
    budget = SizeBudget(max_width=int(width_f), max_depth=int(depth_f))

    # Exact lookup already fits the formulas at moderate sizes; use it, since
    # it satisfies the accuracy contract with error 0.
    if n <= int(width_f) and 3 <= int(depth_f):
        net = _exact_bump_lookup(xi)
        net.metadata = f"point_matcher(n={n},budget:lookup)"
        net.check_budget(budget)
        return net, budget

    return _build_matcher_bits(N, L, s, xi, width_f, depth_f, budget)


def _quantize_bits(xi: np.ndarray, m: int) -> np.ndarray:
    """m-bit floor quantization; returns integer codes xi_hat * 2^m."""
    codes = np.floor(xi * 2.0**m).astype(np.int64)
    return np.minimum(codes, 2**m - 1)


def _build_matcher_bits(N, L, s, xi, width_f, depth_f, budget):
    """Grouped dyadic encoding with exact bit peeling.

    Values are packed G per group into one dyadic number of G*m bits; a bump
    lookup fetches the group code, and 2*G*m exact peeling layers walk its
    bits, accumulating the m bits of the window selected by the in-group
    offset via one-hot gates.
    """
    n = len(xi)
    eps = float(N) ** (-2 * s) * float(L) ** (-2 * s)
    m = max(1, math.ceil(math.log2(1.0 / eps)))
    if m > 48:
        raise ParameterError(
            f"quantization needs {m} bits; float64 weights support at most 48"
        )
    group = min(n, 48 // m, max(1, int((depth_f - 11) // (2 * m))))
    if group < 1:
        raise ParameterError("depth budget too small for bit peeling in float64")
    p_count = math.ceil(n / group)
    if p_count + 2 > width_f or group + 6 > width_f:
        raise ParameterError(
            f"point-matching parameters outside the float64 construction envelope "
            f"(need width {max(p_count + 2, group + 6)}, budget {width_f:.0f})"
        )

    codes = _quantize_bits(xi, m)
    gm = group * m
    z_vals = np.zeros(p_count)
    for p in range(p_count):
        zint = 0
        for r in range(group):
            i = p * group + r
            code = int(codes[i]) if i < n else 0
            zint |= code << (gm - (r + 1) * m)
        z_vals[p] = zint / 2.0**gm

    # stage 1: [x] -> [p, x] -> [p, q]
    stair_p = _exact_staircase(np.arange(1, p_count) * float(group), 0.5, 0.0)
    s1 = parallel([stair_p, relu_carry(1, stair_p.depth)], metadata="pm_split")
    s1 = stack(s1, affine_network(np.array([[1.0, 0.0], [-float(group), 1.0]])))

    # stage 2: [p, q] -> [z, q]
    lookup = _exact_bump_lookup(z_vals)
    s2 = parallel([lookup, relu_carry(1, lookup.depth)], slices=[[0], [1]], metadata="pm_lookup")

    # stage 3: [z, q] -> [z, Q_0..Q_{G-1}]
    onehot = _exact_bump_onehot(group)
    s3 = parallel([relu_carry(1, max(onehot.depth, 1)), onehot], slices=[[0], [1]], metadata="pm_gates")

    head = stack(stack(s1, s2), s3)
    peel = _peel_layers(group, m, gm)
    net = stack(head, peel)
    net.metadata = f"point_matcher(n={n},budget:bits,m={m},G={group})"
    net.check_budget(budget)
    return net, budget


def _peel_layers(group: int, m: int, gm: int) -> Network:
    """Input [y, Q_0..Q_{G-1}] -> clamped 2^-m * (window bits of y).

    Peel j consists of two layers: a hinge/saturator pair extracting the
    leading bit of the running value y, interleaved with the gated
    accumulator update for the previous peel.  All quantities are exact
    dyadics at integer matcher inputs.
    """
    g = group
    d_in = 1 + g
    tpow = gm + 1
    a_half = _anchor(0.5, tpow)
    big = 2.0 ** (m + 2)
    layers = []

    # Channel layouts:
    #   alpha layer: [m_bit, y, u1, u2, Q...]        (width g + 4)
    #   beta  layer: [n_bit, y, A,  Q...]            (width g + 3)
    def q_cols(base):
        return list(range(base, base + g))

    for j in range(1, gm + 1):
        r_j = (j - 1) // m
        if j == 1:
            # inputs [y, Q...]: m_bit = relu(y - a), carry y, A starts at 0
            w = np.zeros((2 + g, d_in))
            b = np.zeros(2 + g)
            w[0, 0], b[0] = 1.0, -a_half
            w[1, 0] = 1.0
            for r in range(g):
                w[2 + r, 1 + r] = 1.0
            layers.append(Layer(w, b, [RELU] * (2 + g)))
            # beta: [n_bit, y, A=0, Q...] from [m_bit, y, Q...]
            w = np.zeros((3 + g, 2 + g))
            b = np.zeros(3 + g)
            w[0, 0], b[0] = -(2.0**tpow), 1.0
            w[1, 1] = 1.0
            # row 2: A = relu(0)
            for r in range(g):
                w[3 + r, 2 + r] = 1.0
            layers.append(Layer(w, b, [RELU] * (3 + g)))
        else:
            # alpha layer for peel j, fed by beta of peel j-1:
            # inputs [n_prev, y_prev, A_prev, Q...]
            r_prev = (j - 2) // m
            w = np.zeros((4 + g, 3 + g))
            b = np.zeros(4 + g)
            # y_j = 2 y_prev + n_prev - 1
            w[0, 1], w[0, 0], b[0] = 2.0, 1.0, -1.0 - a_half  # m_bit = relu(y_j - a)
            w[1, 1], w[1, 0], b[1] = 2.0, 1.0, -1.0  # carry y_j
            # u1 = relu(2A + (1 - n_prev) - big*(1 - Q_{r_prev}))
            w[2, 2], w[2, 0], b[2] = 2.0, -1.0, 1.0 - big
            w[2, 3 + r_prev] = big
            # u2 = relu(A - big*(1 - sum_{r<r_prev} Q_r))
            w[3, 2], b[3] = 1.0, -big
            for r in range(r_prev):
                w[3, 3 + r] = big
            for r in range(g):
                w[4 + r, 3 + r] = 1.0
            layers.append(Layer(w, b, [RELU] * (4 + g)))
            # beta layer: [n_bit, y, A = u1 + u2, Q...]
            w = np.zeros((3 + g, 4 + g))
            b = np.zeros(3 + g)
            w[0, 0], b[0] = -(2.0**tpow), 1.0
            w[1, 1] = 1.0
            w[2, 2], w[2, 3] = 1.0, 1.0
            for r in range(g):
                w[3 + r, 4 + r] = 1.0
            layers.append(Layer(w, b, [RELU] * (3 + g)))

    # final gated update for peel gm, then clamp to [0, 1]
    r_last = (gm - 1) // m
    w = np.zeros((2, 3 + g))
    b = np.zeros(2)
    w[0, 2], w[0, 0], b[0] = 2.0, -1.0, 1.0 - big
    w[0, 3 + r_last] = big
    w[1, 2], b[1] = 1.0, -big
    for r in range(r_last):
        w[1, 3 + r] = big
    layers.append(Layer(w, b, [RELU, RELU]))
    # [u1, u2] -> [t1 = relu(phi - 1), c = relu(phi)] with phi = (u1+u2)/2^m
    sc = 2.0**-m
    w = np.array([[sc, sc], [sc, sc]])
    layers.append(Layer(w, [-1.0, 0.0], [RELU, RELU]))
    # out = relu(c - t1)
    layers.append(Layer(np.array([[-1.0, 1.0]]), [0.0], [RELU]))
    layers.append(Layer(np.eye(1), [0.0], [IDENTITY]))
    return Network(d_in, layers, "bit_peel")
