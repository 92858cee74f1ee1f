"""ReLU-network primitives: squaring, products, and monomials.

Each builder returns an explicit network together with the width/depth budget
it is guaranteed to satisfy and a closed-form error certificate on its stated
domain.  The certificates are the quantities the test suite re-derives
independently and checks measured errors against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .indices import MultiIndex
from .network import (
    IDENTITY,
    RELU,
    Layer,
    Network,
    ParameterError,
    SizeBudget,
    affine_network,
    parallel,
    postcompose_affine,
    precompose_affine,
    relu_carry,
    stack,
)

L_INF = "Linf"
W1_INF = "W1inf"
WN_INF = "Wninf"


@dataclass(frozen=True)
class BoundCertificate:
    """Closed-form error bound for a constructed network.

    `bound_value` is the guarantee on `domain` in the norm named by `norm`;
    `selfnorm_bound` bounds the network's own norm on the same domain.
    `extras` carries construction constants useful for reports.
    """

    norm: str
    domain: str
    bound_value: float
    formula: str
    selfnorm_bound: float | None = None
    extras: dict = field(default_factory=dict)


def teeth_parameter(n: int) -> int:
    """The unique k with (k-1)*2^(k-1) + 1 <= n <= k*2^k."""
    if n < 1:
        raise ParameterError("N must be a positive integer")
    k = 1
    while not ((k - 1) * 2 ** (k - 1) + 1 <= n <= k * 2**k):
        k += 1
        if k > 60:
            raise ParameterError(f"no teeth parameter found for N={n}")
    return k


def _hat(v: np.ndarray) -> np.ndarray:
    """Width-3 hat: 2v on [0, 1/2], 2(1-v) on [1/2, 1]. Exact on dyadics."""
    return np.where(v <= 0.5, 2.0 * v, 2.0 * (1.0 - v))


def _hinge_coeffs(values: np.ndarray, m: int):
    """Hinge decomposition of the PL interpolant of `values` on {j/m}.

    Returns (f(0), c) with f(y) = f(0) + sum_j c[j] * relu(y - j/m) for
    y in [0, 1].
    """
    slopes = (values[1:] - values[:-1]) * m
    return values[0], np.diff(slopes, prepend=0.0)


def build_sawtooth_square(N: int, L: int):
    """PL interpolant of x^2 on the dyadic grid {j/2^s}, s = 2*L*k.

    Composition of hat functions packs k teeth per hidden layer: each layer
    carries the running value T = x - sum_{i<=t} g_i / 4^i through one ReLU
    channel and exposes the 2^k hinges of the current tooth iterate, from
    which the next k iterates are affine combinations.

    Width <= 3N, depth 2L; sup error 2^(-2(s+1)), first-derivative error
    2^(-s), both <= N^(-L).
    """
    if N < 1 or L < 1:
        raise ParameterError("N and L must be positive integers")
    k = teeth_parameter(N)
    s = 2 * L * k
    m = 2**k
    grid = np.arange(m + 1) / m

    # g^{t} values on the per-layer grid, t = 1..k (exact dyadic arithmetic)
    iterates = []
    vals = grid.copy()
    for _ in range(k):
        vals = _hat(vals)
        iterates.append(vals.copy())
    tooth_coeffs = [_hinge_coeffs(v, m) for v in iterates]  # (f0, hinge coeffs)

    depth = 2 * L
    width = m + 1
    layers = []
    # Hidden layer 1: T-carry relu(x) and hinges relu(x - j/m).
    w = np.zeros((width, 1))
    b = np.zeros(width)
    w[:, 0] = 1.0
    b[1:] = -grid[:m]
    layers.append(Layer(w, b, [RELU] * width))

    def _advance_rows(layer_index: int):
        """Affine rows producing [T_next, y_next - grid] from post-activations."""
        w = np.zeros((width, width))
        b = np.zeros(width)
        # T update: subtract the k new scaled teeth, all functions of hinges.
        w[0, 0] = 1.0
        base = layer_index * k  # teeth 1..base already folded into T
        for t in range(1, k + 1):
            f0, coeffs = tooth_coeffs[t - 1]
            scale = 0.25 ** (base + t)
            b[0] -= f0 * scale
            w[0, 1:] -= coeffs * scale
        # y_next = g^{k}(y) from the same hinges; rows shifted by the grid.
        f0k, ck = tooth_coeffs[k - 1]
        for j in range(m):
            w[1 + j, 1:] = ck
            b[1 + j] = f0k - grid[j]
        return w, b

    for layer_index in range(1, depth):
        w, b = _advance_rows(layer_index - 1)
        layers.append(Layer(w, b, [RELU] * width))

    # Output: T after the last hidden layer minus the final k teeth.
    w = np.zeros((1, width))
    b = np.zeros(1)
    w[0, 0] = 1.0
    base = (depth - 1) * k
    for t in range(1, k + 1):
        f0, coeffs = tooth_coeffs[t - 1]
        scale = 0.25 ** (base + t)
        b[0] -= f0 * scale
        w[0, 1:] -= coeffs * scale
    layers.append(Layer(w, b, [IDENTITY]))

    net = Network(1, layers, f"sawtooth_square(N={N},L={L})")
    budget = SizeBudget(max_width=3 * N, max_depth=2 * L)
    net.check_budget(budget)
    cert = BoundCertificate(
        norm=W1_INF,
        domain="(0,1)",
        bound_value=float(N) ** (-L),
        formula="N^-L",
        selfnorm_bound=2.0,
        extras={"k": k, "s": s, "sup_bound": 2.0 ** (-2 * (s + 1)), "grad_bound": 2.0**-s},
    )
    return net, budget, cert


def build_product2(N: int, L: int):
    """xy on (0,1)^2 via 2(psi((x+y)/2) - psi(x/2) - psi(y/2)).

    psi is the sawtooth square; on the certified domain all three inner
    arguments are already nonnegative, so the absolute values in the algebraic
    identity reduce to pass-throughs and the three copies fit in width 9N.
    """
    psi, _, psi_cert = build_sawtooth_square(N, L)
    pre = np.array([[0.5, 0.5], [0.5, 0.0], [0.0, 0.5]])
    three = parallel(
        [precompose_affine(psi, pre[i : i + 1, :]) for i in range(3)],
        metadata="product2_core",
    )
    net = postcompose_affine(three, np.array([[2.0, -2.0, -2.0]]))
    net.metadata = f"product2(N={N},L={L})"
    budget = SizeBudget(max_width=9 * N, max_depth=2 * L)
    net.check_budget(budget)
    cert = BoundCertificate(
        norm=W1_INF,
        domain="(0,1)^2",
        bound_value=6.0 * float(N) ** (-L),
        formula="6 N^-L",
        selfnorm_bound=12.0,
        extras={"k": psi_cert.extras["k"], "s": psi_cert.extras["s"]},
    )
    return net, budget, cert


def build_product2_scaled(N: int, L: int, a: float, b: float):
    """xy on (a,b)^2 by affine pre/post-scaling of the unit-square product.

    phi(x,y) = (b-a)^2 psi((x-a)/(b-a), (y-a)/(b-a)) + a(x-a) + a(y-a) + a^2.
    The affine correction q = a(x-a) + a(y-a) is sign-definite on (a,b)^2
    (sign of a), so one extra ReLU channel carries it; width 9N + 1.
    """
    if not a < b:
        raise ParameterError(f"need a < b, got a={a}, b={b}")
    core, _, _ = build_product2(N, L)
    h = b - a
    pre = np.array([[1.0 / h, 0.0], [0.0, 1.0 / h]])
    shift = np.array([-a / h, -a / h])
    scaled_core = postcompose_affine(
        precompose_affine(core, pre, shift), np.array([[h * h]])
    )
    if a == 0.0:
        net = scaled_core
    else:
        sgn = 1.0 if a > 0 else -1.0
        # q-channel: relu(sgn * (a(x-a) + a(y-a))) carried through all layers
        q_row = sgn * np.array([a, a])
        q_bias = sgn * (-2 * a * a)
        carry = Network(
            2,
            [Layer(q_row.reshape(1, 2), [q_bias], [RELU])]
            + [Layer(np.eye(1), [0.0], [RELU])] * (scaled_core.depth - 1)
            + [Layer(np.eye(1) * sgn, [0.0], [IDENTITY])],
            "qcarry",
        )
        both = parallel([scaled_core, carry], metadata="product2_scaled_core")
        net = postcompose_affine(both, np.array([[1.0, 1.0]]), [a * a])
    net.metadata = f"product2_scaled(N={N},L={L},a={a},b={b})"
    budget = SizeBudget(max_width=9 * N + 1, max_depth=2 * L)
    net.check_budget(budget)
    cert = BoundCertificate(
        norm=W1_INF,
        domain=f"({a},{b})^2",
        bound_value=6.0 * h * h * float(N) ** (-L),
        formula="6 (b-a)^2 N^-L",
        selfnorm_bound=12.0 * h * h,
    )
    return net, budget, cert


def _chain_stage(running: Network, coord: int, total_inputs: int, pair_net: Network):
    """Extend a running product net by one factor through `pair_net`.

    `running` maps the full input to [P, carried coords...]; the stage feeds
    (P, x_coord) to the pair network and keeps carrying the remaining inputs.
    """
    d = total_inputs
    rest = list(range(coord + 1, d))
    carry_in = running.output_dim  # 1 + number of carried coords
    select = np.zeros((2, carry_in))
    select[0, 0] = 1.0
    select[1, 1] = 1.0  # carried coords follow P in order; next factor is first
    pair = precompose_affine(pair_net, select)
    if rest:
        keep = np.zeros((len(rest), carry_in))
        for r, _ in enumerate(rest):
            keep[r, 2 + r] = 1.0
        carry = stack(affine_network(keep), relu_carry(len(rest), pair_net.depth))
        stage = parallel([pair, carry], metadata="chain_stage")
    else:
        stage = pair
    return stack(running, stage)


def build_multiproduct(N: int, L: int, k: int):
    """x1 * x2 * ... * xk on (0,1)^k by chaining rescaled pair products.

    Each stage multiplies the running product (range (-0.1, 1.1)) with the
    next input through a pair net on (-0.1, 1.1)^2 of width 9(N+1)+1 and depth
    14kL; untouched inputs ride along through plain ReLU channels, which on
    (0,1) agree with the identity.
    """
    if k < 2:
        raise ParameterError(f"k-fold product needs k >= 2, got k={k}")
    if N < 1 or L < 1:
        raise ParameterError("N and L must be positive integers")
    pair, _, _ = build_product2_scaled(N + 1, 7 * k * L, -0.1, 1.1)

    d = k
    running = affine_network(np.eye(d), metadata="mp_seed")
    for i in range(k - 1):
        running = _chain_stage(running, i + 1, d, pair)
    net = running
    net.metadata = f"multiproduct(N={N},L={L},k={k})"
    budget = SizeBudget(max_width=9 * (N + 1) + k - 1, max_depth=14 * k * (k - 1) * L)
    net.check_budget(budget)
    cert = BoundCertificate(
        norm=W1_INF,
        domain="(0,1)^k",
        bound_value=10.0 * (k - 1) * float(N + 1) ** (-7 * k * L),
        formula="10 (k-1) (N+1)^(-7kL)",
        selfnorm_bound=18.0,
    )
    return net, budget, cert


def build_monomial_relu(N: int, L: int, alpha: MultiIndex, k: int):
    """x^alpha on [0,1]^d for |alpha| <= k, by duplicating coordinates into a
    product chain.

    Degrees 0 and 1 are affine and exact.  Higher degrees multiply the
    |alpha| actual factors; the pair nets use the cap k in their size
    parameters so the per-stage accuracy matches the k-budgeted certificate.
    """
    if not isinstance(alpha, MultiIndex):
        alpha = MultiIndex(tuple(int(a) for a in alpha))
    if alpha.order > k:
        raise ParameterError(f"|alpha| = {alpha.order} exceeds the cap k = {k}")
    if N < 1 or L < 1 or k < 1:
        raise ParameterError("N, L, k must be positive integers")
    d = alpha.dim
    budget = SizeBudget(max_width=9 * (N + 1) + k - 1, max_depth=14 * k * k * L)
    cert = BoundCertificate(
        norm=W1_INF,
        domain="[0,1]^d",
        bound_value=10.0 * k * float(N + 1) ** (-7 * k * L),
        formula="10 k (N+1)^(-7kL)",
        selfnorm_bound=18.0,
    )
    deg = alpha.order
    if deg == 0:
        net = affine_network(np.zeros((1, d)), [1.0], metadata=f"monomial({alpha.components})")
        return net, budget, cert
    if deg == 1:
        j = next(i for i, a in enumerate(alpha) if a == 1)
        row = np.zeros((1, d))
        row[0, j] = 1.0
        net = affine_network(row, metadata=f"monomial({alpha.components})")
        return net, budget, cert

    # duplication map L(x) = (x_1, ..., x_1, x_2, ...) with alpha_j copies each
    dup = np.zeros((deg, d))
    r = 0
    for j, a in enumerate(alpha):
        for _ in range(a):
            dup[r, j] = 1.0
            r += 1
    chain, _, _ = build_multiproduct(N, L, k) if deg == k else _multiproduct_capped(N, L, deg, k)
    net = precompose_affine(chain, dup)
    net.metadata = f"monomial_relu({alpha.components},N={N},L={L},k={k})"
    net.check_budget(budget)
    return net, budget, cert


def _multiproduct_capped(N: int, L: int, factors: int, cap: int):
    """Product of `factors` inputs with stage accuracy set by `cap`."""
    pair, _, _ = build_product2_scaled(N + 1, 7 * cap * L, -0.1, 1.1)
    d = factors
    running = affine_network(np.eye(d), metadata="mp_seed")
    for i in range(factors - 1):
        running = _chain_stage(running, i + 1, d, pair)
    budget = SizeBudget(max_width=9 * (N + 1) + factors - 1, max_depth=14 * cap * (factors - 1) * L)
    running.check_budget(budget)
    cert = BoundCertificate(
        norm=W1_INF,
        domain="(0,1)^k",
        bound_value=10.0 * (factors - 1) * float(N + 1) ** (-7 * cap * L),
        formula="10 (k-1) (N+1)^(-7 cap L)",
        selfnorm_bound=18.0,
    )
    return running, budget, cert
