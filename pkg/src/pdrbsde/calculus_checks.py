"""Independent verification machinery: change-of-variables and estimates.

The change-of-variables identity for ladlag semimartingales is checked as an
exact telescoping identity over state transitions: each instant carries a
left jump (driven by A) and a right jump (driven by B + M), each interval one
transition (driven by the interval parts of A and M).  There is no continuous
martingale part in the discrete model, so the bracket term is identically
zero and the interval transition's second-order correction lands in the
right-jump sum, which is its discrete stand-in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import values as v
from .drbsde import SolutionSeptuple
from .driver_solver import beta_norm_h2, beta_norm_m2, beta_norm_s2p
from .prob_space import FilteredSpace
from .processes import (
    IntegrandProcess,
    LadlagProcess,
    ProcessError,
    from_slots,
    p_sub,
)


# ---------------------------------------------------------------------------
# exact polynomials (rational-mode differentiation)


@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial as {exponent tuple: coefficient}."""

    n_vars: int
    coeffs: tuple

    @staticmethod
    def from_dict(n_vars: int, coeffs: dict) -> "Polynomial":
        items = tuple(sorted((tuple(e), c) for e, c in coeffs.items() if c != 0))
        return Polynomial(n_vars=n_vars, coeffs=items)

    def __call__(self, point: Sequence):
        total = 0
        for expo, c in self.coeffs:
            term = c
            for x, e in zip(point, expo):
                for _ in range(e):
                    term = term * x
            total = total + term
        return total

    def partial(self, i: int) -> "Polynomial":
        out: dict = {}
        for expo, c in self.coeffs:
            if expo[i] == 0:
                continue
            new = list(expo)
            new[i] -= 1
            key = tuple(new)
            out[key] = out.get(key, 0) + c * expo[i]
        return Polynomial.from_dict(self.n_vars, out)


# ---------------------------------------------------------------------------
# optional semimartingales by components


@dataclass(frozen=True)
class OptionalSemimartingale:
    """X = X_0 + M + A + B with the slot layout of the ladlag calculus.

    * M: left-continuous martingale part; ``m_interval[k]`` has zero mean
      given sigma_mid[k], ``m_jump[k]`` (its right jump at t_k) zero mean
      given sigma_minus[k].
    * A: right-continuous finite-variation part, A_0 = 0: signed left jumps
      ``a_jump[k]`` (a_jump[0] = 0) and signed interval increments.
    * B: left-continuous purely discontinuous finite-variation part, B_0 = 0:
      signed right jumps ``b_jump[k]``.
    """

    space: FilteredSpace
    x0: list
    m_interval: tuple   # length N
    m_jump: tuple       # length N (right jumps at instants 0..N-1)
    a_jump: tuple       # length N+1 (left jumps; index 0 must be zero)
    a_interval: tuple   # length N
    b_jump: tuple       # length N (right jumps at instants 0..N-1)

    def validate(self) -> None:
        from .prob_space import cond_expect, is_measurable

        space, n = self.space, self.space.n_steps
        if any(x != 0 for x in self.a_jump[0]):
            raise ProcessError("A_0 = 0 forces a vanishing left jump at instant 0")
        tol = 0 if space.mode == "rational" else 1e-12
        for k in range(n):
            if v.sup_abs(cond_expect(space, self.m_interval[k], space.sigma_mid[k])) > tol:
                raise ProcessError(f"martingale interval increment {k} not conditionally centered")
            if v.sup_abs(cond_expect(space, self.m_jump[k], space.sigma_minus[k])) > tol:
                raise ProcessError(f"martingale jump {k} not conditionally centered")
            if not is_measurable(space, self.a_interval[k], space.sigma_minus[k + 1]):
                raise ProcessError(f"A interval increment {k} not adapted")
            if not is_measurable(space, self.b_jump[k], space.sigma_mid[k]):
                raise ProcessError(f"B jump {k} not adapted")
        for k in range(n + 1):
            if not is_measurable(space, self.a_jump[k], space.sigma_mid[k]):
                raise ProcessError(f"A jump {k} not adapted")

    # state trajectories ------------------------------------------------

    def states(self) -> tuple[list, list, list]:
        """(minus, mid, plus) slot values of the reconstructed process."""
        space, n = self.space, self.space.n_steps
        minus, mid, plus = [], [], []
        cur = list(self.x0)
        for k in range(n + 1):
            minus.append(list(cur))
            cur = v.add(cur, self.a_jump[k])        # left jump
            mid.append(list(cur))
            if k < n:
                cur = v.add(cur, v.add(self.m_jump[k], self.b_jump[k]))  # right jump
                plus.append(list(cur))
                cur = v.add(cur, v.add(self.m_interval[k], self.a_interval[k]))
        return minus, mid, plus

    def as_process(self) -> LadlagProcess:
        minus, mid, plus = self.states()
        return from_slots(self.space, minus, mid, plus, kind="optional", validate=False)


def semimartingale_from_weights(space: FilteredSpace, weights: Sequence) -> OptionalSemimartingale:
    """Deterministic finite-variation component with values weights[k] at t_k.

    Carries its whole variation on the intervals, like e^{beta t}.
    """
    n = space.n_steps
    zero = space.zero()
    wvals = [space.constant(w) for w in weights]
    return OptionalSemimartingale(
        space=space,
        x0=list(wvals[0]),
        m_interval=tuple(list(zero) for _ in range(n)),
        m_jump=tuple(list(zero) for _ in range(n)),
        a_jump=tuple(list(zero) for _ in range(n + 1)),
        a_interval=tuple(v.sub(wvals[k + 1], wvals[k]) for k in range(n)),
        b_jump=tuple(list(zero) for _ in range(n)),
    )


# ---------------------------------------------------------------------------
# the change-of-variables identity


@dataclass
class ChangeOfVariablesReport:
    lhs: list               # per instant: per-path F(X_t) - F(X_0)
    rhs: list               # per instant: per-path sum of the five terms
    terms: dict             # named running totals, same shape
    max_deviation: float

    def passed(self, tol: float = 0.0) -> bool:
        return self.max_deviation <= tol


def galchouk_lenglart_check(
    components: Sequence[OptionalSemimartingale], f: Polynomial
) -> ChangeOfVariablesReport:
    """Evaluate both sides of the change-of-variables formula at every instant.

    Terms, per the ladlag decomposition:
    1. dA integral: D_k F at the pre-transition state against A's left jumps
       and interval increments.
    2. d(B+M)^+ integral: D_k F at the pre-transition state against right
       jumps and M's interval increments.
    3. continuous-bracket term: identically zero here.
    4. left-jump corrections over (0, t].
    5. right-jump corrections over [0, t), including the interval
       transitions (the discrete image of the missing bracket term).
    The identity is exact: the telescoped state walk recovers F(X_t) - F(X_0).
    """
    space = components[0].space
    n = space.n_steps
    if any(c.space is not space for c in components):
        raise ProcessError("all components must live on the same space")
    if f.n_vars != len(components):
        raise ProcessError(f"F takes {f.n_vars} variables, got {len(components)} components")
    grads = [f.partial(i) for i in range(len(components))]
    slots = [c.states() for c in components]  # per component: (minus, mid, plus)

    def state(slot: int, k: int) -> list:
        return [s[slot][k] for s in slots]  # list over components of RVs

    def fval(st) -> list:
        return [f([comp[i] for comp in st]) for i in range(space.n_paths)]

    def term_accumulate(acc, vals):
        return v.add(acc, vals)

    zero = space.zero()
    t1, t2, t4, t5 = (list(zero) for _ in range(4))
    t3 = list(zero)  # continuous bracket, stays zero
    lhs_series, rhs_series = [], []
    terms_series = {name: [] for name in ("dA_integral", "dBM_integral", "bracket",
                                          "left_jump_sum", "right_jump_sum")}
    f0 = fval(state(1, 0))

    for k in range(n + 1):
        # left jump at k (skipped at k = 0: there is no time before 0)
        if k > 0:
            pre = state(0, k)
            grad_vals = [[g([comp[i] for comp in pre]) for i in range(space.n_paths)] for g in grads]
            total_jump = [comp.a_jump[k] for comp in components]
            for c_idx in range(len(components)):
                t1 = term_accumulate(t1, v.mul(grad_vals[c_idx], total_jump[c_idx]))
            post = [v.add(pre[c], total_jump[c]) for c in range(len(components))]
            corr = v.sub(fval(post), fval(pre))
            for c_idx in range(len(components)):
                corr = v.sub(corr, v.mul(grad_vals[c_idx], total_jump[c_idx]))
            t4 = term_accumulate(t4, corr)

        lhs_series.append(v.sub(fval(state(1, k)), f0))
        rhs_series.append(v.add(v.add(t1, t2), v.add(t3, v.add(t4, t5))))
        for name, acc in zip(terms_series, (t1, t2, t3, t4, t5)):
            terms_series[name].append(list(acc))

        if k == n:
            break

        # right jump at k
        pre = state(1, k)
        grad_vals = [[g([comp[i] for comp in pre]) for i in range(space.n_paths)] for g in grads]
        jumps = [v.add(comp.b_jump[k], comp.m_jump[k]) for comp in components]
        for c_idx in range(len(components)):
            t2 = term_accumulate(t2, v.mul(grad_vals[c_idx], jumps[c_idx]))
        post = [v.add(pre[c], jumps[c]) for c in range(len(components))]
        corr = v.sub(fval(post), fval(pre))
        for c_idx in range(len(components)):
            corr = v.sub(corr, v.mul(grad_vals[c_idx], jumps[c_idx]))
        t5 = term_accumulate(t5, corr)

        # interval transition (t_k, t_{k+1})
        pre = state(2, k)
        grad_vals = [[g([comp[i] for comp in pre]) for i in range(space.n_paths)] for g in grads]
        incs = [v.add(comp.m_interval[k], comp.a_interval[k]) for comp in components]
        for c_idx, comp in enumerate(components):
            t1 = term_accumulate(t1, v.mul(grad_vals[c_idx], comp.a_interval[k]))
            t2 = term_accumulate(t2, v.mul(grad_vals[c_idx], comp.m_interval[k]))
        post = [v.add(pre[c], incs[c]) for c in range(len(components))]
        corr = v.sub(fval(post), fval(pre))
        for c_idx in range(len(components)):
            corr = v.sub(corr, v.mul(grad_vals[c_idx], incs[c_idx]))
        t5 = term_accumulate(t5, corr)

    dev = max(
        (abs(float(x)) for lh, rh in zip(lhs_series, rhs_series) for x in v.sub(lh, rh)),
        default=0.0,
    )
    return ChangeOfVariablesReport(
        lhs=lhs_series, rhs=rhs_series, terms=terms_series, max_deviation=dev
    )


# ---------------------------------------------------------------------------
# the weighted-square expansion used by the a-priori estimates


@dataclass
class WeightedSquareReport:
    terms: dict              # name -> per-instant per-path running totals
    lhs: list                # per-instant per-path w_t Y_t^2 - w_0 Y_0^2
    max_deviation: float

    def passed(self, tol: float = 0.0) -> bool:
        return self.max_deviation <= tol


def corollary_expansion(
    y: OptionalSemimartingale, beta: float | None = None, weights: Sequence | None = None
) -> WeightedSquareReport:
    """Term-by-term expansion of w_t Y_t^2 against its semimartingale parts.

    ``weights`` defaults to e^{beta t_k} in float mode; pass a rational
    geometric sequence for exact-arithmetic checks (the identity holds for
    any deterministic weight sequence).  Term names:

    * drift: Y^2 against the weight increments (the beta e^{beta s} Y^2 ds term)
    * A_integral: 2 w Y against dA (left jumps and interval parts)
    * bracket: continuous-bracket term, identically zero
    * BM_integral: 2 w Y against d(B+M)^+
    * left_jump_sum, right_jump_sum: the two correction sums; the right one
      carries the interval corrections w (dY_interval)^2 standing in for the
      bracket.
    """
    space = y.space
    n = space.n_steps
    if weights is None:
        if beta is None:
            raise ValueError("need beta or explicit weights")
        weights = [math.exp(beta * space.time_float(k)) for k in range(n + 1)]
        if space.mode == "rational":
            weights = [Fraction(w).limit_denominator(10**9) for w in weights]
    wproc = semimartingale_from_weights(space, weights)
    f = Polynomial.from_dict(2, {(1, 2): _one(space)})
    report = galchouk_lenglart_check([wproc, y], f)

    # Regroup: the weight component's dA share is the drift term; the Y
    # component's dA share is the A integral.  Totals at instant k include
    # intervals up to k-1 and left jumps up to k, matching the series above.
    zero = space.zero()
    drift, a_int = [list(zero)], [list(zero)]
    run_drift, run_a = list(zero), list(zero)
    grad_w = f.partial(0)   # y^2
    grad_y = f.partial(1)   # 2 x y
    wminus, _, wplus = wproc.states()
    yminus, _, yplus = y.states()
    for k in range(1, n + 1):
        gw = [grad_w([wplus[k - 1][i], yplus[k - 1][i]]) for i in range(space.n_paths)]
        gy = [grad_y([wplus[k - 1][i], yplus[k - 1][i]]) for i in range(space.n_paths)]
        run_drift = v.add(run_drift, v.mul(gw, wproc.a_interval[k - 1]))
        run_a = v.add(run_a, v.mul(gy, y.a_interval[k - 1]))
        gy2 = [grad_y([wminus[k][i], yminus[k][i]]) for i in range(space.n_paths)]
        run_a = v.add(run_a, v.mul(gy2, y.a_jump[k]))
        drift.append(list(run_drift))
        a_int.append(list(run_a))

    terms = {
        "drift": drift,
        "A_integral": a_int,
        "bracket": report.terms["bracket"],
        "BM_integral": report.terms["dBM_integral"],
        "left_jump_sum": report.terms["left_jump_sum"],
        "right_jump_sum": report.terms["right_jump_sum"],
    }
    # drift + A_integral must equal the full dA integral of the two components
    recheck = max(
        abs(float(x))
        for k in range(n + 1)
        for x in v.sub(v.add(terms["drift"][k], terms["A_integral"][k]),
                       report.terms["dA_integral"][k])
    )
    dev = max(report.max_deviation, recheck)
    return WeightedSquareReport(terms=terms, lhs=report.lhs, max_deviation=dev)


def _one(space: FilteredSpace):
    return Fraction(1) if space.mode == "rational" else 1.0


# ---------------------------------------------------------------------------
# randomized trial material


def random_semimartingale(space: FilteredSpace, rng) -> OptionalSemimartingale:
    """Random decomposition: dW-driven interval martingale part, mark-driven
    compensated jumps, signed adapted A increments, signed B jumps."""
    from .prob_space import cond_expect

    n = space.n_steps

    def draw(partition, signed=True) -> list:
        out = space.zero()
        for atom in partition:
            val = Fraction(rng.randint(-8, 8) if signed else rng.randint(0, 8), 4)
            if space.mode == "float":
                val = float(val)
            for i in atom:
                out[i] = val
        return out

    m_interval = []
    for k in range(n):
        z = draw(space.sigma_mid[k])
        m_interval.append(v.mul(z, space.dw[k]))
    m_jump = []
    for k in range(n):
        raw = draw(space.sigma_mid[k])
        m_jump.append(v.sub(raw, cond_expect(space, raw, space.sigma_minus[k])))
    a_jump = [space.zero()] + [draw(space.sigma_mid[k]) for k in range(1, n + 1)]
    a_interval = [draw(space.sigma_minus[k + 1]) for k in range(n)]
    b_jump = [draw(space.sigma_mid[k]) for k in range(n)]
    x0 = draw(space.sigma_minus[0])
    sm = OptionalSemimartingale(
        space=space,
        x0=x0,
        m_interval=tuple(m_interval),
        m_jump=tuple(m_jump),
        a_jump=tuple(a_jump),
        a_interval=tuple(a_interval),
        b_jump=tuple(b_jump),
    )
    sm.validate()
    return sm


def random_polynomial(rng, n_vars: int, max_degree: int = 4, n_terms: int = 5) -> Polynomial:
    coeffs: dict = {}
    for _ in range(n_terms):
        expo = [0] * n_vars
        budget = rng.randint(0, max_degree)
        for _ in range(budget):
            expo[rng.randrange(n_vars)] += 1
        c = Fraction(rng.randint(-6, 6), 3)
        if c:
            key = tuple(expo)
            coeffs[key] = coeffs.get(key, Fraction(0)) + c
    if not coeffs:
        coeffs[(0,) * n_vars] = Fraction(1)
    return Polynomial.from_dict(n_vars, coeffs)


# ---------------------------------------------------------------------------
# a-priori estimate between two solutions


@dataclass
class EstimateReport:
    z_m_lhs: float
    z_m_rhs: float
    z_m_holds: bool
    y_lhs: float
    y_rhs: float
    y_ratio: float
    empirical_c: float
    beta: float
    eps: float
    c: float

    def to_json_dict(self) -> dict:
        return {
            "zm": {"lhs": self.z_m_lhs, "rhs": self.z_m_rhs, "holds": self.z_m_holds,
                   "margin": self.z_m_rhs - self.z_m_lhs},
            "y": {"lhs": self.y_lhs, "rhs": self.y_rhs, "ratio": self.y_ratio,
                  "empirical_c": self.empirical_c},
            "params": {"beta": self.beta, "eps": self.eps, "c": self.c},
        }


def apriori_estimate_check(
    s: SolutionSeptuple,
    s_bar: SolutionSeptuple,
    g: list,
    g_bar: list,
    beta: float,
    eps: float,
    c: float,
    tol: float = 1e-12,
) -> EstimateReport:
    """Compare the component distances of two solutions sharing barriers.

    Asserts ||Z - Zbar||^2_beta + ||M - Mbar||^2_{M^2 beta} against
    eps^2 ||g - gbar||^2_beta, and reports the Y-distance ratio against
    2 eps^2 (1 + 8c^2) ||g - gbar||^2_beta together with the smallest
    constant that would make it hold.
    """
    if beta <= 1 / eps**2:
        raise ValueError(f"need beta > 1/eps^2 = {1 / eps ** 2:g}, got {beta:g}")
    space = s.y.space
    g_diff = IntegrandProcess(
        space=space, z=tuple(v.sub(g[k], g_bar[k]) for k in range(space.n_steps))
    )
    z_diff = IntegrandProcess(
        space=space, z=tuple(v.sub(s.z.z[k], s_bar.z.z[k]) for k in range(space.n_steps))
    )
    m_diff = p_sub(s.m, s_bar.m, kind="cadlag-martingale")
    y_diff = p_sub(s.y, s_bar.y, kind="predictable")

    lhs1 = beta_norm_h2(z_diff, beta) + beta_norm_m2(m_diff, beta)
    rhs1 = eps**2 * beta_norm_h2(g_diff, beta)
    lhs2 = beta_norm_s2p(y_diff, beta)
    rhs2 = 2 * eps**2 * (1 + 8 * c**2) * beta_norm_h2(g_diff, beta)
    base = 2 * eps**2 * beta_norm_h2(g_diff, beta)
    if base > 0:
        emp = math.sqrt(max(0.0, (lhs2 / base - 1) / 8))
    else:
        emp = 0.0
    return EstimateReport(
        z_m_lhs=lhs1,
        z_m_rhs=rhs1,
        z_m_holds=lhs1 <= rhs1 + tol,
        y_lhs=lhs2,
        y_rhs=rhs2,
        y_ratio=(lhs2 / rhs2) if rhs2 > 0 else 0.0,
        empirical_c=emp,
        beta=beta,
        eps=eps,
        c=c,
    )
