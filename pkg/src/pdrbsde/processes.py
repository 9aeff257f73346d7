"""Ladlag process calculus on the slot grid.

A process is stored as three per-instant slots: ``minus[k]`` (left limit at
t_k), ``mid[k]`` (value at t_k) and ``plus[k]`` (right limit at t_k; absent at
the terminal instant).  Interval evolution is carried between ``plus[k]`` and
``minus[k+1]``; with binary Brownian increments every zero-mean interval
increment of a martingale is proportional to dW_k, so the orthogonal component
of any martingale moves only through instant jumps — jumps at predictable
times, the phenomenon the whole artifact is built to exhibit.

Measurability contract per kind:

* optional: minus[k] is sigma_minus[k]-measurable; mid[k] and plus[k] are
  sigma_mid[k]-measurable.
* predictable: additionally mid[k] is sigma_minus[k]-measurable.
* cadlag-martingale: plus == mid, interval increments have zero conditional
  mean given sigma_mid[k], instant jumps have zero conditional mean given
  sigma_minus[k] (the discrete predictable stopping theorem).
* finite-variation-predictable (the A class): cadlag, mid[0] = 0, nonnegative
  interval increments (sigma_minus[k+1]-measurable) and nonnegative instant
  jumps (sigma_minus[k]-measurable).
* purely-discontinuous-predictable (the B class): cadlag, minus[0] = 0, no
  interval variation, nonnegative sigma_minus[k]-measurable instant jumps.
  B may jump at instant 0 (B_{0^-} = 0, B_0 >= 0); no other class may.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from . import values as v
from .prob_space import FilteredSpace, cond_expect, is_measurable

KINDS = (
    "optional",
    "predictable",
    "finite-variation-predictable",
    "purely-discontinuous-predictable",
    "cadlag-martingale",
)

_CADLAG_KINDS = (
    "finite-variation-predictable",
    "purely-discontinuous-predictable",
    "cadlag-martingale",
)


class ProcessError(ValueError):
    """Violation of a process class invariant."""


@dataclass(frozen=True)
class LadlagProcess:
    space: FilteredSpace
    kind: str
    minus: tuple   # length N+1, each an RV
    mid: tuple     # length N+1
    plus: tuple    # length N

    @property
    def n_steps(self) -> int:
        return self.space.n_steps

    def terminal(self) -> list:
        return list(self.mid[-1])

    def left_jump(self, k: int) -> list:
        return v.sub(self.mid[k], self.minus[k])

    def right_jump(self, k: int) -> list:
        return v.sub(self.plus[k], self.mid[k])

    def interval_increment(self, k: int) -> list:
        """Change across the open interval (t_k, t_{k+1})."""
        return v.sub(self.minus[k + 1], self.plus[k])

    def with_kind(self, kind: str) -> "LadlagProcess":
        return replace(self, kind=kind)


@dataclass(frozen=True)
class IntegrandProcess:
    """Integrand over the open intervals: z[k] acts on (t_k, t_{k+1})."""

    space: FilteredSpace
    z: tuple  # length N, each an RV sigma_mid[k]-measurable

    @property
    def n_steps(self) -> int:
        return self.space.n_steps


# ---------------------------------------------------------------------------
# constructors


def from_slots(space, minus, mid, plus, kind="optional", validate=True) -> LadlagProcess:
    proc = LadlagProcess(
        space=space,
        kind=kind,
        minus=tuple(list(x) for x in minus),
        mid=tuple(list(x) for x in mid),
        plus=tuple(list(x) for x in plus),
    )
    if validate:
        validate_process(proc)
    return proc


def from_cadlag_sequence(space, mids: Sequence, kind="predictable") -> LadlagProcess:
    """Step process from per-instant values: value mids[k] on [t_k, t_{k+1}).

    Slots: mid[k] = plus[k] = mids[k], minus[k] = mids[k-1]; the change shows
    up as a left jump at each instant and intervals carry no variation.
    """
    n = space.n_steps
    mid = [list(mids[k]) for k in range(n + 1)]
    minus = [list(mids[0])] + [list(mids[k - 1]) for k in range(1, n + 1)]
    plus = [list(mids[k]) for k in range(n)]
    return from_slots(space, minus, mid, plus, kind=kind)


def constant_process(space, value, kind="predictable") -> LadlagProcess:
    c = space.constant(value)
    n = space.n_steps
    return from_slots(space, [c] * (n + 1), [c] * (n + 1), [c] * n, kind=kind)


def zero_process(space, kind="optional") -> LadlagProcess:
    return constant_process(space, 0, kind=kind)


def zero_integrand(space) -> IntegrandProcess:
    return IntegrandProcess(space=space, z=tuple(space.zero() for _ in range(space.n_steps)))


# ---------------------------------------------------------------------------
# slot arithmetic


def p_add(a: LadlagProcess, b: LadlagProcess, kind="optional") -> LadlagProcess:
    return _zip_with(v.add, a, b, kind)


def p_sub(a: LadlagProcess, b: LadlagProcess, kind="optional") -> LadlagProcess:
    return _zip_with(v.sub, a, b, kind)


def p_scale(c, a: LadlagProcess, kind=None) -> LadlagProcess:
    n = a.n_steps
    return from_slots(
        a.space,
        [v.smul(c, a.minus[k]) for k in range(n + 1)],
        [v.smul(c, a.mid[k]) for k in range(n + 1)],
        [v.smul(c, a.plus[k]) for k in range(n)],
        kind=kind or a.kind,
        validate=False,
    )


def p_max(a: LadlagProcess, b: LadlagProcess, kind="optional") -> LadlagProcess:
    return _zip_with(v.vmax, a, b, kind)


def _zip_with(op, a, b, kind):
    n = a.n_steps
    return from_slots(
        a.space,
        [op(a.minus[k], b.minus[k]) for k in range(n + 1)],
        [op(a.mid[k], b.mid[k]) for k in range(n + 1)],
        [op(a.plus[k], b.plus[k]) for k in range(n)],
        kind=kind,
        validate=False,
    )


def sup_distance(a: LadlagProcess, b: LadlagProcess):
    """Max absolute slot difference over all instants and paths."""
    n = a.n_steps
    d = max(
        max(v.sup_abs(v.sub(a.minus[k], b.minus[k])) for k in range(n + 1)),
        max(v.sup_abs(v.sub(a.mid[k], b.mid[k])) for k in range(n + 1)),
    )
    if n:
        d = max(d, max(v.sup_abs(v.sub(a.plus[k], b.plus[k])) for k in range(n)))
    return d


# ---------------------------------------------------------------------------
# class validation


def validate_process(proc: LadlagProcess) -> None:
    space, n = proc.space, proc.n_steps
    if proc.kind not in KINDS:
        raise ProcessError(f"unknown kind {proc.kind!r}")
    if len(proc.minus) != n + 1 or len(proc.mid) != n + 1 or len(proc.plus) != n:
        raise ProcessError("slot arrays have wrong lengths")

    for k in range(n + 1):
        if not is_measurable(space, proc.minus[k], space.sigma_minus[k]):
            raise ProcessError(f"minus[{k}] not sigma_minus[{k}]-measurable")
        if not is_measurable(space, proc.mid[k], space.sigma_mid[k]):
            raise ProcessError(f"mid[{k}] not sigma_mid[{k}]-measurable")
        if k < n and not is_measurable(space, proc.plus[k], space.sigma_mid[k]):
            raise ProcessError(f"plus[{k}] not sigma_mid[{k}]-measurable")

    predictable_like = proc.kind in (
        "predictable",
        "finite-variation-predictable",
        "purely-discontinuous-predictable",
    )
    if predictable_like:
        for k in range(n + 1):
            if not is_measurable(space, proc.mid[k], space.sigma_minus[k]):
                raise ProcessError(f"mid[{k}] not sigma_minus[{k}]-measurable (predictable)")

    if proc.kind in _CADLAG_KINDS:
        for k in range(n):
            if proc.plus[k] != proc.mid[k]:
                raise ProcessError(f"cadlag violated at plus[{k}]")

    if proc.kind == "purely-discontinuous-predictable":
        if any(x != 0 for x in proc.minus[0]):
            raise ProcessError("B-class needs slot_minus[0] = 0")
        for k in range(n):
            if proc.minus[k + 1] != proc.plus[k]:
                raise ProcessError(f"B-class has interval variation on ({k},{k+1})")
        for k in range(n + 1):
            if any(x < 0 for x in proc.left_jump(k)):
                raise ProcessError(f"B-class jump negative at instant {k}")
    elif proc.kind == "finite-variation-predictable":
        if any(x != 0 for x in proc.mid[0]) or any(x != 0 for x in proc.minus[0]):
            raise ProcessError("A-class needs A_0 = 0")
        for k in range(n):
            inc = proc.interval_increment(k)
            if any(x < 0 for x in inc):
                raise ProcessError(f"A-class interval increment negative on ({k},{k+1})")
            if not is_measurable(space, inc, space.sigma_minus[k + 1]):
                raise ProcessError(f"A-class interval increment not sigma_minus[{k+1}]-measurable")
        for k in range(n + 1):
            jump = proc.left_jump(k)
            if any(x < 0 for x in jump):
                raise ProcessError(f"A-class jump negative at instant {k}")
            if not is_measurable(space, jump, space.sigma_minus[k]):
                raise ProcessError(f"A-class jump not sigma_minus[{k}]-measurable")
    else:
        # optional / predictable / martingale: no time before 0, so the left
        # limit at 0 is the value itself (martingales may carry a zero-mean
        # jump at 0 when a mark lives there).
        if proc.kind != "cadlag-martingale" and proc.minus[0] != proc.mid[0]:
            raise ProcessError("slot_minus[0] must equal slot_mid[0]")

    if proc.kind == "cadlag-martingale" and not is_martingale(proc):
        raise ProcessError("martingale increment conditions violated")


def validate_integrand(zp: IntegrandProcess) -> None:
    if len(zp.z) != zp.space.n_steps:
        raise ProcessError("integrand has wrong length")
    for k in range(zp.space.n_steps):
        if not is_measurable(zp.space, zp.z[k], zp.space.sigma_mid[k]):
            raise ProcessError(f"z[{k}] not sigma_mid[{k}]-measurable")


# ---------------------------------------------------------------------------
# operations


def predictable_projection(x: LadlagProcess) -> LadlagProcess:
    """(pX)_k = E[X_k | F_{t_k^-}], with plus slots carrying p(X^+)_k.

    The returned process is predictable; its plus slot at k is the predictable
    projection of the right limit, the quantity entering the jump identities.
    """
    space, n = x.space, x.n_steps
    mid = [cond_expect(space, x.mid[k], space.sigma_minus[k]) for k in range(n + 1)]
    plus = [cond_expect(space, x.plus[k], space.sigma_minus[k]) for k in range(n)]
    minus = [list(x.minus[k]) for k in range(n + 1)]
    minus[0] = list(mid[0])
    return from_slots(space, minus, mid, plus, kind="predictable", validate=False)


def jumps(x: LadlagProcess) -> tuple[list, list]:
    """Left jumps mid-minus per instant, right jumps plus-mid per instant."""
    left = [x.left_jump(k) for k in range(x.n_steps + 1)]
    right = [x.right_jump(k) for k in range(x.n_steps)]
    return left, right


def is_martingale(m: LadlagProcess, tol=None) -> bool:
    """Conditional increments vanish across both lattice links.

    Interval link: E[minus[k+1] - plus[k] | sigma_mid[k]] = 0.
    Instant link (predictable stopping theorem): E[mid[k] - minus[k] |
    sigma_minus[k]] = 0.  Requires a cadlag slot layout.
    """
    space, n = m.space, m.n_steps
    if tol is None:
        tol = 0 if space.mode == "rational" else 1e-12
    for k in range(n):
        if m.plus[k] != m.mid[k]:
            return False
        inc = cond_expect(space, m.interval_increment(k), space.sigma_mid[k])
        if v.sup_abs(inc) > tol:
            return False
    for k in range(n + 1):
        jump = cond_expect(space, m.left_jump(k), space.sigma_minus[k])
        if v.sup_abs(jump) > tol:
            return False
    return True


def is_predictable_strong_supermartingale(
    y: LadlagProcess, tol=None, enumeration_check: bool | None = None
) -> bool:
    """Local slot inequalities for a predictable strong supermartingale.

    (i) minus[k] >= mid[k]; (ii) mid[k] >= E[plus[k] | sigma_minus[k]];
    (iii) plus[k] >= E[minus[k+1] | sigma_mid[k]].  Composing the three
    yields every pairwise stopping-time inequality, in particular the
    mid-to-mid one-step inequality mid[k] >= E[mid[k+1] | sigma_minus[k]].

    On spaces of at most 64 paths the result is cross-checked against the
    enumeration oracle (the slot Snell envelope of y must equal y).
    """
    space, n = y.space, y.n_steps
    if tol is None:
        tol = 0 if space.mode == "rational" else 1e-12
    for k in range(n + 1):
        if not is_measurable(space, y.mid[k], space.sigma_minus[k]):
            return False
    ok = True
    for k in range(n + 1):
        if any(a < b - tol for a, b in zip(y.minus[k], y.mid[k])):
            ok = False
    for k in range(n):
        p_proj = cond_expect(space, y.plus[k], space.sigma_minus[k])
        if any(a < b - tol for a, b in zip(y.mid[k], p_proj)):
            ok = False
        cont = cond_expect(space, y.minus[k + 1], space.sigma_mid[k])
        if any(a < b - tol for a, b in zip(y.plus[k], cont)):
            ok = False
    if enumeration_check is None:
        enumeration_check = space.n_paths <= 64
    if enumeration_check and space.n_paths <= 64:
        from .snell import stopping_rule_count, snell_bruteforce

        if stopping_rule_count(space) <= 200_000:
            env = snell_bruteforce(y, validate_input=False)
            dominated = sup_distance(env, y) <= tol
            if dominated != ok:
                raise ProcessError(
                    "supermartingale fast path disagrees with stopping-time enumeration"
                )
    return ok


def ito_integral(z: IntegrandProcess, space: FilteredSpace | None = None) -> LadlagProcess:
    """Cadlag martingale with interval increments z[k] dW_k and no jumps."""
    space = space or z.space
    n = space.n_steps
    minus = [space.zero()]
    mid = [space.zero()]
    plus = []
    for k in range(n):
        plus.append(list(mid[k]))
        nxt = v.add(plus[k], v.mul(z.z[k], space.dw[k]))
        minus.append(nxt)
        mid.append(list(nxt))
    return from_slots(space, minus, mid, plus, kind="cadlag-martingale", validate=False)


def orthogonal_decompose(m: LadlagProcess) -> tuple[IntegrandProcess, LadlagProcess]:
    """Split a square-integrable martingale into dW-integral plus orthogonal rest.

    With binary increments, every zero-mean interval increment is a multiple
    of dW_k on each atom of sigma_mid[k]:
    Z_k = E[(M_{(k+1)^-} - M_{k^+}) dW_k | sigma_mid[k]] / dt.  The remainder
    N = M - int Z dW then has no interval variation at all: it carries exactly
    the jumps at (predictable) grid instants, and [N, W] = 0 cell by cell.
    """
    space, n = m.space, m.n_steps
    if any(x != 0 for x in m.minus[0]):
        raise ProcessError("orthogonal decomposition needs M_{0^-} = 0")
    if not is_martingale(m):
        raise ProcessError("input fails the martingale increment conditions")
    zs = []
    for k in range(n):
        prod = v.mul(m.interval_increment(k), space.dw[k])
        zk = v.smul(1 / space.dt if space.mode == "float" else Fraction(1) / space.dt,
                    cond_expect(space, prod, space.sigma_mid[k]))
        zs.append(zk)
    z = IntegrandProcess(space=space, z=tuple(zs))
    nrem = p_sub(m, ito_integral(z, space), kind="cadlag-martingale")
    return z, nrem


def bracket(a: LadlagProcess, b: LadlagProcess) -> LadlagProcess:
    """Quadratic covariation: co-located increment products, summed.

    Interval increments pair with interval increments, instant jumps with
    instant jumps; the running sum is a cadlag process whose jump at k is
    the product of the two jumps at k.
    """
    space, n = a.space, a.n_steps
    running = space.zero()
    minus, mid, plus = [], [], []
    for k in range(n + 1):
        jump_prod = v.mul(a.left_jump(k), b.left_jump(k))
        minus.append(list(running))
        running = v.add(running, jump_prod)
        mid.append(list(running))
        if k < n:
            plus.append(list(running))
            running = v.add(running, v.mul(a.interval_increment(k), b.interval_increment(k)))
    return from_slots(space, minus, mid, plus, kind="optional", validate=False)


def brownian_process(space: FilteredSpace) -> LadlagProcess:
    """The discrete Brownian surrogate W itself: unit integrand, no jumps."""
    ones = IntegrandProcess(space=space, z=tuple(space.constant(1) for _ in range(space.n_steps)))
    return ito_integral(ones, space)


def martingale_from_terminal(space: FilteredSpace, terminal: Sequence) -> LadlagProcess:
    """Cadlag version of E[terminal | F_t] started at its mean.

    terminal must be sigma_mid[N]-measurable; slots are the conditional
    expectations on the lattice.
    """
    n = space.n_steps
    minus = [cond_expect(space, terminal, space.sigma_minus[k]) for k in range(n + 1)]
    mid = [cond_expect(space, terminal, space.sigma_mid[k]) for k in range(n + 1)]
    plus = [list(mid[k]) for k in range(n)]
    return from_slots(space, minus, mid, plus, kind="cadlag-martingale", validate=False)


def process_to_rows(x: LadlagProcess) -> list[tuple]:
    """CSV rows: (instant, slot, path, value)."""
    rows = []
    for k in range(x.n_steps + 1):
        for i, val in enumerate(x.minus[k]):
            rows.append((k, "minus", i, val))
        for i, val in enumerate(x.mid[k]):
            rows.append((k, "mid", i, val))
        if k < x.n_steps:
            for i, val in enumerate(x.plus[k]):
                rows.append((k, "plus", i, val))
    return rows


def dump_process_csv(x: LadlagProcess, path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instant", "slot", "path", "value"])
        for row in process_to_rows(x):
            writer.writerow([row[0], row[1], row[2], str(row[3])])
