"""General Lipschitz drivers: weighted norms and the outer fixed-point loop.

The outer map freezes the driver along the current iterate, g_k :=
driver(t_k, U_k, V_k), solves the resulting process-driver problem with the
coupled Picard scheme, and reads the new iterate off the solution.  Under
2K(1+T)eps^2(3 + 16c^2) < 1 with beta > 1/eps^2 the map contracts in the
combined norm |||Y|||_beta^2 + ||Z||_beta^2; the observed per-step ratio is
recorded and asserted < 1 rather than trusting any symbolic constant.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from . import values as v
from .drbsde import BarrierPair, SolutionSeptuple, solve_driver_process
from .prob_space import FilteredSpace, expectation
from .processes import IntegrandProcess, LadlagProcess, p_sub


class ContractionError(RuntimeError):
    """Outer loop failed to contract within its iteration budget."""


@dataclass(frozen=True)
class LipschitzDriver:
    """Driver g(t, y, z) with a declared Lipschitz constant in (y, z).

    ``evaluate(k, t, y, z)`` returns one scalar; it is applied pathwise, so
    measurability of the frozen process is inherited from (U_k, V_k).
    """

    evaluate: Callable
    lipschitz_k: float
    label: str = "driver"

    def freeze(self, space: FilteredSpace, u: LadlagProcess, z: IntegrandProcess) -> list:
        out = []
        for k in range(space.n_steps):
            t = space.time(k)
            out.append(
                [self.evaluate(k, t, u.mid[k][i], z.z[k][i]) for i in range(space.n_paths)]
            )
        return out

    def probe_lipschitz(self, space: FilteredSpace, seed: int = 0, pairs_per_instant: int = 32,
                        scale: float = 4.0) -> float:
        """Sampled certification of the Lipschitz bound; returns the worst ratio."""
        rng = random.Random(f"lipschitz-probe:{seed}")
        worst = 0.0
        for k in range(space.n_steps):
            t = space.time(k)
            for _ in range(pairs_per_instant):
                y1, y2 = (rng.uniform(-scale, scale) for _ in range(2))
                z1, z2 = (rng.uniform(-scale, scale) for _ in range(2))
                denom = abs(y1 - y2) + abs(z1 - z2)
                if denom == 0:
                    continue
                diff = abs(float(self.evaluate(k, t, y1, z1)) - float(self.evaluate(k, t, y2, z2)))
                worst = max(worst, diff / denom)
        if worst > float(self.lipschitz_k) * (1 + 1e-9) + 1e-12:
            raise ValueError(
                f"driver violates its declared Lipschitz constant: observed {worst:g} > {self.lipschitz_k:g}"
            )
        return worst


def linear_driver(a, b, c_table: list, lipschitz_k=None) -> LipschitzDriver:
    """g(t_k, y, z) = a y + b z + c_k with K = max(|a|, |b|) unless declared."""
    k_decl = lipschitz_k if lipschitz_k is not None else max(abs(a), abs(b))
    if k_decl < max(abs(a), abs(b)):
        raise ValueError("declared K below max(|a|, |b|)")

    def evaluate(k, t, y, z, _a=a, _b=b, _c=c_table):
        return _a * y + _b * z + _c[k]

    return LipschitzDriver(evaluate=evaluate, lipschitz_k=float(k_decl), label="linear")


@dataclass(frozen=True)
class ContractionParams:
    beta: float = 5.0
    eps: float = 0.5
    c: float = 2.0

    def modulus(self, lipschitz_k: float, t_horizon: float) -> float:
        return 2 * lipschitz_k * (1 + t_horizon) * self.eps**2 * (3 + 16 * self.c**2)

    def validate(self, lipschitz_k: float, t_horizon: float) -> None:
        if self.beta <= 1 / self.eps**2:
            raise ValueError(f"need beta > 1/eps^2 = {1 / self.eps ** 2:g}, got beta = {self.beta:g}")
        m = self.modulus(lipschitz_k, t_horizon)
        if m >= 1:
            raise ValueError(f"contraction modulus 2K(1+T)eps^2(3+16c^2) = {m:g} >= 1")


# ---------------------------------------------------------------------------
# beta-weighted norms (evaluated in float; see README on exactness)


def beta_norm_h2(phi: IntegrandProcess, beta: float) -> float:
    """E[ sum_k e^{beta t_k} phi_k^2 dt ]."""
    space = phi.space
    dt = float(space.t_horizon) / space.n_steps
    total = 0.0
    for k in range(space.n_steps):
        w = math.exp(beta * space.time_float(k))
        total += w * dt * float(expectation(space, [float(x) ** 2 for x in phi.z[k]]))
    return total


def beta_norm_s2p(xi: LadlagProcess, beta: float) -> float:
    """E[ max_k e^{beta t_k} xi_k^2 ]: constant stopping times are predictable
    and exhaust the per-path values, so the essential supremum over grid
    stopping times is the pathwise maximum over mid slots."""
    space = xi.space
    out = 0.0
    for i in range(space.n_paths):
        best = max(
            math.exp(beta * space.time_float(k)) * float(xi.mid[k][i]) ** 2
            for k in range(space.n_steps + 1)
        )
        out += float(space.weights[i]) * best
    return out


def beta_norm_m2(m: LadlagProcess, beta: float) -> float:
    """E[ int e^{beta s} d[M]_s ]: instant jumps weighted at their instant,
    interval increments at the right endpoint."""
    space = m.space
    total = 0.0
    for k in range(space.n_steps + 1):
        w = math.exp(beta * space.time_float(k))
        total += w * float(expectation(space, [float(x) ** 2 for x in m.left_jump(k)]))
    for k in range(space.n_steps):
        w = math.exp(beta * space.time_float(k + 1))
        total += w * float(
            expectation(space, [float(x) ** 2 for x in m.interval_increment(k)])
        )
    return total


def base_norm_h2(driver: LipschitzDriver, space: FilteredSpace) -> float:
    """Finiteness witness ||g(., 0, 0)||^2 in the unweighted H^2 norm."""
    zero = 0 if space.mode == "float" else Fraction(0)
    g0 = [
        [driver.evaluate(k, space.time(k), zero, zero) for _ in range(space.n_paths)]
        for k in range(space.n_steps)
    ]
    dt = float(space.t_horizon) / space.n_steps
    return sum(
        dt * float(expectation(space, [float(x) ** 2 for x in gk])) for gk in g0
    )


# ---------------------------------------------------------------------------
# outer loop


@dataclass
class OuterTrace:
    iterations: int = 0
    converged: bool = False
    deltas: list = field(default_factory=list)          # combined-norm deltas
    ratios: list = field(default_factory=list)          # per-step contraction ratios
    inner_iterations: list = field(default_factory=list)
    contraction_modulus: float = 0.0
    base_norm: float = 0.0
    lipschitz_probe: float = 0.0
    frozen_g: list | None = None   # the process driver the final solve used

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "deltas": self.deltas,
            "ratios": self.ratios,
            "inner_iterations": self.inner_iterations,
            "contraction_modulus": self.contraction_modulus,
            "base_norm": self.base_norm,
            "lipschitz_probe": self.lipschitz_probe,
        }


def solve_general(
    driver: LipschitzDriver,
    barriers: BarrierPair,
    params: ContractionParams,
    tol: float = 1e-12,
    max_outer: int = 50,
    inner_tol: float = 0.0,
    max_iter: int | None = None,
    probe_seed: int = 0,
) -> tuple[SolutionSeptuple, OuterTrace]:
    """Banach iteration: freeze the driver, solve, re-freeze, until fixed.

    Stops when |||U^{m+1} - U^m|||^2_beta + ||V^{m+1} - V^m||^2_beta <= tol^2.
    Raises ContractionError if the budget is exhausted, and records every
    observed ratio so non-contraction is visible in the trace.
    """
    space = barriers.xi.space
    params.validate(driver.lipschitz_k, float(space.t_horizon))
    trace = OuterTrace(
        contraction_modulus=params.modulus(driver.lipschitz_k, float(space.t_horizon)),
        base_norm=base_norm_h2(driver, space),
        lipschitz_probe=driver.probe_lipschitz(space, seed=probe_seed),
    )

    from .processes import zero_integrand, zero_process

    u = zero_process(space, kind="predictable")
    vz = zero_integrand(space)
    sol: SolutionSeptuple | None = None
    for it in range(1, max_outer + 1):
        g = driver.freeze(space, u, vz)
        sol, inner = solve_driver_process(
            barriers, g, tol=inner_tol, max_iter=max_iter
        )
        trace.inner_iterations.append(inner.iterations)
        trace.frozen_g = g
        du = p_sub(sol.y, u, kind="predictable")
        dz = IntegrandProcess(
            space=space, z=tuple(v.sub(sol.z.z[k], vz.z[k]) for k in range(space.n_steps))
        )
        delta = beta_norm_s2p(du, params.beta) + beta_norm_h2(dz, params.beta)
        trace.deltas.append(delta)
        if len(trace.deltas) >= 2 and trace.deltas[-2] > 0:
            trace.ratios.append(delta / trace.deltas[-2])
        trace.iterations = it
        u, vz = sol.y, sol.z
        if delta <= tol * tol:
            trace.converged = True
            break
    if not trace.converged:
        raise ContractionError(
            f"outer loop not converged after {max_outer} iterations (delta^2 {trace.deltas[-1]:g})"
        )
    assert sol is not None
    return sol, trace
