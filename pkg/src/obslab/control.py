"""Impulse control by regularized duality.

The controlled flow is i du/dt = H u with two instantaneous kicks,
u(tau_i^+) = u(tau_i^-) - i M_i h_i, where the masks M_i confine the controls
to the exterior observation regions.  Steering u0 to u_T at time T is solved
through the dual (observation) operator

    O f = (M_1 U(tau_1 - T) f,  M_2 U(tau_2 - T) f),

whose adjoint is i times the control-to-state map.  Minimizing the Tikhonov
functional J(f) = 1/2 ||O f||^2 + eps ||f||^2 - Re<f, i y> with
y = u_T - U(T) u0 leads to the normal equations

    (O* O + 2 eps) f = i y,

solved by conjugate gradients; the controls are (h_1, h_2) = O f*.  The i in
the right-hand side compensates the -i of the kick convention, so the
reconstructed terminal state misses y by exactly 2 eps f*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .estimate import POWER_SEED
from .grid import Field, RegionMask, inner, l2_norm
from .hamiltonian import HamiltonianSpec
from .propagate import PropagatorPlan, evolve, evolve_backward


@dataclass(frozen=True)
class ControlProblem:
    hamiltonian: HamiltonianSpec
    u0: Field
    u_target: Field
    tau1: float
    tau2: float
    horizon: float
    radius: float
    sigma: float
    min_time_factor: float = 10.0

    def __post_init__(self):
        if not 0 < self.tau1 < self.tau2 < self.horizon:
            raise ValueError("need 0 < tau1 < tau2 < horizon")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        for f in (self.u0, self.u_target):
            if f.grid != self.hamiltonian.grid:
                raise ValueError("state grid does not match the hamiltonian")

    @property
    def second_radius(self) -> float:
        if self.radius == 0:
            return 0.0
        p = self.hamiltonian.scaling_exponent
        return self.sigma * (self.tau2 - self.tau1) / self.radius ** (p - 1.0)

    @property
    def window_ok(self) -> bool:
        p = self.hamiltonian.scaling_exponent
        return self.tau2 - self.tau1 > self.radius**p * self.min_time_factor

    def snapped_to(self, plan: "PropagatorPlan") -> "ControlProblem":
        """Round the kick times onto the splitstep lattice; no-op otherwise."""
        if plan.engine != "splitstep":
            return self
        dt = plan.dt
        t1, t2 = (round(t / dt) * dt for t in (self.tau1, self.tau2))
        return ControlProblem(self.hamiltonian, self.u0, self.u_target,
                              t1, t2, self.horizon, self.radius, self.sigma,
                              self.min_time_factor)

    def mask(self, index: int) -> np.ndarray:
        """Indicator of chi(|x| >= r_index); radius 0 covers everything."""
        r = self.radius if index == 1 else self.second_radius
        g = self.hamiltonian.grid
        if r == 0:
            region = RegionMask.everything()
        else:
            region = RegionMask.exterior(r)
        return region.indicator(g)


def apply_observation(plan: PropagatorPlan, problem: ControlProblem,
                      f: Field) -> tuple[Field, Field]:
    """Dual state U(tau_i - T) f, masked at both observation times."""
    g = problem.hamiltonian.grid
    b1 = evolve_backward(plan, f, problem.horizon - problem.tau1)
    b2 = evolve_backward(plan, f, problem.horizon - problem.tau2)
    return (Field(g, problem.mask(1) * b1.values),
            Field(g, problem.mask(2) * b2.values))


def apply_control(plan: PropagatorPlan, problem: ControlProblem,
                  h1: Field, h2: Field) -> Field:
    """Terminal state u(T) of the kicked flow started from zero."""
    g = problem.hamiltonian.grid
    k1 = evolve(plan, Field(g, problem.mask(1) * h1.values),
                problem.horizon - problem.tau1)
    k2 = evolve(plan, Field(g, problem.mask(2) * h2.values),
                problem.horizon - problem.tau2)
    return Field(g, -1j * (k1.values + k2.values))


def adjoint_defect(plan: PropagatorPlan, problem: ControlProblem,
                   probes: int = 16, seed: int = POWER_SEED) -> float:
    """max |<Of,(h1,h2)> - <f, i apply_control(h)>| / scale over random probes."""
    g = problem.hamiltonian.grid
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        draws = [rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
                 for _ in range(3)]
        f, h1, h2 = (Field(g, d) for d in draws)
        o1, o2 = apply_observation(plan, problem, f)
        lhs = inner(o1, h1) + inner(o2, h2)
        rhs = inner(f, Field(g, 1j * apply_control(plan, problem, h1, h2).values))
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


@dataclass
class ControlSolution:
    h1: Field
    h2: Field
    dual: Field
    terminal_error: float
    cost: float
    iterations: int
    epsilon: float
    converged: bool
    gradient_norm: float
    j_path: list = dfield(default_factory=list)


def _gram_apply(plan, problem, values, epsilon):
    # (O*O + 2 eps) without the phase dance: U(T-tau_i) M_i U(tau_i-T)
    g = problem.hamiltonian.grid
    f = Field(g, values)
    out = 2.0 * epsilon * values.astype(complex)
    for idx, tau in ((1, problem.tau1), (2, problem.tau2)):
        b = evolve_backward(plan, f, problem.horizon - tau)
        masked = Field(g, problem.mask(idx) * b.values)
        out = out + evolve(plan, masked, problem.horizon - tau).values
    return out


def solve_impulse_control(plan: PropagatorPlan, problem: ControlProblem,
                          epsilon: float, tol: float = 1e-8,
                          max_iter: int = 2000) -> ControlSolution:
    """Tikhonov-regularized dual minimization; see the module docstring."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = problem.hamiltonian.grid
    cell = g.cell_volume
    drift = evolve(plan, problem.u0, problem.horizon)
    y = problem.u_target.values - drift.values
    ynorm = math.sqrt(cell * float(np.vdot(y, y).real))
    zero = Field(g, np.zeros(g.shape, dtype=complex))
    if ynorm == 0.0:
        return ControlSolution(zero, zero, zero, 0.0, 0.0, 0, epsilon,
                               True, 0.0, [0.0])

    target = 1j * y
    f = np.zeros(g.shape, dtype=complex)
    gf = np.zeros_like(f)
    r = target - gf
    p = r.copy()
    rr = cell * float(np.vdot(r, r).real)
    j_path = [0.0]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        gp = _gram_apply(plan, problem, p, epsilon)
        denom = cell * float(np.vdot(p, gp).real)
        if denom <= 0:
            break
        alpha = rr / denom
        f = f + alpha * p
        gf = gf + alpha * gp
        r = target - gf
        # J(f) = 1/2 <f, Gf> - Re<f, target>
        j_path.append(0.5 * cell * float(np.vdot(f, gf).real)
                      - cell * float(np.vdot(f, target).real))
        rr_new = cell * float(np.vdot(r, r).real)
        if math.sqrt(rr_new) <= tol * ynorm:
            converged = True
            rr = rr_new
            break
        p = r + (rr_new / rr) * p
        rr = rr_new

    h1, h2 = apply_observation(plan, problem, Field(g, f))
    reached = apply_control(plan, problem, h1, h2)
    terminal = math.sqrt(cell * float(np.vdot(reached.values - y,
                                              reached.values - y).real))
    cost = l2_norm(h1) ** 2 + l2_norm(h2) ** 2
    return ControlSolution(h1, h2, Field(g, f), terminal, cost, iterations,
                           epsilon, converged, math.sqrt(rr), j_path)


@dataclass
class ControlCheck:
    residual: float               # || u(T; u0, h) - u_target ||
    residual_relative: float
    support_violation: float      # max over i of ||(1 - M_i) h_i||
    engine_used: str
    within_factor: float          # residual / terminal_error (inf when 0/0)


def verify_control(plan: PropagatorPlan, problem: ControlProblem,
                   solution: ControlSolution) -> ControlCheck:
    """Re-simulate the kicked flow, on an independent engine when affordable."""
    spec = problem.hamiltonian
    engine = plan.engine
    if spec.grid.dofs <= 4096 and plan.engine != "dense":
        engine = "dense"
    elif spec.is_multiplier and plan.engine != "multiplier":
        engine = "multiplier"
    check_plan = PropagatorPlan(spec, engine, dt=plan.dt)
    g = spec.grid
    drift = evolve(check_plan, problem.u0, problem.horizon)
    reached = apply_control(check_plan, problem, solution.h1, solution.h2)
    diff = drift.values + reached.values - problem.u_target.values
    residual = math.sqrt(g.cell_volume * float(np.vdot(diff, diff).real))
    tnorm = l2_norm(problem.u_target)
    sup = 0.0
    for idx, h in ((1, solution.h1), (2, solution.h2)):
        off = (1.0 - problem.mask(idx)) * h.values
        sup = max(sup, math.sqrt(g.cell_volume * float(np.vdot(off, off).real)))
    if solution.terminal_error > 0:
        factor = residual / solution.terminal_error
    else:
        factor = 0.0 if residual == 0 else math.inf
    return ControlCheck(residual, residual / max(tnorm, 1e-300), sup,
                        engine, factor)


def epsilon_path(plan: PropagatorPlan, problem: ControlProblem,
                 epsilons=(1e-2, 1e-4, 1e-6)) -> list[ControlSolution]:
    """Solves along a decreasing regularization ladder (error down, cost up)."""
    eps = list(epsilons)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    return [solve_impulse_control(plan, problem, e) for e in eps]


def cost_constant(plan: PropagatorPlan, problem: ControlProblem,
                  epsilon: float, pairs: int = 5,
                  seed: int = POWER_SEED) -> list:
    """Empirical cost/||y||^2 over random (u0, u_target) pairs, fixed geometry."""
    g = problem.hamiltonian.grid
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(pairs):
        a = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        b = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        ua, ub = Field(g, a), Field(g, b)
        ua = Field(g, ua.values / l2_norm(ua))
        ub = Field(g, ub.values / l2_norm(ub))
        prob = ControlProblem(problem.hamiltonian, ua, ub, problem.tau1,
                              problem.tau2, problem.horizon, problem.radius,
                              problem.sigma, problem.min_time_factor)
        sol = solve_impulse_control(plan, prob, epsilon)
        drift = evolve(plan, ua, problem.horizon)
        yv = ub.values - drift.values
        ynorm2 = g.cell_volume * float(np.vdot(yv, yv).real)
        out.append(sol.cost / ynorm2 if ynorm2 > 0 else 0.0)
    return out
