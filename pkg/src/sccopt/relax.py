"""Assembly of the continuous relaxation: hydraulic rows, big-M valve rows,
valve-count rows, envelope cuts, relaxed binaries, and the sigma-reformulated
objective.  Solving the result gives the SCC upper bound and the fractional
placements that seed the sampler.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import envelopes
from .errors import InconsistentBounds
from .hydraulics import HeadLossParams, phi
from .lp import EQ, LEQ, LpBuilder, LinearProgram, LpSolution, OPTIMAL
from .netmodel import NetworkModel
from .scc import SccParams


@dataclass(frozen=True)
class VariableMap:
    """Column index ranges of the assembled LP."""

    n_p: int
    n_n: int
    n_t: int

    def _block(self, t: int) -> int:
        return t * (3 * self.n_p + 2 * self.n_n + 4 * self.n_p)

    def q(self, t):
        return self._block(t) + np.arange(self.n_p)

    def h(self, t):
        return self._block(t) + self.n_p + np.arange(self.n_n)

    def eta(self, t):
        return self._block(t) + self.n_p + self.n_n + np.arange(self.n_p)

    def theta(self, t):
        return self._block(t) + 2 * self.n_p + self.n_n + np.arange(self.n_p)

    def alpha(self, t):
        return self._block(t) + 3 * self.n_p + self.n_n + np.arange(self.n_n)

    def sigma_pos(self, t):
        return self._block(t) + 3 * self.n_p + 2 * self.n_n + np.arange(self.n_p)

    def sigma_neg(self, t):
        return self._block(t) + 4 * self.n_p + 2 * self.n_n + np.arange(self.n_p)

    def v_pos(self, t):
        return self._block(t) + 5 * self.n_p + 2 * self.n_n + np.arange(self.n_p)

    def v_neg(self, t):
        return self._block(t) + 6 * self.n_p + 2 * self.n_n + np.arange(self.n_p)

    @property
    def z(self):
        return self._block(self.n_t) + np.arange(self.n_p)

    @property
    def y(self):
        return self._block(self.n_t) + self.n_p + np.arange(self.n_n)

    @property
    def total(self) -> int:
        return self._block(self.n_t) + self.n_p + self.n_n


@dataclass
class BoundSet:
    """Variable bounds for the relaxation; arrays are (n_t, n_p) / (n_t, n_n)."""

    q_lo: np.ndarray
    q_hi: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    eta_lo: np.ndarray
    eta_hi: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    alpha_hi: float

    def refresh_theta(self, params: HeadLossParams):
        """theta bounds follow the flow bounds through the monotone loss law."""
        self.theta_lo = np.vstack([phi(row, params) for row in self.q_lo])
        self.theta_hi = np.vstack([phi(row, params) for row in self.q_hi])

    def copy(self) -> "BoundSet":
        return BoundSet(self.q_lo.copy(), self.q_hi.copy(), self.h_lo.copy(),
                        self.h_hi.copy(), self.eta_lo.copy(), self.eta_hi.copy(),
                        self.theta_lo.copy(), self.theta_hi.copy(), self.alpha_hi)


def default_bounds(
    net: NetworkModel,
    params: HeadLossParams,
    u_max=3.0,
    p_min: float = 15.0,
    alpha_max: float = 0.025,
) -> BoundSet:
    """Initial bounds: flows capped by u_max, heads by the regulatory minimum
    and the largest known source head."""
    u_cap = np.broadcast_to(np.asarray(u_max, dtype=float), (net.n_p,))
    q_hi1 = net.areas * u_cap
    q_lo = np.tile(-q_hi1, (net.n_t, 1))
    q_hi = np.tile(q_hi1, (net.n_t, 1))

    h_cap = float(np.max(net.source_heads))
    has_demand = np.any(net.demands > 0, axis=0)
    h_lo1 = net.elevations + np.where(has_demand, p_min, 0.0)
    h_lo = np.tile(h_lo1, (net.n_t, 1))
    h_hi = np.full((net.n_t, net.n_n), h_cap)
    if np.any(h_lo > h_hi):
        raise InconsistentBounds("minimum head exceeds largest source head")

    eta_lo = np.zeros((net.n_t, net.n_p))
    eta_hi = np.zeros((net.n_t, net.n_p))
    for t in range(net.n_t):
        for j, lk in enumerate(net.links):
            lo_f, hi_f = _node_head_range(net, lk.from_node, t, h_lo1, h_cap)
            lo_t, hi_t = _node_head_range(net, lk.to_node, t, h_lo1, h_cap)
            eta_lo[t, j] = lo_f - hi_t
            eta_hi[t, j] = hi_f - lo_t

    bounds = BoundSet(q_lo, q_hi, h_lo, h_hi, eta_lo, eta_hi,
                      np.zeros_like(q_lo), np.zeros_like(q_hi), float(alpha_max))
    bounds.refresh_theta(params)
    return bounds


def _node_head_range(net, node_id, t, h_lo1, h_cap):
    if node_id in net._node_index:
        return h_lo1[net.node_index(node_id)], h_cap
    h0 = net.source_heads[t, net._source_index[node_id]]
    return h0, h0


@dataclass(frozen=True)
class DesignConfig:
    """Valve-count targets and candidate location sets."""

    n_v: int = 0
    n_f: int = 0
    prv_links: tuple[int, ...] = ()
    existing_dbv_links: tuple[int, ...] = ()
    dbv_candidates: tuple[int, ...] | None = None
    afv_candidates: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_v < 0 or self.n_f < 0:
            raise ValueError("valve counts must be non-negative")
        if set(self.prv_links) & set(self.existing_dbv_links):
            raise ValueError("a link cannot be both PRV and DBV")

    @classmethod
    def from_network(cls, net: NetworkModel, n_v: int = 0, n_f: int = 0,
                     dbv_candidates=None, afv_candidates=None) -> "DesignConfig":
        prv = tuple(j for j, lk in enumerate(net.links) if lk.is_existing_prv)
        dbv = tuple(j for j, lk in enumerate(net.links) if lk.is_existing_dbv)
        return cls(n_v, n_f, prv, dbv,
                   None if dbv_candidates is None else tuple(dbv_candidates),
                   None if afv_candidates is None else tuple(afv_candidates))

    def fixed_links(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.prv_links) | set(self.existing_dbv_links)))

    def resolved_dbv_candidates(self, net: NetworkModel) -> tuple[int, ...]:
        if self.dbv_candidates is not None:
            cand = set(self.dbv_candidates) - set(self.fixed_links())
        else:
            cand = set(range(net.n_p)) - set(self.fixed_links())
        return tuple(sorted(cand))

    def resolved_afv_candidates(self, net: NetworkModel) -> tuple[int, ...]:
        if self.afv_candidates is not None:
            return tuple(sorted(self.afv_candidates))
        return tuple(range(net.n_n))


def build_lp(
    net: NetworkModel,
    params: HeadLossParams,
    scc_params: SccParams,
    bounds: BoundSet,
    design: DesignConfig,
) -> tuple[LinearProgram, VariableMap]:
    """Assemble the continuous relaxation as a single LP."""
    vmap = VariableMap(net.n_p, net.n_n, net.n_t)
    bld = LpBuilder(vmap.total)
    areas = net.areas
    A12 = net.A12.tocoo()
    z_idx, y_idx = vmap.z, vmap.y

    dbv_cand = set(design.resolved_dbv_candidates(net))
    afv_cand = set(design.resolved_afv_candidates(net))
    fixed = design.fixed_links()

    for t in range(net.n_t):
        q_idx, h_idx = vmap.q(t), vmap.h(t)
        eta_idx, th_idx = vmap.eta(t), vmap.theta(t)
        a_idx = vmap.alpha(t)
        sp_idx, sm_idx = vmap.sigma_pos(t), vmap.sigma_neg(t)
        vp_idx, vm_idx = vmap.v_pos(t), vmap.v_neg(t)

        # mass: A12^T q - alpha = d
        cols_by_node = [[] for _ in range(net.n_n)]
        vals_by_node = [[] for _ in range(net.n_n)]
        for j, i, v in zip(A12.row, A12.col, A12.data):
            cols_by_node[i].append(q_idx[j])
            vals_by_node[i].append(v)
        for i in range(net.n_n):
            bld.add_row(cols_by_node[i] + [a_idx[i]], vals_by_node[i] + [-1.0],
                        EQ, net.demands[t, i])

        # energy: A12 h + theta + eta = -A10 h0
        rhs_e = -(net.A10 @ net.source_heads[t])
        rows_by_link = [[] for _ in range(net.n_p)]
        valr_by_link = [[] for _ in range(net.n_p)]
        for j, i, v in zip(A12.row, A12.col, A12.data):
            rows_by_link[j].append(h_idx[i])
            valr_by_link[j].append(v)
        for j in range(net.n_p):
            bld.add_row(rows_by_link[j] + [th_idx[j], eta_idx[j]],
                        valr_by_link[j] + [1.0, 1.0], EQ, rhs_e[j])

        for j in range(net.n_p):
            q_lo, q_hi = bounds.q_lo[t, j], bounds.q_hi[t, j]
            th_lo, th_hi = bounds.theta_lo[t, j], bounds.theta_hi[t, j]
            e_lo, e_hi = bounds.eta_lo[t, j], bounds.eta_hi[t, j]
            u_min = float(scc_params.u_min[j])

            # envelope cuts for the sigmoid terms, built in velocity space
            u_lo, u_hi = q_lo / areas[j], q_hi / areas[j]
            cuts_p, cuts_m = envelopes.sigmoid_envelope(scc_params.rho, u_min, u_lo, u_hi)
            for c in cuts_p:
                cc = c.scaled_q(1.0 / areas[j])
                bld.add_row([q_idx[j], sp_idx[j]], [cc.coeff_q, cc.coeff_aux], LEQ, cc.rhs)
            for c in cuts_m:
                cc = c.scaled_q(1.0 / areas[j])
                bld.add_row([q_idx[j], sm_idx[j]], [cc.coeff_q, cc.coeff_aux], LEQ, cc.rhs)

            # polyhedral sandwich of the head-loss curve
            lower, upper = envelopes.hw_envelope(params.r[j], params.n_exp[j], q_lo, q_hi)
            for c in lower + upper:
                bld.add_row([q_idx[j], th_idx[j]], [c.coeff_q, c.coeff_aux], LEQ, c.rhs)

            # big-M valve activation rows
            bld.add_row([eta_idx[j], vp_idx[j]], [1.0, -e_hi], LEQ, 0.0)
            bld.add_row([eta_idx[j], vm_idx[j]], [-1.0, e_lo], LEQ, 0.0)
            bld.add_row([q_idx[j], vp_idx[j]], [-1.0, -q_lo], LEQ, -q_lo)
            bld.add_row([q_idx[j], vm_idx[j]], [1.0, q_hi], LEQ, q_hi)
            bld.add_row([th_idx[j], vp_idx[j]], [-1.0, -th_lo], LEQ, -th_lo)
            bld.add_row([th_idx[j], vm_idx[j]], [1.0, th_hi], LEQ, th_hi)

            # one control direction per timestep
            bld.add_row([vp_idx[j], vm_idx[j], z_idx[j]], [1.0, 1.0, -1.0], LEQ, 0.0)

            bld.set_bounds(q_idx[j], q_lo, q_hi)
            bld.set_bounds(eta_idx[j], e_lo, e_hi)
            bld.set_bounds(th_idx[j], th_lo, th_hi)
            bld.set_bounds(sp_idx[j], 0.0, 1.0)
            bld.set_bounds(sm_idx[j], 0.0, 1.0)
            bld.set_bounds(vp_idx[j], 0.0, 1.0)
            bld.set_bounds(vm_idx[j], 0.0, 1.0)

        for i in range(net.n_n):
            # flushing only where an AFV is placed
            bld.add_row([a_idx[i], y_idx[i]], [1.0, -bounds.alpha_hi], LEQ, 0.0)
            bld.set_bounds(h_idx[i], bounds.h_lo[t, i], bounds.h_hi[t, i])
            bld.set_bounds(a_idx[i], 0.0, bounds.alpha_hi)

        # existing PRVs are unidirectional; their direction is pinned
        for j in design.prv_links:
            bld.set_bounds(vp_idx[j], 1.0, 1.0)
            bld.set_bounds(vm_idx[j], 0.0, 0.0)

        # objective: maximize the mean weighted sigma mass
        for j in range(net.n_p):
            bld.c[sp_idx[j]] = -scc_params.weights[j] / net.n_t
            bld.c[sm_idx[j]] = -scc_params.weights[j] / net.n_t

    # placement variables and count constraints
    for j in range(net.n_p):
        if j in fixed:
            bld.set_bounds(z_idx[j], 1.0, 1.0)
        elif j in dbv_cand:
            bld.set_bounds(z_idx[j], 0.0, 1.0)
        else:
            bld.set_bounds(z_idx[j], 0.0, 0.0)
    for i in range(net.n_n):
        bld.set_bounds(y_idx[i], 0.0, 1.0 if i in afv_cand else 0.0)

    bld.add_row(z_idx, np.ones(net.n_p), EQ, design.n_v + len(fixed))
    bld.add_row(y_idx, np.ones(net.n_n), EQ, design.n_f)

    return bld.build(), vmap


def extract_fractional(sol: LpSolution, vmap: VariableMap, design: DesignConfig):
    """Fractional placements (fixed valves zeroed out) and the eta seed."""
    if sol.status != OPTIMAL:
        raise ValueError(f"LP solution status is {sol.status}")
    z = np.clip(sol.x[vmap.z], 0.0, None)
    y = np.clip(sol.x[vmap.y], 0.0, None)
    z[list(design.fixed_links())] = 0.0
    eta0 = np.vstack([sol.x[vmap.eta(t)] for t in range(vmap.n_t)])
    return y, z, eta0


def lp_bound(sol: LpSolution) -> float:
    """Upper bound on the achievable smoothed SCC (fraction in [0, 1])."""
    if sol.status != OPTIMAL:
        raise ValueError(f"LP solution status is {sol.status}")
    return -sol.objective
