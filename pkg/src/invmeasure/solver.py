"""Finite conic programs for the order-k relaxation and an embedded solver.

The program is: minimize a convex quadratic or linear F(y) subject to linear
equalities (invariance rows plus normalization), PSD constraints on matrices
affine in y, and optional scalar inequalities.  The solver is a deterministic
ADMM-style operator splitting: a KKT system factorized once handles the
equality-constrained quadratic step, slack matrices are projected onto the
PSD cone by symmetric eigendecomposition, and scaled dual variables close the
loop.  There is no randomness anywhere, so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .indexing import num_indices
from .invariance import (
    MARKOV_DISCRETE,
    PF_EIGEN,
    PF_STACKS,
    EqualityBlock,
    SystemModel,
    invariance_rows,
)
from .moment import LinearMatrixMap, MomentVector, localizing_matrix
from .objective import (
    AbsContinuity,
    CompiledObjective,
    ObjectiveSpec,
    TraceBound,
    abs_continuity_block,
    compile_objective,
    trace_bound_row,
)
from .polynomial import MONOMIAL, Polynomial

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"


def project_psd(M: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by eigenvalue clamping."""
    S = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(S)
    if w[0] >= 0.0:
        return S
    wp = np.clip(w, 0.0, None)
    return (V * wp) @ V.T


@dataclass
class PSDBlock:
    map: LinearMatrixMap
    offset: np.ndarray | None
    label: str

    def matrix(self, y: np.ndarray) -> np.ndarray:
        M = self.map.evaluate(y)
        if self.offset is not None:
            M = M + self.offset
        return M


@dataclass
class ConicProgram:
    nvar: int
    n: int
    basis: str
    kind: str
    k: int
    d_k: int
    stacks: int
    eq_rows: list[dict[int, float]]
    eq_rhs: list[float]
    psd_blocks: list[PSDBlock]
    scalar_ineqs: list[tuple[dict[int, float], float]]
    objective: CompiledObjective
    meta: dict = field(default_factory=dict)

    @property
    def stack_length(self) -> int:
        return self.nvar // self.stacks

    def equality_matrix(self):
        E = np.zeros((len(self.eq_rows), self.nvar))
        for i, row in enumerate(self.eq_rows):
            for m, c in row.items():
                E[i, m] = c
        return E, np.asarray(self.eq_rhs, dtype=float)

    def residuals_at(self, y: np.ndarray) -> dict:
        """Constraint residuals of a candidate vector (no solving involved)."""
        E, e = self.equality_matrix()
        eq = float(np.max(np.abs(E @ y - e))) if len(e) else 0.0
        psd_min = 0.0
        for blk in self.psd_blocks:
            M = blk.matrix(y)
            w = np.linalg.eigvalsh(0.5 * (M + M.T))
            psd_min = min(psd_min, float(w[0]))
        ineq = 0.0
        for row, ub in self.scalar_ineqs:
            val = sum(c * y[m] for m, c in row.items())
            ineq = max(ineq, val - ub)
        return {"equality": eq, "psd_min_eig": psd_min, "inequality": ineq}


def assemble(
    model: SystemModel,
    k: int,
    objective: ObjectiveSpec,
    frame=None,
    degree_cap: int | None = None,
) -> ConicProgram:
    """Build the order-k relaxation for a system model.

    ``frame`` (a :class:`~invmeasure.moment.UserFrame`) lowers objective
    indices given in user monomial coordinates onto the scaled working-basis
    variables; without it, indices address the program coordinates directly.
    """
    block: EqualityBlock = invariance_rows(model, k, degree_cap)
    d_k = block.d_k
    n = model.n
    L = block.nvar_per_stack
    stacks = block.stacks
    nvar = block.nvar_total

    eq_rows = [dict(r) for r in block.rows]
    eq_rhs = [0.0] * len(eq_rows)
    # normalization: total mass one (summed over stacks for eigenmeasure mode)
    eq_rows.append({s * L: 1.0 for s in range(stacks)})
    eq_rhs.append(1.0)

    psd_blocks: list[PSDBlock] = []
    gs = model.state_set.all_inequalities()
    labels = (
        ["moment"]
        + [f"g{i + 1}" for i in range(len(gs) - 2)]
        + ["ball"]
    )
    for g, label in zip(gs, labels):
        g_work = g.change_basis(model.basis) if g.basis != model.basis else g
        base = localizing_matrix(g_work, d_k, nvar=L)
        if stacks == 1:
            psd_blocks.append(PSDBlock(base, None, label))
        else:
            for s, name in enumerate(PF_STACKS):
                psd_blocks.append(
                    PSDBlock(base.shift_variables(s * L, nvar), None, f"{label}:{name}")
                )

    scalar_ineqs: list[tuple[dict[int, float], float]] = []
    for addon in objective.addons:
        if stacks != 1:
            raise ValueError("objective add-ons are not supported in eigenmeasure mode")
        if isinstance(addon, AbsContinuity):
            d = addon.degree
            if addon.z.n != n or addon.z.basis != model.basis:
                raise ValueError("reference moments must match the model conventions")
            amap, offset = abs_continuity_block(addon.z, addon.gamma, d, nvar=L)
            psd_blocks.append(PSDBlock(amap, offset, "abs_continuity"))
        elif isinstance(addon, TraceBound):
            row, ub = trace_bound_row(n, model.basis, addon.gamma, addon.degree)
            scalar_ineqs.append((row, ub))
        else:
            raise TypeError(f"unknown objective add-on {addon!r}")

    row_fn = frame.monomial_row if frame is not None else None
    compiled = compile_objective(objective, nvar, d_k, row_fn=row_fn)

    return ConicProgram(
        nvar=nvar,
        n=n,
        basis=model.basis,
        kind=model.kind,
        k=k,
        d_k=d_k,
        stacks=stacks,
        eq_rows=eq_rows,
        eq_rhs=eq_rhs,
        psd_blocks=psd_blocks,
        scalar_ineqs=scalar_ineqs,
        objective=compiled,
        meta={"invariance_rows": len(block.rows)},
    )


@dataclass
class SolverOptions:
    eps_primal: float = 1e-7
    eps_dual: float = 1e-7
    eps_psd: float = 1e-8
    max_iters: int = 200_000
    rho: float = 1.0
    over_relaxation: float = 1.6
    # Deterministic tie-breaking: a tiny ridge makes the quadratic step
    # strictly convex and selects the minimum-norm point of a flat optimal
    # face.  Reported objective values never include it.
    tie_break_ridge: float = 1e-6
    check_every: int = 10
    infeasibility_window: int = 2000


@dataclass
class SolveResult:
    y: np.ndarray
    objective_value: float
    status: str
    residuals: dict
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def moment_vector(self, program: ConicProgram, stack: int = 0) -> MomentVector:
        L = program.stack_length
        return MomentVector(
            program.n, program.basis, program.d_k, self.y[stack * L : (stack + 1) * L]
        )


def _prepared_equalities(program: ConicProgram):
    """Row-normalized, SVD-orthonormalized equality system.

    Returns (E_reduced, e_reduced, consistent, E_norm, e_norm).  Dependent
    rows are folded away; inconsistent systems are flagged.
    """
    E, e = program.equality_matrix()
    norms = np.linalg.norm(E, axis=1)
    keep = norms > 0.0
    bad = ~keep & (np.abs(e) > 1e-12)
    if bad.any():
        return None, None, False, E, e
    E, e, norms = E[keep], e[keep], norms[keep]
    if len(e) == 0:
        return np.zeros((0, program.nvar)), np.zeros(0), True, E, e
    En = E / norms[:, None]
    en = e / norms
    U, s, Vt = np.linalg.svd(En, full_matrices=False)
    tol = max(En.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    r = int(np.sum(s > tol))
    E_red = Vt[:r]
    e_red = (U[:, :r].T @ en) / s[:r]
    # consistency of the dropped directions
    resid = en - U[:, :r] @ (U[:, :r].T @ en)
    consistent = np.linalg.norm(resid) <= 1e-9 * max(1.0, np.linalg.norm(en))
    return E_red, e_red, consistent, En, en


def solve(program: ConicProgram, options: SolverOptions | None = None) -> SolveResult:
    """Deterministic operator-splitting solve of the assembled program."""
    opts = options or SolverOptions()
    nvar = program.nvar

    E_red, e_red, consistent, En, en = _prepared_equalities(program)
    if not consistent:
        return SolveResult(
            y=np.zeros(nvar),
            objective_value=float("nan"),
            status=INFEASIBLE,
            residuals={"equality": float("inf"), "dual": float("inf"), "gap": float("inf")},
            iterations=0,
            info={"reason": "inconsistent equality constraints"},
        )

    blocks = list(program.psd_blocks)
    for row, ub in program.scalar_ineqs:
        m = LinearMatrixMap(1, nvar, {(0, 0): {k: -c for k, c in row.items()}})
        blocks.append(PSDBlock(m, np.array([[ub]]), "scalar_ineq"))

    P, q, _ = program.objective.quadratic_terms()
    ridge = opts.tie_break_ridge
    if ridge > 0:
        P = P + 2.0 * ridge * np.eye(nvar)

    sizes = [b.map.size for b in blocks]
    seg = np.concatenate([[0], np.cumsum([s * s for s in sizes])]).astype(int)
    total = int(seg[-1])

    if total == 0:
        # equality-constrained quadratic program; one KKT solve suffices
        y = _kkt_solve_direct(P, q, E_red, e_red)
        res = program.residuals_at(y)
        status = OPTIMAL if res["equality"] <= opts.eps_primal * 10 else MAX_ITERS
        return SolveResult(
            y=y,
            objective_value=program.objective.value(y),
            status=status,
            residuals={"primal": res["equality"], "dual": 0.0, "gap": 0.0, **res},
            iterations=1,
            info={"ridge": ridge, "uniqueness_assumed": False},
        )

    Phi = sp.vstack([b.map.as_vec_operator() for b in blocks], format="csr")
    PhiT = Phi.T.tocsr()
    bvec = np.zeros(total)
    for j, blk in enumerate(blocks):
        if blk.offset is not None:
            bvec[seg[j] : seg[j + 1]] = blk.offset.ravel()

    rho = opts.rho
    G = (PhiT @ Phi).toarray()
    H = P + rho * G
    r_eq = E_red.shape[0]
    K = np.zeros((nvar + r_eq, nvar + r_eq))
    K[:nvar, :nvar] = H
    K[:nvar, nvar:] = E_red.T
    K[nvar:, :nvar] = E_red
    lu, piv = sla.lu_factor(K)

    z = np.zeros(total)
    u = np.zeros(total)
    alpha = opts.over_relaxation

    iters = 0
    r_norm = s_norm = float("inf")
    obj_prev = float("inf")
    gap = float("inf")
    r_window_best = float("inf")
    u_window_norm = 0.0
    status = MAX_ITERS

    rhs = np.empty(nvar + r_eq)
    rhs[nvar:] = e_red

    scale_b = max(1.0, float(np.linalg.norm(bvec)))

    while iters < opts.max_iters:
        iters += 1
        rhs[:nvar] = rho * (PhiT @ (z - u - bvec)) - q
        sol = sla.lu_solve((lu, piv), rhs)
        y = sol[:nvar]

        w = Phi @ y + bvec
        w_hat = alpha * w + (1.0 - alpha) * z
        z_old = z
        z = np.empty_like(z_old)
        v = w_hat + u
        for j in range(len(blocks)):
            s0, s1 = seg[j], seg[j + 1]
            size = sizes[j]
            z[s0:s1] = project_psd(v[s0:s1].reshape(size, size)).ravel()
        u = u + w_hat - z

        if iters % opts.check_every == 0 or iters == opts.max_iters:
            r_vec = w - z
            r_norm = float(np.linalg.norm(r_vec))
            s_norm = rho * float(np.linalg.norm(PhiT @ (z - z_old)))
            obj = program.objective.value(y)
            gap = abs(obj - obj_prev)
            obj_prev = obj
            eps_pri = np.sqrt(total) * opts.eps_primal + opts.eps_primal * max(
                float(np.linalg.norm(w)), float(np.linalg.norm(z)), scale_b
            )
            eps_dua = np.sqrt(nvar) * opts.eps_dual + opts.eps_dual * rho * float(
                np.linalg.norm(PhiT @ u)
            )
            if r_norm <= eps_pri and s_norm <= eps_dua:
                # consensus converged; stop only once the blocks evaluated at
                # y itself clear the PSD tolerance (first-order iterates lag
                # the projected slacks by roughly the primal residual)
                if _blocks_psd_ok(blocks, y, opts.eps_psd):
                    status = OPTIMAL
                    break
            # crude divergence screen: primal residual stalls while the dual
            # variable keeps growing without bound
            if iters % opts.infeasibility_window == 0:
                u_norm = float(np.linalg.norm(u))
                if (
                    iters >= 4 * opts.infeasibility_window
                    and r_norm > 1e-4 * max(1.0, scale_b)
                    and r_norm > 0.97 * r_window_best
                    and u_norm > 2.0 * max(u_window_norm, 1e3)
                ):
                    status = INFEASIBLE
                    break
                r_window_best = min(r_window_best, r_norm)
                u_window_norm = float(np.linalg.norm(u))

    res = program.residuals_at(y)
    residuals = {
        "primal": r_norm,
        "dual": s_norm,
        "gap": gap,
        **res,
    }
    return SolveResult(
        y=y,
        objective_value=program.objective.value(y),
        status=status,
        residuals=residuals,
        iterations=iters,
        info={"ridge": ridge, "rho": rho, "uniqueness_assumed": False},
    )


def _blocks_psd_ok(blocks, y, eps_psd) -> bool:
    """Per-block check: lambda_min >= -eps_psd * max(1, ||S||_F) at y."""
    for blk in blocks:
        S = blk.matrix(y)
        S = 0.5 * (S + S.T)
        w = np.linalg.eigvalsh(S)
        if w[0] < -eps_psd * max(1.0, float(np.linalg.norm(S))):
            return False
    return True


def _kkt_solve_direct(P, q, E_red, e_red):
    nvar = len(q)
    r = E_red.shape[0]
    K = np.zeros((nvar + r, nvar + r))
    K[:nvar, :nvar] = P
    K[:nvar, nvar:] = E_red.T
    K[nvar:, :nvar] = E_red
    rhs = np.concatenate([-q, e_red])
    sol = np.linalg.solve(K, rhs)
    return sol[:nvar]


def dump_program(program: ConicProgram) -> str:
    """Serialize the program in a plain sparse text format.

    Layout: a header, the objective, equality triplets ``E row col coef`` with
    right-hand sides ``e row value``, one ``psd_block`` section per block with
    map triplets ``A i j midx coef`` and offsets ``B i j value``, and scalar
    inequality sections.  Everything an external solver needs to cross-check.
    """
    out = []
    out.append("conic-program v1")
    out.append(
        f"meta kind={program.kind} k={program.k} d_k={program.d_k} "
        f"basis={program.basis} stacks={program.stacks}"
    )
    out.append(f"nvar {program.nvar}")
    obj = program.objective
    out.append(f"objective {obj.kind}")
    if obj.kind == "least_squares":
        for i in range(obj.rows.shape[0]):
            for m in np.nonzero(obj.rows[i])[0]:
                out.append(f"C {i} {m} {obj.rows[i, m]!r}")
            out.append(f"z {i} {obj.targets[i]!r}")
    elif obj.kind == "linear":
        for m in np.nonzero(obj.linear)[0]:
            out.append(f"c {m} {obj.linear[m]!r}")
    out.append(f"equalities {len(program.eq_rows)}")
    for i, row in enumerate(program.eq_rows):
        for m in sorted(row):
            out.append(f"E {i} {m} {row[m]!r}")
        out.append(f"e {i} {program.eq_rhs[i]!r}")
    for j, blk in enumerate(program.psd_blocks):
        out.append(f"psd_block {j} size {blk.map.size} label {blk.label}")
        for i, jj, m, c in blk.map.to_triplets():
            out.append(f"A {i} {jj} {m} {c!r}")
        if blk.offset is not None:
            for i in range(blk.map.size):
                for jj in range(blk.map.size):
                    if blk.offset[i, jj] != 0.0:
                        out.append(f"B {i} {jj} {blk.offset[i, jj]!r}")
    for idx, (row, ub) in enumerate(program.scalar_ineqs):
        out.append(f"scalar_ineq {idx} ub {ub!r}")
        for m in sorted(row):
            out.append(f"S {m} {row[m]!r}")
    return "\n".join(out) + "\n"
