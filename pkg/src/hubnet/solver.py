"""Primal-dual interior-point solver for structured convex subproblems.

Solves problems of the form

    minimize    0.5 x'Qx + c'x - sum_j w_j * ln(a_j'x + b_j)
    subject to  A x  = b
                G x <= h

with Q positive semidefinite.  The logarithmic terms cover the bargaining
coordinator objective; plain QPs and LPs (Q = 0) cover every other
subproblem.  A Mehrotra-style predictor-corrector handles the inequality
block, and the log terms are folded into the objective derivatives with a
fraction-to-boundary rule keeping their arguments strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

# Static regularization of the KKT system; keeps LP saddle systems invertible.
_KKT_REG = 1e-9
# Fraction-to-boundary factor.
_FTB = 0.99


@dataclass
class LogTerm:
    """A term ``-weight * ln(coeffs @ x + offset)`` in the objective.

    ``floor`` is enforced as an explicit linear inequality
    ``coeffs @ x + offset >= floor`` so converged solutions never dip below
    it, while the iterate path is additionally kept strictly positive.
    """

    weight: float
    coeffs: np.ndarray
    offset: float = 0.0
    floor: float = 1e-9

    def value(self, x: np.ndarray) -> float:
        return float(self.coeffs @ x + self.offset)


@dataclass
class ConvexSubproblem:
    """Sparse data for one convex subproblem.

    ``var_index`` is an optional caller-owned map from variable-group names
    to index arrays; the solver never touches it.
    """

    n: int
    linear: np.ndarray
    quadratic: sp.spmatrix | None = None
    eq_matrix: sp.spmatrix | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: sp.spmatrix | None = None
    ineq_rhs: np.ndarray | None = None
    log_terms: list[LogTerm] = field(default_factory=list)
    var_index: dict | None = None

    def __post_init__(self) -> None:
        self.linear = np.asarray(self.linear, dtype=float)
        if self.linear.shape != (self.n,):
            raise ValueError(f"linear term has shape {self.linear.shape}, expected ({self.n},)")
        if self.quadratic is not None and self.quadratic.shape != (self.n, self.n):
            raise ValueError("quadratic term shape mismatch")
        for name in ("eq", "ineq"):
            mat = getattr(self, f"{name}_matrix")
            rhs = getattr(self, f"{name}_rhs")
            if (mat is None) != (rhs is None):
                raise ValueError(f"{name} matrix and rhs must be given together")
            if mat is not None:
                rhs = np.asarray(rhs, dtype=float)
                setattr(self, f"{name}_rhs", rhs)
                if mat.shape != (rhs.size, self.n):
                    raise ValueError(f"{name} block shape mismatch: {mat.shape} vs rhs {rhs.size}")
        for term in self.log_terms:
            term.coeffs = np.asarray(term.coeffs, dtype=float)
            if term.coeffs.shape != (self.n,):
                raise ValueError("log term coefficient length mismatch")
            if term.weight <= 0.0 or term.floor <= 0.0:
                raise ValueError("log term weight and floor must be positive")

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.linear @ x)
        if self.quadratic is not None:
            val += 0.5 * float(x @ (self.quadratic @ x))
        for term in self.log_terms:
            val -= term.weight * np.log(term.value(x))
        return val


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    primal_inf: float
    dual_inf: float
    comp_gap: float
    iterations: int
    status: str  # "optimal", "max_iter" or "infeasible"

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class SolverError(RuntimeError):
    """Raised when a subproblem cannot be solved to the requested status."""


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest step in [0, 1] keeping v + step*dv >= (1-_FTB)*v."""
    neg = dv < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, _FTB * np.min(-v[neg] / dv[neg])))


def _interior_shift(x: np.ndarray, log_terms: list[LogTerm]) -> np.ndarray:
    """Translate x so every log argument is comfortably positive."""
    x = x.copy()
    for _ in range(2):
        for term in log_terms:
            w = term.value(x)
            target = max(10.0 * term.floor, 1.0)
            if w < target:
                a = term.coeffs
                x += a * ((target - w) / float(a @ a))
    for term in log_terms:
        if term.value(x) <= 0.0:
            raise SolverError("could not find a strictly feasible point for the log terms")
    return x


def solve(
    sub: ConvexSubproblem,
    tol: float = 1e-7,
    max_iter: int = 100,
    warm_start: np.ndarray | None = None,
) -> SolveReport:
    """Solve the subproblem to KKT residual ``tol``.

    The warm start only seeds the primal iterate; it never alters the
    converged solution beyond the tolerance.
    """
    n = sub.n
    c = sub.linear
    Q = sub.quadratic.tocsr() if sub.quadratic is not None else None
    A = sub.eq_matrix.tocsr() if sub.eq_matrix is not None else sp.csr_matrix((0, n))
    b = sub.eq_rhs if sub.eq_rhs is not None else np.zeros(0)
    G = sub.ineq_matrix.tocsr() if sub.ineq_matrix is not None else sp.csr_matrix((0, n))
    h = sub.ineq_rhs if sub.ineq_rhs is not None else np.zeros(0)

    # Floor inequalities for log arguments: -(a'x) <= offset - floor.
    if sub.log_terms:
        floor_rows = sp.csr_matrix(np.array([-t.coeffs for t in sub.log_terms]))
        floor_rhs = np.array([t.offset - t.floor for t in sub.log_terms])
        G = sp.vstack([G, floor_rows], format="csr")
        h = np.concatenate([h, floor_rhs])

    me, mi = A.shape[0], G.shape[0]

    x = np.zeros(n) if warm_start is None else np.asarray(warm_start, dtype=float).copy()
    if x.shape != (n,):
        raise ValueError("warm start has wrong length")
    if sub.log_terms:
        x = _interior_shift(x, sub.log_terms)
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(mi)
    nu = np.zeros(me)

    scale_p = 1.0 + max(
        float(np.max(np.abs(b))) if me else 0.0,
        float(np.max(np.abs(h))) if mi else 0.0,
    )

    def derivatives(x):
        grad = c.copy()
        if Q is not None:
            grad += Q @ x
        hess_rows = []
        for term in sub.log_terms:
            w = term.value(x)
            grad -= (term.weight / w) * term.coeffs
            hess_rows.append((term.weight / w**2, term.coeffs))
        return grad, hess_rows

    best_primal = np.inf
    stall = 0
    status = "max_iter"
    iteration = 0
    r_p_norm = r_d_norm = gap = np.inf

    # Augmented KKT system over (dx, dnu, dz):
    #   [Q_eff  A'  G' ] [dx ]   [-r_d             ]
    #   [A     -dI  0  ] [dnu] = [-r_p_eq          ]
    #   [G      0  -S/Z] [dz ]   [-r_i + r_comp / z]
    # Without log terms the pattern and all blocks except the S/Z diagonal
    # are constant, so the template is assembled once and patched in place.
    def assemble_kkt(Q_blk, sz_diag):
        rows = [[Q_blk]]
        if me:
            rows[0].append(A.T)
        if mi:
            rows[0].append(G.T)
        if me:
            row = [A, -_KKT_REG * sp.eye(me)]
            if mi:
                row.append(None)
            rows.append(row)
        if mi:
            row = [G]
            if me:
                row.append(None)
            row.append(-sp.diags(sz_diag))
            rows.append(row)
        return sp.bmat(rows, format="csc")

    def positions(mat: sp.csc_matrix, row_idx: np.ndarray, col_idx: np.ndarray) -> np.ndarray:
        pos = np.empty(row_idx.size, dtype=np.int64)
        for k, (r, c) in enumerate(zip(row_idx, col_idx)):
            lo, hi = mat.indptr[c], mat.indptr[c + 1]
            p = lo + int(np.searchsorted(mat.indices[lo:hi], r))
            if p >= hi or mat.indices[p] != r:
                raise SolverError("KKT template is missing a structural entry")
            pos[k] = p
        return pos

    # Assemble the template once; per iteration only the slack diagonal and
    # (when present) the log-term Hessian entries are patched in place.
    Q_blk = (Q if Q is not None else sp.csr_matrix((n, n))) + _KKT_REG * sp.eye(n)
    log_supports = [np.nonzero(t.coeffs)[0] for t in sub.log_terms]
    if sub.log_terms:
        # Subnormal markers keep the pattern entries from being pruned by
        # sparse arithmetic; they are numerically invisible.
        patterns = [
            sp.coo_matrix(
                (np.full(ai.size * ai.size, 1e-300), (np.repeat(ai, ai.size), np.tile(ai, ai.size))),
                shape=(n, n),
            )
            for ai in log_supports
        ]
        Q_blk = sum(patterns, Q_blk.tocoo()).tocsr()
    template = assemble_kkt(Q_blk, np.ones(mi))
    base_data = template.data.copy()
    slack_diag_pos = None
    if mi:
        slack_diag_pos = positions(
            template,
            np.arange(n + me, n + me + mi),
            np.arange(n + me, n + me + mi),
        )
    log_positions = [
        positions(template, np.repeat(ai, ai.size), np.tile(ai, ai.size)) for ai in log_supports
    ]

    AT = A.T.tocsr() if me else None
    GT = G.T.tocsr() if mi else None

    scale_d = 1.0
    for iteration in range(1, max_iter + 1):
        grad, hess_rows = derivatives(x)
        at_nu = AT @ nu if me else np.zeros(n)
        gt_z = GT @ z if mi else np.zeros(n)
        r_d = grad + at_nu + gt_z
        r_p_eq = A @ x - b if me else np.zeros(0)
        r_p_in = G @ x + s - h if mi else np.zeros(0)
        gap = float(s @ z) / mi if mi else 0.0
        r_d_norm = float(np.max(np.abs(r_d))) if n else 0.0
        r_p_norm = max(
            float(np.max(np.abs(r_p_eq))) if me else 0.0,
            float(np.max(np.abs(r_p_in))) if mi else 0.0,
        )
        # Relative measures: the dual residual is compared against the
        # magnitude of the stationarity terms it is the sum of, the
        # complementarity gap against the objective scale.
        scale_d = 1.0 + max(
            float(np.max(np.abs(grad))) if n else 0.0,
            float(np.max(np.abs(at_nu))) if n else 0.0,
            float(np.max(np.abs(gt_z))) if n else 0.0,
        )
        scale_gap = 1.0 + abs(float(c @ x)) if n else 1.0
        if r_d_norm <= tol * scale_d and r_p_norm <= tol * scale_p and gap <= tol * scale_gap:
            status = "optimal"
            break

        # Practical infeasibility tests: diverging duals / collapsing slacks,
        # or complementarity collapsed while the primal residual stopped
        # improving far above tolerance.
        diverged = not np.isfinite(r_d_norm + r_p_norm + gap)
        if mi and r_p_norm > 10.0 * tol * scale_p:
            diverged = diverged or float(np.max(z)) > 1e13 or float(np.min(s)) < 1e-15
        if diverged:
            status = "infeasible"
            break
        if r_p_norm < best_primal * (1.0 - 1e-3):
            best_primal = r_p_norm
            stall = 0
        else:
            stall += 1
        if gap <= 1e-10 * scale_d and r_p_norm > 1e3 * tol * scale_p and stall >= 10:
            status = "infeasible"
            break

        kkt = template
        if sub.log_terms:
            kkt.data[:] = base_data
        for (wgt, a_vec), ai, pos in zip(hess_rows, log_supports, log_positions):
            np.add.at(kkt.data, pos, wgt * np.outer(a_vec[ai], a_vec[ai]).ravel())
        if mi:
            kkt.data[slack_diag_pos] = -(s / z) - _KKT_REG
        try:
            lu = splu(kkt)
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"KKT factorization failed: {exc}") from None

        def newton_step(r_comp):
            rhs = np.concatenate([-r_d, -r_p_eq, -r_p_in + (r_comp / z if mi else np.zeros(0))])
            sol = lu.solve(rhs)
            dx = sol[:n]
            dnu = sol[n : n + me]
            dz = sol[n + me :]
            ds = (-r_comp - s * dz) / z if mi else np.zeros(0)
            return dx, dnu, ds, dz

        def log_step_limit(dx):
            alpha = 1.0
            for term in sub.log_terms:
                dw = float(term.coeffs @ dx)
                if dw < 0.0:
                    alpha = min(alpha, _FTB * term.value(x) / (-dw))
            return alpha

        if mi:
            # Predictor.
            dx, dnu, ds, dz = newton_step(s * z)
            a_p = min(_max_step(s, ds), log_step_limit(dx))
            a_d = _max_step(z, dz)
            gap_aff = float((s + a_p * ds) @ (z + a_d * dz)) / mi
            sigma = min(0.9, max(1e-6, (gap_aff / gap) ** 3)) if gap > 0 else 0.1
            # Corrector.
            r_comp = s * z + ds * dz - sigma * gap
            dx, dnu, ds, dz = newton_step(r_comp)
            a_p = min(_max_step(s, ds), log_step_limit(dx))
            a_d = _max_step(z, dz)
        else:
            dx, dnu, ds, dz = newton_step(np.zeros(0))
            a_p = min(1.0, log_step_limit(dx))
            a_d = a_p

        if a_p < 1e-13 and a_d < 1e-13:
            status = "infeasible" if r_p_norm > 1e3 * tol * scale_p else "max_iter"
            break

        x += a_p * dx
        s += a_p * ds
        nu += a_d * dnu
        z += a_d * dz

    return SolveReport(
        x=x,
        objective=sub.objective_value(x),
        primal_inf=r_p_norm,
        dual_inf=r_d_norm,
        comp_gap=gap,
        iterations=iteration,
        status=status,
    )


def solve_or_raise(sub: ConvexSubproblem, context: str = "", **kwargs) -> SolveReport:
    """``solve`` that raises :class:`SolverError` on a non-optimal status."""
    report = solve(sub, **kwargs)
    if not report.ok:
        where = f" ({context})" if context else ""
        raise SolverError(
            f"subproblem{where} terminated with status {report.status!r}: "
            f"primal_inf={report.primal_inf:.3e} dual_inf={report.dual_inf:.3e}"
        )
    return report
