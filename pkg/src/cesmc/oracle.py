"""Exact analysis of small models on the explicit embedded chain.

``exact_probability`` handles properties whose boolean connectives sit on
state formulas, with ``X``, ``U``, ``F`` and negation on top. Until is
solved by value iteration (least fixed point); the same equations can be
solved directly with a sparse linear solve as an independent cross-check.

``exact_ce_reference`` works on the product of the chain with the
property's progression automaton and returns the exact expectations that
the sampled cross-entropy update estimates.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expr as ex
from . import formula as fm
from .errors import ConvergenceError, StateSpaceTooLarge, UnsupportedProperty
from .model import Model

DEFAULT_CAP = 10**6


@dataclass
class ExplicitChain:
    model: Model
    states: np.ndarray      # (S, n_vars) int64, row 0 is the initial state
    rates: np.ndarray       # (S, n) command rates
    succ: np.ndarray        # (S, n) successor index or -1 when disabled

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def absorbing(self) -> np.ndarray:
        return self.rates.sum(axis=1) == 0

    def probabilities(self, lam=None) -> np.ndarray:
        """Per-command jump probabilities, shape ``(S, n)``; zero rows when absorbing."""
        w = self.rates if lam is None else self.rates * np.asarray(lam)[None, :]
        tot = w.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, w / tot, 0.0)

    def matrix(self, lam=None) -> sp.csr_matrix:
        """Transition matrix; absorbing states get a self-loop."""
        p = self.probabilities(lam)
        rows, cols = np.nonzero(self.succ >= 0)
        data = p[rows, cols]
        tgt = self.succ[rows, cols]
        ab = np.flatnonzero(self.absorbing)
        rows = np.concatenate([rows, ab])
        tgt = np.concatenate([tgt, ab])
        data = np.concatenate([data, np.ones(ab.size)])
        return sp.csr_matrix((data, (rows, tgt)), shape=(self.size, self.size))

    def env(self) -> dict:
        return {v.name: self.states[:, i] for i, v in enumerate(self.model.variables)}

    def satisfying(self, f: fm.Formula) -> np.ndarray:
        """Boolean vector of the states where state formula ``f`` holds."""
        if isinstance(f, fm.Atom):
            return np.broadcast_to(ex.compile_array(f.expr)(self.env()), (self.size,)).copy()
        if isinstance(f, fm.Not):
            return ~self.satisfying(f.child)
        if isinstance(f, fm.And):
            return self.satisfying(f.left) & self.satisfying(f.right)
        if isinstance(f, fm.Or):
            return self.satisfying(f.left) | self.satisfying(f.right)
        raise UnsupportedProperty("not a state formula")

    def export(self, path) -> None:
        """Write ``row col prob`` lines of the untilted transition matrix."""
        m = self.matrix().tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# states {self.size}\n")
            for r, c, p in zip(m.row[order], m.col[order], m.data[order]):
                fh.write(f"{r} {c} {p:.17g}\n")


def build_state_space(model: Model, cap: int = DEFAULT_CAP) -> ExplicitChain:
    """Breadth-first exploration from the initial state."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    cm = model.compiled
    init = tuple(v.init for v in model.variables)
    index = {init: 0}
    order = [init]
    rate_rows, succ_rows = [], []
    frontier = 0
    while frontier < len(order):
        block = np.array(order[frontier:], dtype=np.int64).T
        frontier = len(order)
        K = cm.rates(block)
        succ = np.full(K.shape, -1, dtype=np.int64)
        for k in range(model.n):
            cols = np.flatnonzero(K[k] > 0)
            if cols.size == 0:
                continue
            nxt = cm.apply(block[:, cols], np.full(cols.size, k))
            for c, s in zip(cols, map(tuple, nxt.T.tolist())):
                j = index.get(s)
                if j is None:
                    j = len(order)
                    if j >= cap:
                        raise StateSpaceTooLarge(cap)
                    index[s] = j
                    order.append(s)
                succ[k, c] = j
        rate_rows.append(K.T)
        succ_rows.append(succ.T)
    return ExplicitChain(model, np.array(order, dtype=np.int64),
                         np.vstack(rate_rows), np.vstack(succ_rows))


def _until_sets(chain: ExplicitChain, P: sp.csr_matrix, a: np.ndarray, b: np.ndarray):
    """States with probability 0, 1-by-definition and the rest."""
    # backward reachability of b through a-states
    can = b.copy()
    PT = P.T.tocsr()
    queue = deque(np.flatnonzero(b))
    while queue:
        s = queue.popleft()
        for pre in PT.indices[PT.indptr[s]:PT.indptr[s + 1]]:
            if not can[pre] and a[pre]:
                can[pre] = True
                queue.append(pre)
    maybe = can & ~b
    return maybe


def until_probability(chain: ExplicitChain, a: np.ndarray, b: np.ndarray,
                      method: str = "iteration", tol: float = 1e-12,
                      max_sweeps: int = 10**7, P=None) -> tuple[np.ndarray, float]:
    """Probability of ``a U b`` from every state, and the final residual."""
    P = chain.matrix() if P is None else P
    maybe = _until_sets(chain, P, a, b)
    x = b.astype(np.float64)
    if not maybe.any():
        return x, 0.0
    m = np.flatnonzero(maybe)
    Pm = P[m]
    A = Pm[:, m].tocsr()
    c = np.asarray(Pm[:, np.flatnonzero(b)].sum(axis=1)).ravel()
    if method == "linear":
        y = solve_transient(A, c)
        if not np.all(np.isfinite(y)):
            raise ConvergenceError("singular until system")
        x[m] = y
        resid = float(np.max(np.abs(A @ y + c - y)))
        return x, resid
    if method != "iteration":
        raise ValueError(f"unknown method {method!r}")
    y = np.zeros(len(m))
    resid = np.inf
    for _ in range(max_sweeps):
        y_new = A @ y + c
        resid = float(np.max(np.abs(y_new - y)))
        y = y_new
        if resid < tol:
            break
    else:
        raise ConvergenceError(f"value iteration did not converge; residual {resid:.3g}",
                               resid)
    x[m] = y
    return x, resid


DIRECT_LIMIT = 3000


def solve_transient(Q, rhs, rtol: float = 1e-14) -> np.ndarray:
    """Solve ``(I - Q) x = rhs`` for a substochastic transient block ``Q``.

    Small systems use a sparse LU factorisation. Larger ones use BiCGSTAB,
    first unpreconditioned, then with an incomplete LU preconditioner,
    since LU fill-in on the product-form state spaces is prohibitive.
    """
    size = Q.shape[0]
    A = (sp.identity(size, format="csc") - Q).tocsc()
    rhs = np.asarray(rhs, dtype=np.float64)
    if size <= DIRECT_LIMIT:
        return spla.splu(A).solve(rhs)
    scale = max(float(np.abs(rhs).max()), np.finfo(float).tiny)
    x, info = spla.bicgstab(A, rhs, rtol=rtol, atol=0.0, maxiter=20 * size)
    if info != 0 or np.abs(A @ x - rhs).max() > 1e-10 * scale:
        ilu = spla.spilu(A, drop_tol=1e-8, fill_factor=30)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.bicgstab(A, rhs, x0=x, M=M, rtol=rtol, atol=0.0, maxiter=size)
    resid = float(np.abs(A @ x - rhs).max())
    if info != 0 or not np.isfinite(resid) or resid > 1e-10 * scale:
        raise ConvergenceError(f"linear solve failed; residual {resid:.3g}", resid)
    return x


def _path_vector(chain, f, P, method, tol, max_sweeps, resid):
    if fm.is_state_formula(f):
        return chain.satisfying(f).astype(np.float64)
    if isinstance(f, fm.Not):
        return 1.0 - _path_vector(chain, f.child, P, method, tol, max_sweeps, resid)
    if isinstance(f, fm.Next):
        return P @ _path_vector(chain, f.child, P, method, tol, max_sweeps, resid)
    if isinstance(f, fm.Until) and fm.is_state_formula(f.left) and fm.is_state_formula(f.right):
        x, r = until_probability(chain, chain.satisfying(f.left), chain.satisfying(f.right),
                                 method, tol, max_sweeps, P)
        resid.append(r)
        return x
    raise UnsupportedProperty(
        "exact analysis supports negation, X, and U/F over state formulas; "
        f"got {fm.to_text(f)}")


def exact_probability(chain: ExplicitChain, prop: fm.Formula, tol: float = 1e-12,
                      method: str = "iteration", max_sweeps: int = 10**7,
                      return_residual: bool = False):
    """Probability that a trace from the initial state satisfies ``prop``."""
    if method == "product":
        ref = exact_ce_reference(chain, prop, np.ones(chain.model.n))
        return (ref.gamma, 0.0) if return_residual else ref.gamma
    P = chain.matrix()
    resid: list[float] = []
    x = _path_vector(chain, prop, P, method, tol, max_sweeps, resid)
    value = float(x[0])
    if return_residual:
        return value, max(resid, default=0.0)
    return value


@dataclass
class CEReference:
    gamma: float
    numerators: np.ndarray     # E_mu[z U_k]
    denominators: np.ndarray   # E_mu[z D_k(lam)]
    product_size: int

    @property
    def update(self) -> np.ndarray:
        """Exact next parameters (0 where the command never fires on a hit)."""
        out = np.zeros_like(self.numerators)
        seen = self.numerators > 0
        out[seen] = self.numerators[seen] / self.denominators[seen]
        return out

    @property
    def seen(self) -> np.ndarray:
        return self.numerators > 0


def _codes(chain: ExplicitChain, prog: fm.Progression):
    env = chain.env()
    codes = np.zeros(chain.size, dtype=np.int64)
    for i, a in enumerate(prog.atom_exprs):
        bit = np.broadcast_to(ex.compile_array(a)(env), (chain.size,)).astype(np.int64)
        codes |= bit << i
    m = len(prog.atom_exprs)
    return codes, (lambda c: tuple(bool((int(c) >> i) & 1) for i in range(m)))


def _step_many(prog, oids, codes, unpack):
    """Vectorised progression step over (obligation, valuation) pairs."""
    if oids.size == 0:
        return oids.copy()
    pairs = np.stack([oids, codes])
    uniq, inv = np.unique(pairs, axis=1, return_inverse=True)
    nxt = np.array([prog.step(int(o), unpack(c)) for o, c in uniq.T], dtype=np.int64)
    return nxt[inv.reshape(-1)]


def exact_ce_reference(chain: ExplicitChain, prop: fm.Formula, lam,
                       max_product: int = 10**7) -> CEReference:
    """Exact expectations behind the cross-entropy update at ``lam``.

    Builds the product of the chain with the progression automaton of
    ``prop``, solves for the satisfaction probability ``h`` of every
    undecided product state and the expected number of visits ``v`` from
    the start, then combines them command by command:

        E[z U_k] = sum_x v(x) p_k(x) h(next_k(x))
        E[z D_k] = sum_x v(x) h(x) K_k(x) / <K(x), lam>
    """
    lam = np.asarray(lam, dtype=np.float64)
    n = chain.model.n
    prog = fm.Progression(prop)
    codes, unpack = _codes(chain, prog)
    P = chain.probabilities()
    absorbing = chain.absorbing
    with np.errstate(invalid="ignore", divide="ignore"):
        tilted_total = (chain.rates * lam[None, :]).sum(axis=1)
        ratio = np.where(tilted_total[:, None] > 0, chain.rates / tilted_total[:, None], 0.0)

    start = prog.step(prog.start, unpack(codes[0]))
    if start < 2:
        return CEReference(float(start), np.zeros(n), np.zeros(n), 0)

    # breadth-first exploration of undecided product states, keyed s * M + o
    M = np.int64(1 << 24)
    visited = np.array([0 * M + start], dtype=np.int64)
    frontier = visited
    while frontier.size:
        s, o = frontier // M, frontier % M
        s, o = s[~absorbing[s]], o[~absorbing[s]]
        found = []
        for k in range(n):
            t = chain.succ[s, k]
            ok = t >= 0
            t, ok_o = t[ok], o[ok]
            o2 = _step_many(prog, ok_o, codes[t], unpack)
            und = o2 >= 2
            found.append(t[und] * M + o2[und])
        new = np.unique(np.concatenate(found)) if found else np.empty(0, np.int64)
        new = new[~np.isin(new, visited)]
        if visited.size + new.size > max_product:
            raise StateSpaceTooLarge(max_product)
        visited = np.concatenate([visited, new])
        frontier = new
    keys = np.sort(visited)
    T = keys.size
    ps, po = keys // M, keys % M
    j0 = int(np.searchsorted(keys, 0 * M + start))

    r = np.zeros(T)
    ab = absorbing[ps]
    if ab.any():
        r[ab] = [prog.stutter(int(o), unpack(codes[s])) for s, o in zip(ps[ab], po[ab])]
    live = np.flatnonzero(~ab)
    rows, cols, data = [], [], []
    per_cmd = []
    for k in range(n):
        t = chain.succ[ps[live], k]
        ok = t >= 0
        src, t = live[ok], t[ok]
        o2 = _step_many(prog, po[src], codes[t], unpack)
        p = P[ps[src], k]
        und = o2 >= 2
        tgt = np.searchsorted(keys, t[und] * M + o2[und])
        rows.append(src[und])
        cols.append(tgt)
        data.append(p[und])
        np.add.at(r, src[o2 == 1], p[o2 == 1])
        per_cmd.append((src, p, o2, np.where(und, np.searchsorted(keys, t * M + o2), -1)))
    Q = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(T, T))
    h = solve_transient(Q, r)
    e0 = np.zeros(T)
    e0[j0] = 1.0
    v = solve_transient(Q.T.tocsr(), e0)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
        raise ConvergenceError("expected trace length diverges")

    num = np.zeros(n)
    for k, (src, p, o2, tgt) in enumerate(per_cmd):
        g = np.where(o2 >= 2, h[np.maximum(tgt, 0)], (o2 == 1).astype(np.float64))
        num[k] = np.sum(v[src] * p * g)
    w = v * h
    w[ab] = 0.0
    den = w @ ratio[ps]
    return CEReference(float(h[j0]), num, den, T)


def exact_ce_iteration(chain: ExplicitChain, prop: fm.Formula, lam0, iterations: int,
                       constant: float | None = None, smoothing: str = "halving",
                       tol: float = 0.0) -> list[np.ndarray]:
    """Iterate the exact update from ``lam0``; returns every normalised vector.

    Stops early once the largest relative change of the commands that fire
    on satisfying traces drops below ``tol``.
    """
    from .ce import apply_smoothing, normalize
    const = float(chain.model.n if constant is None else constant)
    lam = normalize(lam0, const)
    out = [lam]
    for _ in range(iterations):
        ref = exact_ce_reference(chain, prop, lam)
        seen = ref.seen
        sm = apply_smoothing(ref.update, seen, lam, smoothing)
        new = normalize(sm, const, ~seen if smoothing == "halving" else None)
        change = float(np.max(np.abs(new[seen] - lam[seen]) / lam[seen])) if seen.any() else 0.0
        lam = new
        out.append(lam)
        if change < tol:
            break
    return out
