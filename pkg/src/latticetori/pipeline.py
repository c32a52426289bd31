"""Toy weak Mordell-Lang pipeline on planted instances.

The planted sequence is Q_n = Q0 + M_dir * P_hat / q_n + w / q_n with q_n a
declared progression.  Each E_n = E(Q_n; kappa), closed under the unit-power
action on its torsion part, is turned into a packaged measure; the limit of
those measures yields a real subtorus whose complex hull is the recovered B.
"""

from fractions import Fraction
from itertools import product
from math import gcd

from .errors import CapExceeded, HypothesisFailure, InputError
from .galois import l_e_orbit
from .lattice import (Lattice, TorsionVector, _frac_mod1, clear_denominators, hnf, kernel_mod, matvec, orthogonal,
                      saturate, snf)
from .measures import MeasureSequence, PackagedMeasure, Progression, TailRule, limit_sequence
from .tori import ComplexTorus, SiegelPoint, TorusPoint, hybrid_sets, is_subtorus_complex, point_to_fiber, trivialize

CLAIMS = {
    "closure": "the Zariski closure C of the union of the E_n satisfies C = C + B",
    "bounded_cosets": "#(E_n + B)/B is bounded along the sequence",
    "construction": "E_n = E(Q_n, kappa)",
}


def _lattice(rows, N):
    return hnf(rows, N) if rows else Lattice.zero(N)


def _point(obj, N, NP):
    if obj is None:
        return TorusPoint([0] * N)
    p = TorusPoint.from_json(obj)
    if p.dim != N or (p.C is not None and any(len(r) != NP for r in p.C)):
        raise InputError("point has the wrong shape")
    return p


def _in_component(x, comp, NP):
    p, ann = comp
    diff = x - p
    C = diff._c(NP)
    for row in ann.basis:
        if any(sum(a * C[i][j] for i, a in enumerate(row)) != 0 for j in range(NP)):
            return False
        if sum(a * r for a, r in zip(row, diff.r)).denominator != 1:
            return False
    return True


def _in_variety(x, variety, NP):
    return any(_in_component(x, c, NP) for c in variety)


def _images(x, variety, scale=1):
    return tuple(tuple(_frac_mod1(scale * sum(a * c for a, c in zip(row, x))) for row in ann.basis)
                 for _, ann in variety)


def _first_escape(Q, orbit, F, kappa, variety, NP):
    """A point of C P_hat + orbit + kappa F outside the variety, or None."""
    sym_ok = [_in_component(TorusPoint(p.r, Q.C), (p, ann), NP) for p, ann in variety]
    base = [_images(p.r, [(p, ann)])[0] for p, ann in variety]
    O, G = {}, {}
    for o in orbit:
        O.setdefault(_images(o.coords, variety), o)
    for f in F:
        G.setdefault(_images(f.coords, variety, kappa), f)
    for io, o in O.items():
        for ig, f in G.items():
            if not any(ok and all(_frac_mod1(a + b - c) == 0 for a, b, c in zip(io[j], ig[j], base[j]))
                       for j, ok in enumerate(sym_ok)):
                return TorusPoint([a + kappa * b for a, b in zip(o.coords, f.coords)], Q.C)
    return None


def complex_hull(J, L):
    """Smallest J-stable saturated lattice containing L."""
    N = L.ambient_rank
    vecs = L.vectors()
    images = [clear_denominators(matvec(J, v)) for v in vecs]
    return saturate(_lattice(vecs + [v for v in images if any(v)], N))


def _package(hyb, kappa, e, N, NP):
    d, M = hyb["d_Q"], hyb["phi_Q"]
    rows = [[kappa * M[i][j] for i in range(N)] for j in range(NP)]
    ann = kernel_mod(rows, d, N) if d > 1 else Lattice.full(N)
    return ann


def _class_count(Q, F, kappa, e, ann_B):
    """#(E + B)/B for E = C P_hat + L_e r + kappa F."""
    rows = ann_B.vectors()
    if not rows:
        return 1
    orbit = l_e_orbit(TorsionVector(Q.r), e)
    O = {tuple(_frac_mod1(sum(a * x for a, x in zip(row, o.coords))) for row in rows) for o in orbit}
    G = {tuple(_frac_mod1(kappa * sum(a * x for a, x in zip(row, f.coords))) for row in rows) for f in F}
    return len({tuple(_frac_mod1(a + b) for a, b in zip(o, g)) for o in O for g in G})


def _subtorus_torsion(L, order, cap):
    vecs = L.vectors()
    if order ** len(vecs) > cap:
        raise CapExceeded("closure_size", cap, order ** len(vecs), "closure check")
    for c in product(range(order), repeat=len(vecs)):
        yield TorusPoint([sum(Fraction(ci, order) * v[k] for ci, v in zip(c, vecs)) for k in range(L.ambient_rank)])


def weak_ml_pipeline(payload, limits=None):
    limits = dict(limits or {})
    search_cap = int(limits.get("search_box", 256))
    char_box_bound = int(limits.get("character_box", 10))
    closure_cap = int(limits.get("closure_size", 10 ** 6))

    fam = payload["family"]
    if fam["kind"] == "constant":
        fibers = [ComplexTorus(SiegelPoint.from_json(fam["siegel"]))]
    elif fam["kind"] == "declared":
        fibers = [ComplexTorus(SiegelPoint.from_json(s)) for s in fam["fibers"]]
    else:
        raise InputError(f"unknown family kind {fam['kind']}")

    def fiber(n):
        return fibers[min(n, len(fibers) - 1)]

    A0 = fibers[0]
    N = A0.dim
    if any(t.dim != N for t in fibers):
        raise InputError("fibers have different dimensions")
    AP = ComplexTorus(SiegelPoint.from_json(payload["source"]))
    NP = AP.dim
    planted = saturate(_lattice(payload["planted_B"], N))
    for k, t in enumerate(fibers):
        if not is_subtorus_complex(t, planted):
            raise HypothesisFailure("planted B is not a complex subtorus", witness={"fiber": k}, stage="planted_B")

    kappa, e = int(payload.get("kappa", 1)), int(payload.get("e", 1))
    q = Progression.from_json(payload["growth"])
    Q0 = _point(payload.get("Q0"), N, NP)
    M_dir = payload.get("direction")
    w = [int(x) for x in payload.get("torsion_direction", [0] * N)]
    n_explicit = int(payload.get("explicit_terms", 4))
    overrides = {int(k): _point(v, N, NP) for k, v in payload.get("overrides", {}).items()}
    variety = [(_point(c.get("point"), N, NP), orthogonal(saturate(_lattice(c["lattice"], N))))
               for c in payload["variety"]]
    var_lattices = [saturate(_lattice(c["lattice"], N)) for c in payload["variety"]]
    if M_dir is not None and (len(M_dir) != N or any(len(r) != NP for r in M_dir)):
        raise InputError("direction has the wrong shape")
    if len(w) != N:
        raise InputError("torsion_direction has the wrong length")

    def Q_of(n):
        if n in overrides:
            return overrides[n]
        qn = q(n)
        shift = TorusPoint([Fraction(x, qn) for x in w],
                           None if M_dir is None else [[Fraction(x, qn) for x in row] for row in M_dir])
        return Q0 + shift

    # declared tail rule, derived from the planted data
    if M_dir is not None:
        if Q0.C is not None:
            raise InputError("a growing direction needs Q0 without a symbolic part")
        diag, U, _ = snf(M_dir)
        if any(x != 1 for x in diag):
            raise InputError("direction must be a primitive matrix")
        if gcd(kappa, q.r) != 1:
            raise InputError("kappa must be coprime to the growth ratio")
        fixed, base = _lattice([list(r) for r in U[NP:]], N), _lattice([list(r) for r in U[:NP]], N)
        a = q.a // gcd(q.a, kappa)
        ann_q = Progression(q.kind, a, q.r, q.d)
    else:
        base, ann_q = None, Progression("constant")
        h = hybrid_sets(fiber(n_explicit), AP, Q_of(n_explicit), search_cap, kappa, e)
        if h["status"] != "FOUND":
            raise HypothesisFailure("no d with d*Q in the hybrid set", witness={"n": n_explicit}, stage="hybrid_sets")
        fixed = _package(h, kappa, e, N, NP)
    tail = TailRule("pattern", N, e, fixed=fixed, base=base, ann_q=ann_q, s=TorsionVector(Q0.r), v=w,
                    tor_q=q if any(w) else Progression("constant"))

    per_n, packages = [], []

    def run_term(n, explicit):
        A = fiber(n)
        Q = Q_of(n)
        h = hybrid_sets(A, AP, Q, search_cap, kappa, e)
        if h["status"] != "FOUND":
            raise HypothesisFailure("no d with d*Q in the hybrid set", witness={"n": n, **h["searched"]},
                                    stage="hybrid_sets")
        ann = _package(h, kappa, e, N, NP)
        pkg = PackagedMeasure(N, ann, TorsionVector(Q.r), None, e)
        # the trivialization is the identity on lattice coordinates: round-trip a torsion point
        f0 = h["F_Q"][-1]
        re, im = point_to_fiber(A, f0.coords)
        if trivialize(A, re, im) != f0:
            raise HypothesisFailure("trivialization round trip failed", stage="trivialize")
        rep = {"n": n, "explicit": explicit, "q_n": q(n), "d_Q": h["d_Q"], "dprime_Q": h["dprime_Q"],
               "F_size": len(h["F_Q"]), "annihilator": [list(b) for b in ann.basis],
               "t": pkg.t.to_json()}
        if n not in overrides:
            expect = tail.term(n)
            if expect.annihilator != ann or expect.t != pkg.t:
                raise HypothesisFailure("declared tail rule disagrees with the hybrid-set package",
                                        witness={"n": n}, stage="tail_rule")
        # containment of E_n in the planted variety, decided on images under the component annihilators
        orbit = l_e_orbit(TorsionVector(Q.r), e)
        count = len(orbit) * len(h["F_Q"])
        if count > closure_cap:
            raise CapExceeded("closure_size", closure_cap, count, f"E_{n}")
        escape = _first_escape(Q, orbit, h["F_Q"], kappa, variety, NP)
        if escape is not None:
            return rep, pkg, h, {"n": n, "stage": "containment", "point": escape.to_json(),
                                 "message": "E_n escapes the planted variety"}
        rep["E_size"] = count
        return rep, pkg, h, None

    hyb = []
    for n in range(n_explicit):
        rep, pkg, h, fail = run_term(n, True)
        per_n.append(rep)
        if fail:
            return {"status": "hypothesis_failure", "flagged": True, "hypothesis_failure": fail,
                    "recovered_B": None, "coset_bound": None, "per_n_reports": per_n, "claims": CLAIMS}
        packages.append(pkg)
        hyb.append((Q_of(n), h))

    seq = MeasureSequence(packages, tail)
    lim = limit_sequence(seq, char_box_bound)
    limit = lim["limit"]
    L_H = orthogonal(limit.annihilator)
    recovered = complex_hull(fiber(10 ** 9).J, L_H)
    if not is_subtorus_complex(fiber(10 ** 9), recovered):
        raise HypothesisFailure("recovered lattice is not complex", stage="recovery")

    # tail terms up to one past stabilization, built the same way
    last = max(n_explicit, lim["stabilization_index"] + 1)
    for n in range(n_explicit, last + 1):
        rep, pkg, h, fail = run_term(n, False)
        per_n.append(rep)
        if fail:
            return {"status": "hypothesis_failure", "flagged": True, "hypothesis_failure": fail,
                    "recovered_B": recovered.to_json(), "coset_bound": None, "per_n_reports": per_n,
                    "claims": CLAIMS}
        hyb.append((Q_of(n), h))

    ann_B = orthogonal(recovered)
    counts = []
    for rep, (Q, h) in zip(per_n, hyb):
        c = _class_count(Q, h["F_Q"], kappa, e, ann_B)
        rep["coset_count"] = c
        counts.append(c)
    coset_bound = max(counts)
    t_inf_mod_B = TorsionVector([sum(a * x for a, x in zip(row, limit.t.coords)) for row in ann_B.vectors()]) \
        if ann_B.rank else TorsionVector([])
    chain_factor = t_inf_mod_B.order if ann_B.rank else 1

    # C = C + B on the planted components, plus a finite B[m] check
    order = int(payload.get("closure_check_order", 2))
    lattice_ok = all(L.contains(recovered) for L in var_lattices)
    finite_ok = all(_in_variety(p + b, variety, NP)
                    for p, _ in variety for b in _subtorus_torsion(recovered, order, closure_cap))

    planted_bound = payload.get("planted_bound")
    return {
        "status": "ok",
        "flagged": False,
        "hypothesis_failure": None,
        "recovered_B": recovered.to_json(),
        "planted_B": planted.to_json(),
        "recovered_equals_planted": recovered == planted,
        "limit_identity_component": L_H.to_json(),
        "limit": limit.to_json(),
        "stabilization_index": lim["stabilization_index"],
        "coset_bound": coset_bound,
        "planted_bound": planted_bound,
        "coset_bound_ok": planted_bound is None or coset_bound <= planted_bound,
        "limit_torsion_order_mod_B": chain_factor,
        "closure_check": {"lattice_containment": lattice_ok, "finite_order": order, "finite_points_ok": finite_ok,
                          "holds": lattice_ok and finite_ok},
        "per_n_reports": per_n,
        "claims": CLAIMS,
    }
