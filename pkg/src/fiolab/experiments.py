"""Verification suites: each experiment kind turns a parameter dict into check records."""
from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import sympy as sp

from . import fio as F
from . import geometry as G
from . import symbols as S
from . import traces as T
from . import weyl as W
from .formal_series import FormalSeries, hbar_ladder

TAG_TRIVIAL, TAG_DERIVED, TAG_CLAIM = "[TRIVIAL]", "[DERIVED]", "[PAPER]"


def _clean(v: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, complex to ``[re, im]``."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(_clean(obj), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class CheckRecord:
    name: str
    inputs: dict
    measured: dict
    expected: dict
    provenance: str
    passed: bool
    runtime: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "inputs_digest": digest(self.inputs), "inputs": _clean(self.inputs),
                "measured": _clean(self.measured), "expected": _clean(self.expected),
                "provenance": self.provenance, "passed": bool(self.passed)}


class _Recorder:
    def __init__(self):
        self.records: list[CheckRecord] = []
        self._t = time.perf_counter()

    def add(self, name, inputs, measured, expected, provenance, passed):
        now = time.perf_counter()
        self.records.append(CheckRecord(name, inputs, measured, expected, provenance, bool(passed), now - self._t))
        self._t = now

    def guard(self, name: str, inputs: dict, fn: Callable[[], None]):
        """Run ``fn``; a raised error becomes a failed record instead of a crash."""
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - recorded, not swallowed
            self.add(name, inputs, {"error": f"{type(exc).__name__}: {exc}"}, {}, TAG_DERIVED, False)


@dataclass
class ParamSpec:
    type: type | tuple
    default: Any
    help: str


@dataclass
class ExperimentKind:
    name: str
    description: str
    checks: str
    params: dict[str, ParamSpec]
    runner: Callable[[dict], list[CheckRecord]] = field(repr=False)


# ---------------------------------------------------------------------------
# weyl_identities
# ---------------------------------------------------------------------------


def run_weyl_identities(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    rng = random.Random(p["seed"])
    cap = p["degree_cap"]
    for n in p["dims"]:
        ok = True
        for k in range(1, n + 1):
            for l in range(1, n + 1):
                c = W.commutator(W.WeylElement.generator("Y", k, n, cap), W.WeylElement.generator("X", l, n, cap))
                want = W.WeylElement.hbar(1, n, cap).scale(W.to_coeff(sp.I)) if k == l else W.WeylElement.zero(n, cap)
                ok &= c == want
        rec.add(f"relations_n{n}", {"dim": n}, {"equal": ok}, {"[xi_k, x_l]": "i hbar delta_kl"}, TAG_CLAIM, ok)
    for i in range(p["cases"]):
        n = p["dims"][i % len(p["dims"])]
        H = W.random_hamiltonian(rng, n, max_degree=p["max_degree"])
        K = W.random_hamiltonian(rng, n, max_degree=p["max_degree"])
        w = W.random_element(rng, n, degree_cap=cap)
        inputs = {"H": str(H.to_expr()), "K": str(K.to_expr()), "w": str(w.to_expr()), "dim": n}
        ok, Gh = W.lie_algebra_check(H, K, w)
        rec.add(f"lie_bracket_{i}", inputs, {"equal": ok}, {"[D_H, D_K]": "D_{(H*K - K*H)/hbar}"}, TAG_CLAIM, ok)
        rep = W.fedosov_connection_check(H, w)
        for variant in ("D0", "D"):
            rows = rep.results[variant]
            good = all(r.form_level and r.on_test for r in rows)
            expect = "0" if variant == "D0" else "-1/2 d(tr Hess H0)"
            rec.add(f"connection_{variant}_{i}", inputs,
                    {"form_level": all(r.form_level for r in rows), "on_test": all(r.on_test for r in rows),
                     "checked_weight": rep.checked_weight},
                    {f"[{variant}_H, nabla]": expect}, TAG_CLAIM, good)
    return rec.records


# ---------------------------------------------------------------------------
# star_product
# ---------------------------------------------------------------------------


def run_star_product(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    rng = np.random.default_rng(p["seed"])
    K, N, jobs = p["modes"], p["order"], p["jobs"]
    grid = S.default_star_grid()
    # levels whose sampled modes 3L stay inside the cut
    levels = [L for L in p["hbar_ladder"] if np.max(np.abs(grid.xi)) * L <= K - S.STAR_MARGIN]
    if len(levels) < N + 2:
        rec.add("ladder", {"K": K, "hbar_ladder": p["hbar_ladder"]}, {"usable_levels": levels},
                {"min_levels": N + 2}, TAG_DERIVED, False)
        return rec.records
    hbars = hbar_ladder(levels)
    kinds = ["poly", "gauss", "order0"]
    one = S.constant_symbol(1)
    for i in range(p["pairs"]):
        a = S.random_symbol(rng, kind=kinds[i % 3])
        b = S.random_symbol(rng, kind=kinds[(i + 1) % 3])
        c = S.random_symbol(rng, kind="order0")
        inputs = {"a": a.name, "b": b.name, "c": c.name, "K": K, "N": N, "levels": [min(levels), max(levels)]}

        def body():
            ab = S.star_numeric(a, b, N, K=K, hbars=hbars, jobs=jobs).series
            ba = S.star_numeric(b, a, N, K=K, hbars=hbars, jobs=jobs).series
            ana = S.star_analytic(a, b, N, grid)
            av, bv = a.on_grid(grid), b.on_grid(grid)
            unit = S.star_numeric(a, one, N, K=K, hbars=hbars, jobs=jobs).series
            u = max([float(np.max(np.abs(unit[0] - av)))] + unit.sup_norms()[1:])
            rec.add(f"unit_{i}", inputs, {"defect": u}, {"defect_max": p["tol_unit"]}, TAG_TRIVIAL, u <= p["tol_unit"])
            d0 = float(np.max(np.abs(ab[0] - av * bv)))
            rec.add(f"product_{i}", inputs, {"defect": d0}, {"defect_max": p["tol_product"]}, TAG_CLAIM,
                    d0 <= p["tol_product"])
            pb = -1j * S.poisson_bracket(a, b).on_grid(grid)
            d1 = float(np.max(np.abs(ab[1] - ba[1] - pb)))
            rec.add(f"bracket_{i}", inputs, {"defect": d1}, {"defect_max": p["tol_bracket"]}, TAG_CLAIM,
                    d1 <= p["tol_bracket"])
            agree = [float(np.max(np.abs(ab[n] - ana[n]))) for n in range(N + 1)]
            rec.add(f"routes_agree_{i}", inputs, {"per_order": agree}, {"defect_max": p["tol_routes"]}, TAG_DERIVED,
                    max(agree) <= p["tol_routes"])
            triple = S.star_numeric_many([a, b, c], N, K=K, hbars=hbars, jobs=jobs).series
            left = S.star_series(S.star_symbolic(a, b, N), FormalSeries([c], 0, N)).map(lambda s: s.on_grid(grid))
            right = S.star_series(FormalSeries([a], 0, N), S.star_symbolic(b, c, N)).map(lambda s: s.on_grid(grid))
            assoc = [max(float(np.max(np.abs(left[n] - right[n]))), float(np.max(np.abs(triple[n] - left[n]))))
                     for n in range(N + 1)]
            rec.add(f"associativity_{i}", inputs, {"per_order": assoc}, {"defect_max": p["tol_assoc"]}, TAG_DERIVED,
                    max(assoc) <= p["tol_assoc"])

        rec.guard(f"pair_{i}", inputs, body)
    return rec.records


# ---------------------------------------------------------------------------
# FIO construction from config
# ---------------------------------------------------------------------------


def _diffeo(spec) -> F.CircleDiffeo:
    if spec in (None, "id", "identity"):
        return F.CircleDiffeo.identity()
    return F.CircleDiffeo.shifted_sine(float(spec.get("eps", 0.0)), float(spec.get("phase", 0.0)))


def build_fio(spec: dict, K: int) -> F.FourierIntegralOperator:
    """FIO from a config entry: ``route: clutched`` (g_plus, g_minus, b_plus, b_minus) or ``route: ode``."""
    route = spec.get("route", "clutched")
    if route == "ode":
        H = F.HomogeneousHamiltonian(spec["h_plus"], spec["h_minus"])
        return F.build_ode_fio(H, K)
    ct = F.CanonicalTransformation(_diffeo(spec.get("g_plus")), _diffeo(spec.get("g_minus")))
    bp = S.Symbol.parse(spec["b_plus"]) if spec.get("b_plus") else None
    bm = S.Symbol.parse(spec["b_minus"]) if spec.get("b_minus") else None
    return F.build_clutched_fio(ct, bp, bm, K=K)


# ---------------------------------------------------------------------------
# egorov
# ---------------------------------------------------------------------------


def run_egorov(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    a, b = S.Symbol.parse(p["a"]), S.Symbol.parse(p["b"])
    grid = F.egorov_grid()
    for i, spec in enumerate(p["configs"]):
        inputs = {"config": spec, "a": p["a"], "b": p["b"], "K": p["modes"], "N": p["order"]}

        def body():
            phi = build_fio(spec, p["modes"])
            hbars = F.egorov_ladder(phi, grid, p["hbar_ladder"])
            r = F.egorov_residuals(phi, a, grid=grid, hbars=hbars)
            ok = r["exact"] or r["slope"] >= p["slope_min"]
            rec.add(f"transport_rate_{i}", inputs,
                    {"slope": r["slope"], "exact": r["exact"], "max_residual": max(r["residuals"]),
                     "min_residual": min(r["residuals"])},
                    {"slope_min": p["slope_min"]}, TAG_CLAIM, ok)
            h = F.egorov_homomorphism_check(phi, a, b, p["order"], grid=grid, hbars=hbars, tol=p["tol"],
                                            jobs=p["jobs"])
            rec.add(f"homomorphism_{i}", inputs, {"per_order": h["defects"], "fit_residual": h["fit_residual"]},
                    {"defect_max": p["tol"]}, TAG_CLAIM, h["passed"])

        rec.guard(f"config_{i}", inputs, body)
    return rec.records


# ---------------------------------------------------------------------------
# index_match
# ---------------------------------------------------------------------------

G_FAMILIES = {
    "id": (None, None),
    "sine_plus": ({"eps": 0.3}, None),
    "sine_minus": (None, {"eps": 0.3}),
    "sine_both": ({"eps": 0.3}, {"eps": 0.3}),
}


def run_index_match(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    rng = np.random.default_rng(p["seed"])
    K = p["modes"]
    sign = G.calibrate_orientation()
    rec.add("orientation_calibration", {"config": "b_plus = exp(ix)"}, {"sign": sign},
            {"sign": G.ORIENTATION_SIGN}, TAG_DERIVED, sign == G.ORIENTATION_SIGN)
    for fam in p["g_families"]:
        gp, gm = G_FAMILIES[fam]
        for mp, mm in p["windings"]:
            spec = {"g_plus": gp, "g_minus": gm, "b_plus": f"exp({mp}*I*x)", "b_minus": f"exp({mm}*I*x)"}
            inputs = {"family": fam, "m_plus": mp, "m_minus": mm, "K": K}

            def body(spec=spec, inputs=inputs, mp=mp, mm=mm, fam=fam):
                phi = build_fio(spec, K)
                rep = T.analytic_index(phi)
                gb = G.compute_theta0_windings(phi)
                rep.topological_prediction = G.evaluate_index_formula(gb)
                meas = {"tau_id": rep.tau_id, "nearest_integer": rep.nearest_integer,
                        "integrality_gap": rep.integrality_gap, "topological": rep.topological_prediction,
                        "kernel": rep.kernel, "cokernel": rep.cokernel, "half_c1": G.half_c1_evaluator(gb)}
                ok = rep.match and rep.kernel - rep.cokernel == rep.nearest_integer \
                    and meas["half_c1"] == rep.topological_prediction
                rec.add(f"index_{fam}_{mp}_{mm}", inputs, meas, {"index": mm - mp}, TAG_DERIVED, ok)
                if gp == gm and mp == mm:
                    rec.add(f"vanishing_{fam}_{mp}", inputs,
                            {"analytic": rep.nearest_integer, "topological": rep.topological_prediction},
                            {"index": 0}, TAG_CLAIM, rep.nearest_integer == 0 == rep.topological_prediction
                            and rep.definitive)
                if (mp, mm) in [tuple(s) for s in p["stability_windings"]]:
                    st = T.index_stability(phi, rng, n=p["perturbations"])
                    rec.add(f"stability_smoothing_{fam}_{mp}_{mm}", inputs, st,
                            {"index": rep.nearest_integer}, TAG_DERIVED, st["stable"] and st["max_gap"] <= 1e-6)
                    if p["double_modes"]:
                        big = T.analytic_index(build_fio(spec, 2 * K), oracle=False)
                        rec.add(f"stability_modes_{fam}_{mp}_{mm}", dict(inputs, K=2 * K),
                                {"index": big.nearest_integer, "integrality_gap": big.integrality_gap},
                                {"index": rep.nearest_integer}, TAG_DERIVED,
                                big.nearest_integer == rep.nearest_integer and big.definitive)

            rec.guard(f"index_{fam}_{mp}_{mm}", inputs, body)
    a = S.Symbol.parse(p["route_symbol"])
    for hp, hm in p["hamiltonians"]:
        inputs = {"h_plus": hp, "h_minus": hm, "K": K, "a": p["route_symbol"]}

        def body(hp=hp, hm=hm, inputs=inputs):
            ode = build_fio({"route": "ode", "h_plus": hp, "h_minus": hm}, K)
            clutched = F.build_clutched_fio(ode.canonical, K=K)
            io, ic = T.analytic_index(ode, oracle=False), T.analytic_index(clutched, oracle=False)
            grid = F.egorov_grid()
            hbars = F.egorov_ladder(ode, grid)
            s0 = [F.egorov_conjugate(f, a, 0, grid=grid, hbars=hbars).series[0] for f in (ode, clutched)]
            d = float(np.max(np.abs(s0[0] - s0[1])))
            rec.add(f"route_equivalence_{hp}|{hm}", inputs,
                    {"index_ode": io.nearest_integer, "index_clutched": ic.nearest_integer,
                     "gaps": [io.integrality_gap, ic.integrality_gap], "egorov_order0_diff": d,
                     "ode_steps": ode.meta["steps"]},
                    {"index_equal": True, "egorov_order0_diff_max": p["tol_route"]}, TAG_CLAIM,
                    io.nearest_integer == ic.nearest_integer and io.definitive and ic.definitive
                    and d <= p["tol_route"])

        rec.guard(f"route_equivalence_{hp}|{hm}", inputs, body)
    return rec.records


# ---------------------------------------------------------------------------
# trace_space
# ---------------------------------------------------------------------------


def run_trace_space(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    rng = np.random.default_rng(p["seed"])
    K = p["modes"]
    phi = build_fio(p["fio"], K)

    def random_pair():
        b = S.random_symbol(rng, kind="order0")
        return T.TracePair.from_b(phi, S.quantize(b, K), T.smoothing_matrix(K, rng, norm=float(rng.uniform(0.1, 1))))

    for i in range(p["pairs"]):
        inputs = {"pair": i, "seed": p["seed"], "K": K}

        def body(i=i, inputs=inputs):
            q1, q2 = random_pair(), random_pair()
            c = T.pair_commutator(q1, q2)
            val = abs(T.regularized_trace(c))
            bound = p["tol"] * q1.norm() * q2.norm()
            rec.add(f"trace_on_commutator_{i}", inputs, {"abs_tau": val, "membership": c.coupling_defect()},
                    {"bound": bound}, TAG_CLAIM, val <= bound)

        rec.guard(f"trace_on_commutator_{i}", inputs, body)
    for i in range(p["residue_pairs"]):
        A_s, B_s = T.random_classical_symbol(rng, 1), T.random_classical_symbol(rng, 1)
        inputs = {"A": A_s.name, "B": B_s.name, "K": K}

        def body(A_s=A_s, B_s=B_s, inputs=inputs, i=i):
            r = T.wodzicki_residue(T.extended_commutator(A_s, B_s, K), 1, margin=16)
            rec.add(f"residue_on_commutator_{i}", inputs, {"abs_res": abs(r.value), "fit": r.fit_residual},
                    {"abs_res_max": p["tol"]}, TAG_DERIVED, abs(r.value) <= p["tol"])

        rec.guard(f"residue_on_commutator_{i}", inputs, body)

    def probe():
        rep = T.trace_space_probe(
            phi, compact=S.Symbol.parse(p["compact_symbol"]),
            classical=S.Symbol.parse("chi(xi)/abs(xi)", -1, vanishes_near_zero=True), classical_order=0,
            commutator_pair=(S.Symbol.parse(p["commutator_pair"][0], 1), S.Symbol.parse(p["commutator_pair"][1], 1)),
            tol=p["tol"])
        inputs = {"compact": p["compact_symbol"], "pair": p["commutator_pair"]}
        rec.add("probe_both_traces", inputs, {k: rep[k] for k in ("canonical_trace_on_commutator",
                                                                   "residue_on_commutator")},
                {"max": p["tol"]}, TAG_DERIVED, rep["both_traces"])
        rec.add("probe_independence", inputs, {"compact": rep["witness_compact"], "diagonal": rep["witness_diagonal"]},
                {"compact": "tau_can != 0, Res = 0", "diagonal": "tau_can = 0, Res != 0"}, TAG_DERIVED,
                rep["independent"])
        rec.add("probe_residue_identity", inputs, {"residue": rep["residue_identity"]}, {"residue": 0}, TAG_CLAIM,
                rep["residue_identity_zero"])
        norm = T.measure_trace_normalization(S.Symbol.parse(p["compact_symbol"]), K)
        rec.add("canonical_trace_normalization", {"symbol": p["compact_symbol"]}, norm,
                {"c": T.CANONICAL_TRACE_NORMALIZATION}, TAG_DERIVED,
                abs(norm["c"] - T.CANONICAL_TRACE_NORMALIZATION) <= 1e-8)

    rec.guard("probe", {}, probe)
    return rec.records


# ---------------------------------------------------------------------------
# residue
# ---------------------------------------------------------------------------


def run_residue(p: dict) -> list[CheckRecord]:
    rec = _Recorder()
    K = p["modes"]
    for i, op in enumerate(p["operators"]):
        inputs = dict(op, K=K)

        def body(op=op, inputs=inputs, i=i):
            if op.get("smoothing"):
                P = T.smoothing_matrix(K, np.random.default_rng(p["seed"] + i))
            else:
                sym = S.Symbol.parse(op["expr"], op.get("order", 0), vanishes_near_zero=op.get("vanishes_near_zero", False))
                P = S.quantize(sym, K)
            r = T.wodzicki_residue(P, int(max(op.get("order", 0), 0)))
            ok = abs(r.value - op["expected"]) <= p["tol"]
            rec.add(f"residue_{i}", inputs, {"residue": r.value, "fit": r.fit_residual},
                    {"residue": op["expected"]}, op.get("provenance", TAG_DERIVED), ok)

        rec.guard(f"residue_{i}", inputs, body)
    return rec.records


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

STAR_LADDER = list(range(5, 81))
EGOROV_LADDER = list(range(16, 65))
_COMMON = {
    "seed": ParamSpec(int, 20240611, "random seed"),
    "modes": ParamSpec(int, 256, "mode cut K (matrices of size 2K+1)"),
    "jobs": ParamSpec(int, 1, "worker threads for hbar ladders"),
}


def _spec(**kw) -> dict[str, ParamSpec]:
    return dict(_COMMON, **kw)


EXPERIMENTS: dict[str, ExperimentKind] = {
    "weyl_identities": ExperimentKind(
        "weyl_identities", "Exact identities of the truncated Weyl algebra and the lifted derivations.",
        "Weyl commutation relations; Lie bracket of lifted derivations; flatness defects of the connection",
        _spec(cases=ParamSpec(int, 20, "random (H, K, w) triples"),
              dims=ParamSpec(list, [1, 2], "phase-space half dimensions n"),
              max_degree=ParamSpec(int, 4, "polynomial degree of H and K"),
              degree_cap=ParamSpec(int, 8, "weight cap D")),
        run_weyl_identities),
    "star_product": ExperimentKind(
        "star_product", "Star product of symbols from composition of hbar-scaled quantizations.",
        "unit law; product and Poisson bracket terms; associativity; numeric vs closed-form routes",
        _spec(pairs=ParamSpec(int, 10, "random symbol pairs"), order=ParamSpec(int, 3, "hbar order N"),
              hbar_ladder=ParamSpec(list, STAR_LADDER, "ladder levels L (hbar = 1/L), capped by 3L <= K - 16"),
              tol_unit=ParamSpec(float, 1e-8, ""), tol_product=ParamSpec(float, 1e-8, ""),
              tol_bracket=ParamSpec(float, 1e-6, ""), tol_routes=ParamSpec(float, 1e-6, ""),
              tol_assoc=ParamSpec(float, 1e-6, "")),
        run_star_product),
    "egorov": ExperimentKind(
        "egorov", "Conjugation of hbar-scaled operators by an FIO.",
        "transport of the symbol at rate hbar; conjugation is a star homomorphism order by order",
        _spec(configs=ParamSpec(list, [], "FIO declarations"), a=ParamSpec(str, "exp(I*x)*arctan(xi)", "symbol a"),
              b=ParamSpec(str, "cos(x)*xi/sqrt(1+xi**2)", "symbol b"), order=ParamSpec(int, 2, "hbar order N"),
              hbar_ladder=ParamSpec(list, EGOROV_LADDER, "ladder levels L (capped by the FIO window)"),
              slope_min=ParamSpec(float, 0.9, ""), tol=ParamSpec(float, 1e-5, "")),
        run_egorov),
    "index_match": ExperimentKind(
        "index_match", "Analytic index tau(Id, Id) against the winding formula.",
        "index = tau(Id, Id) is integral and equals the topological formula; vanishing; stability; ODE vs clutched",
        _spec(windings=ParamSpec(list, [[m, 0] for m in range(-2, 3)], "pairs [m_plus, m_minus]"),
              g_families=ParamSpec(list, ["id"], f"subset of {sorted(G_FAMILIES)}"),
              stability_windings=ParamSpec(list, [], "windings whose stability is checked"),
              perturbations=ParamSpec(int, 3, "smoothing perturbations per stability check"),
              double_modes=ParamSpec(bool, False, "also check the index at 2K"),
              hamiltonians=ParamSpec(list, [], "pairs [h_plus, h_minus] for the route comparison"),
              route_symbol=ParamSpec(str, "exp(I*x)*arctan(xi)", "symbol for the hbar^0 route comparison"),
              tol_route=ParamSpec(float, 1e-6, "")),
        run_index_match),
    "trace_space": ExperimentKind(
        "trace_space", "Regularized trace, canonical trace and residue as traces.",
        "tau vanishes on commutators; residue vanishes on commutators; independence witnesses",
        _spec(fio=ParamSpec(dict, {"g_plus": {"eps": 0.1, "phase": 0.5}, "g_minus": {"eps": 0.08, "phase": -1.0},
                                   "b_plus": "exp(I*x)*(2+cos(x))", "b_minus": "2+sin(x)*tanh(xi)"}, "FIO declaration"),
              pairs=ParamSpec(int, 20, "random trace pairs"), residue_pairs=ParamSpec(int, 5, "random (A, B)"),
              compact_symbol=ParamSpec(str, "exp(-xi**2)*(1+cos(x))", "rapidly decaying symbol"),
              commutator_pair=ParamSpec(list, ["cos(x)*sqrt(1+xi**2)+sin(2*x)*xi",
                                               "exp(I*x)*xi+cos(x)*xi/sqrt(4+xi**2)"], "order-1 symbols"),
              tol=ParamSpec(float, 1e-6, "")),
        run_trace_space),
    "residue": ExperimentKind(
        "residue", "Noncommutative residue of listed operators.",
        "residue from the |xi|^-1 coefficient per ray",
        _spec(operators=ParamSpec(list, [
            {"expr": "1/sqrt(1+xi**2)", "order": 0, "expected": 2.0},
            {"expr": "sqrt(1+xi**2)", "order": 1, "expected": 1.0},
            {"expr": "cos(x)/(1+xi**2)", "order": -2, "expected": 0.0},
            {"smoothing": True, "expr": "", "expected": 0.0},
        ], "entries {expr, order, expected} or {smoothing: true}"), tol=ParamSpec(float, 1e-6, "")),
        run_residue),
}
