"""Scenario runner: `latticetori run scenario.json [--out r.json] [--csv dir] [--seed n] [--jobs k]`.

Exit codes: 0 success, 2 validation, 3 resource cap, 4 internal invariant violation.
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import jsonschema

from . import galois, lattice, measures, orders, pipeline, tori
from .cyclotomic import Cyclotomic
from .errors import CapExceeded, HypothesisFailure, InputError, InvariantViolation

EXIT_OK, EXIT_VALIDATION, EXIT_CAP, EXIT_INVARIANT = 0, 2, 3, 4
LIMITS_ENV = "LATTICETORI_LIMITS"
DEFAULT_LIMITS = {"closure_size": 10 ** 6, "character_box": 10, "search_box": 256, "sample_count": 10 ** 5,
                  "group_order": 2000}


# ------------------------------------------------------------------ helpers

def _lat(rows, N=None):
    if N is None:
        if not rows:
            raise InputError("empty lattice needs ambient_rank")
        N = len(rows[0])
    return lattice.hnf(rows, N) if rows else lattice.Lattice.zero(N)


def _order(obj):
    return orders.MatrixOrder.from_json(obj)


def _group(obj, limits):
    return galois.FiniteLevelGaloisImage.from_json(obj, cap=limits["closure_size"])


def _siegel(obj):
    return tori.ComplexTorus(tori.SiegelPoint.from_json(obj))


def _measure(obj):
    return measures.PackagedMeasure.from_json(obj)


def _sequence(obj):
    return measures.MeasureSequence.from_json(obj)


def plain(x):
    """JSON-ready form; exact values stay ints or 'p/q' strings, approximate ones are wrapped."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, Fraction):
        return lattice.frac_to_str(x)
    if isinstance(x, float):
        return {"approx": x}
    if isinstance(x, complex):
        return {"approx": [x.real, x.imag]}
    if x is lattice.INFINITE:
        return "infinite"
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [plain(v) for v in items]
    if hasattr(x, "to_json"):
        return plain(x.to_json())
    raise TypeError(f"cannot serialize {type(x).__name__}")


# ------------------------------------------------------------------ operations

def op_hnf(a, seed, limits):
    L = lattice.hnf(a["rows"], a.get("ambient_rank"), a.get("modulus"))
    return {"lattice": L}


def op_snf(a, seed, limits):
    diag, _, _ = lattice.snf(a["matrix"])
    return {"diagonal": diag}


def op_quotient(a, seed, limits):
    N = a.get("ambient_rank")
    sub, sup = _lat(a["sub"], N), _lat(a["super"], N)
    q = lattice.quotient_group(sub, sup)
    return {"invariant_factors": list(q.invariant_factors), "order": q.order, "exponent": q.exponent}


def op_kernel(a, seed, limits):
    return {"lattice": lattice.integer_kernel(a["rows"], a.get("ncols"))}


def op_saturate(a, seed, limits):
    return {"lattice": lattice.saturate(_lat(a["rows"], a.get("ambient_rank")))}


def op_d1_suite(a, seed, limits):
    return orders.d1_suite(a.get("count", 100), seed, a.get("max_entry", 3))


def op_d1_verify(a, seed, limits):
    N = len(a["W"][0])
    shape = orders.BlockShape(a["shape"]) if a.get("shape") else None
    ref = _lat(a["reference"], N) if a.get("reference") else None
    return orders.d1_verify(_lat(a["W"], N), _lat(a["T"], N), _order(a["R"]), _order(a["S"]), a["n"],
                            a.get("alpha_box", 2), ref, shape)


def op_discriminant(a, seed, limits):
    R = _order(a["order"])
    d, by_index = orders.discriminant(R), orders.discriminant_by_index(R)
    if d != by_index:
        raise InvariantViolation(f"discriminant {d} disagrees with the index route {by_index}")
    return {"discriminant": d, "by_index": by_index}


def op_split_decompose(a, seed, limits):
    shape = orders.BlockShape(a["shape"])
    return {"split": orders.split_decompose(_lat(a["W"], shape.dim), shape, a["lambda"])}


def op_kummer_valuation(a, seed, limits):
    return galois.kummer_valuation(a["e"], a["ell"], a["k"])


def op_kummer_grid(a, seed, limits):
    rows, bad = [], []
    for e in range(1, a.get("e_max", 12) + 1):
        for ell in galois.primes_up_to(a.get("ell_max", 50)):
            r = galois.kummer_valuation(e, ell, a.get("precision", 6))
            rows.append(r)
            if not r["bound_ok"]:
                bad.append({"e": e, "ell": ell})
    return {"checked": len(rows), "all_bound_ok": not bad, "failures": bad, "n_e_2": galois.n_e(2)}


def op_n_e(a, seed, limits):
    return {"e": a["e"], "n_e": galois.n_e(a["e"])}


def op_serre_exponent(a, seed, limits):
    U = _group(a["group"], limits)
    return {"exponent": galois.serre_exponent(U), "group_order": U.order}


def op_faltings_index(a, seed, limits):
    return {"index": galois.faltings_index(_order(a["order"]), _group(a["group"], limits), a["ell"], a["k"])}


def op_affine_kummer_image(a, seed, limits):
    return galois.affine_kummer_image(_group(a["group"], limits), constants=a.get("constants"))


def op_h1_annihilation(a, seed, limits):
    return galois.h1_annihilation(_group(a["group"], limits), a.get("candidates", ()), limits["group_order"])


def op_isogeny_exponent(a, seed, limits):
    return galois.isogeny_exponent(galois.CharacterLatticeMap(a["matrix"]), detail=True)


def op_e_r_N(a, seed, limits):
    return galois.e_r_N(a["r"], a["N"])


def op_moment_table(a, seed, limits):
    mu = _measure(a["measure"])
    box = a.get("box", limits["character_box"])
    rows = []
    for chi in measures.char_box(mu.N, box):
        m = measures.moment(mu, chi)
        z = measures.as_complex(m)
        rows.append({"chi": list(chi), "re": z.real, "im": z.imag,
                     "exact": _exact_str(m)})
    return {"N": mu.N, "box": box, "moments": rows}


def _exact_str(m):
    if isinstance(m, Cyclotomic):
        r = m.as_rational()
        return lattice.frac_to_str(r) if r is not None else json.dumps(m.to_json()["coeffs"]) + f"@zeta_{m.order}"
    return ""


def op_limit(a, seed, limits):
    return measures.limit_sequence(_sequence(a["sequence"]), a.get("box", limits["character_box"]))


def op_convolve(a, seed, limits):
    return {"result": measures.convolve(_measure(a["a"]), _measure(a["b"]))}


def op_support_inclusion(a, seed, limits):
    return measures.support_inclusion(_measure(a["inner"]), _measure(a["outer"]), detail=True)


def op_sample(a, seed, limits):
    count = a.get("count", limits["sample_count"])
    if count > limits["sample_count"]:
        raise CapExceeded("sample_count", limits["sample_count"], count, "sample")
    mu = _measure(a["measure"])
    pts = measures.sample(mu, count, seed)
    out = []
    for chi in a["characters"]:
        exact = measures.as_complex(measures.moment(mu, chi))
        emp = measures.empirical_moment(pts, chi)
        out.append({"chi": chi, "exact": exact, "empirical": emp, "error": abs(exact - emp)})
    return {"count": count, "seed": seed, "moments": out}


def op_pl_check(a, seed, limits):
    fam = measures.PolytopalFamily.from_json(a["family"])
    return measures.pl_family_dim_check(fam, _sequence(a["sequence"]), a.get("translates"),
                                        a.get("box", limits["character_box"]))


def op_complex_structure(a, seed, limits):
    return _siegel(a["siegel"]).to_json()


def op_hom_lattice(a, seed, limits):
    basis = tori.hom_lattice(_siegel(a["source"]), _siegel(a["target"]))
    return {"rank": len(basis), "basis": [h.M for h in basis]}


def op_complement_exponent(a, seed, limits):
    t = _siegel(a["siegel"])
    return tori.complement_exponent(t, _lat(a["L_B"], t.dim))


def op_e1_divide(a, seed, limits):
    t, src = _siegel(a["siegel"]), _siegel(a["source"])
    return tori.e1_divide(t, _lat(a["L_B"], t.dim), tori.TorusPoint.from_json(a["Q"]),
                          tori.TorusPoint.from_json(a["T"]), a["phi"], a["d"], a["dprime"], src)


def op_hybrid_sets(a, seed, limits):
    t, src = _siegel(a["siegel"]), _siegel(a["source"])
    bound = a.get("search_bound", limits["search_box"])
    if bound > limits["search_box"]:
        raise CapExceeded("search_box", limits["search_box"], bound, "hybrid_sets")
    return tori.hybrid_sets(t, src, tori.TorusPoint.from_json(a["Q"]), bound, a.get("kappa", 1), a.get("e", 1))


def op_trivialize(a, seed, limits):
    t = _siegel(a["siegel"])
    pts = [tori.trivialize(t, [c["re"] for c in z], [c["im"] for c in z]) for z in a["points"]]
    return {"coordinates": pts}


def op_pipeline(a, seed, limits):
    return pipeline.weak_ml_pipeline(a, limits)


OPS = {
    "lattice": {"hnf": (op_hnf, ["rows"]), "snf": (op_snf, ["matrix"]),
                "quotient": (op_quotient, ["sub", "super"]), "kernel": (op_kernel, ["rows"]),
                "saturate": (op_saturate, ["rows"])},
    "orders": {"d1_suite": (op_d1_suite, []), "d1_verify": (op_d1_verify, ["W", "T", "R", "S", "n"]),
               "discriminant": (op_discriminant, ["order"]),
               "split_decompose": (op_split_decompose, ["W", "shape", "lambda"])},
    "residue": {"kummer_valuation": (op_kummer_valuation, ["e", "ell", "k"]), "kummer_grid": (op_kummer_grid, []),
                "n_e": (op_n_e, ["e"]), "serre_exponent": (op_serre_exponent, ["group"]),
                "faltings_index": (op_faltings_index, ["order", "group", "ell", "k"]),
                "affine_kummer_image": (op_affine_kummer_image, ["group"]),
                "h1_annihilation": (op_h1_annihilation, ["group"]),
                "isogeny_exponent": (op_isogeny_exponent, ["matrix"]), "e_r_N": (op_e_r_N, ["r", "N"])},
    "measures": {"moment_table": (op_moment_table, ["measure"]), "limit": (op_limit, ["sequence"]),
                 "convolve": (op_convolve, ["a", "b"]), "support_inclusion": (op_support_inclusion, ["inner", "outer"]),
                 "sample": (op_sample, ["measure", "characters"]), "pl_check": (op_pl_check, ["family", "sequence"])},
    "tori": {"complex_structure": (op_complex_structure, ["siegel"]),
             "hom_lattice": (op_hom_lattice, ["source", "target"]),
             "complement_exponent": (op_complement_exponent, ["siegel", "L_B"]),
             "e1_divide": (op_e1_divide, ["siegel", "source", "L_B", "Q", "T", "phi", "d", "dprime"]),
             "hybrid_sets": (op_hybrid_sets, ["siegel", "source", "Q"]),
             "trivialize": (op_trivialize, ["siegel", "points"])},
}
PIPELINE_REQUIRED = ["family", "source", "planted_B", "growth", "variety"]


def scenario_schema():
    def case_schema(kind):
        ops = OPS[kind]
        return {"type": "object", "required": ["op"],
                "properties": {"op": {"enum": sorted(ops)}, "name": {"type": "string"}},
                "allOf": [{"if": {"required": ["op"], "properties": {"op": {"const": op}}},
                           "then": {"required": ["op"] + req}} for op, (_, req) in sorted(ops.items())]}

    kinds = sorted(OPS) + ["weak_ml_pipeline"]
    payload_rules = []
    for kind in sorted(OPS):
        cs = case_schema(kind)
        payload_rules.append({"if": {"required": ["kind"], "properties": {"kind": {"const": kind}}},
                              "then": {"properties": {"payload": {
                                  "if": {"required": ["cases"]},
                                  "then": {"properties": {"cases": {"type": "array", "minItems": 1, "items": cs}}},
                                  "else": cs}}}})
    payload_rules.append({"if": {"required": ["kind"], "properties": {"kind": {"const": "weak_ml_pipeline"}}},
                          "then": {"properties": {"payload": {"type": "object", "required": PIPELINE_REQUIRED}}}})
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["kind", "payload"],
        "properties": {
            "kind": {"enum": kinds},
            "payload": {"type": "object"},
            "seed": {"type": "integer"},
            "limits": {"type": "object", "additionalProperties": False,
                       "properties": {k: {"type": "integer", "minimum": 1} for k in DEFAULT_LIMITS}},
        },
        "allOf": payload_rules,
    }


# ------------------------------------------------------------------ running

class ValidationFailure(Exception):
    def __init__(self, diagnostics):
        super().__init__("; ".join(d["message"] for d in diagnostics))
        self.diagnostics = diagnostics


def load_scenario(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationFailure([{"line": exc.lineno, "column": exc.colno, "field": None,
                                  "message": f"invalid JSON: {exc.msg}"}]) from exc
    validator = jsonschema.Draft202012Validator(scenario_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        diags = []
        for e in errors:
            field = "/".join(str(p) for p in e.absolute_path) or "<root>"
            diags.append({"field": field, "line": _line_of(text, e.absolute_path), "message": f"{field}: {e.message}"})
        raise ValidationFailure(diags)
    return data


def _line_of(text, path):
    """Best-effort line of the last key on the path."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return 1
    needle = json.dumps(keys[-1]) + ":"
    idx = text.find(needle)
    if idx < 0:
        needle = json.dumps(keys[-1])
        idx = text.find(needle)
    return text.count("\n", 0, idx) + 1 if idx >= 0 else None


def effective_limits(scenario_limits=None):
    limits = dict(DEFAULT_LIMITS)
    env = os.environ.get(LIMITS_ENV)
    if env:
        try:
            extra = json.loads(env)
        except json.JSONDecodeError as exc:
            raise ValidationFailure([{"field": LIMITS_ENV, "line": None,
                                      "message": f"{LIMITS_ENV} is not JSON: {exc.msg}"}]) from exc
        unknown = set(extra) - set(DEFAULT_LIMITS)
        if unknown or not all(isinstance(v, int) and v >= 1 for v in extra.values()):
            raise ValidationFailure([{"field": LIMITS_ENV, "line": None,
                                      "message": f"{LIMITS_ENV} must map known caps to positive integers"}])
        limits.update(extra)
    limits.update(scenario_limits or {})
    return limits


def run_case(kind, case, seed, limits):
    """Run one case; returns (status, payload) with errors captured as data."""
    try:
        if kind == "weak_ml_pipeline":
            result = op_pipeline(case, seed, limits)
        else:
            fn, _ = OPS[kind][case["op"]]
            result = fn(case, seed, limits)
        return "ok", plain(result)
    except HypothesisFailure as exc:
        return "hypothesis_failure", plain({"stage": exc.stage, "message": str(exc), "witness": exc.witness})
    except CapExceeded as exc:
        return "cap", plain(exc.to_json())
    except InvariantViolation as exc:
        return "invariant", {"message": str(exc)}
    except (InputError, KeyError, TypeError, ValueError) as exc:
        return "validation", {"message": f"{type(exc).__name__}: {exc}"}


def run_scenario(data, seed=None, jobs=1):
    """Build the report dict and the exit code."""
    kind = data["kind"]
    seed = data.get("seed", 0) if seed is None else seed
    limits = effective_limits(data.get("limits"))
    payload = data["payload"]
    cases = payload["cases"] if kind != "weak_ml_pipeline" and "cases" in payload else [payload]
    t0 = time.perf_counter()
    if jobs > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_case, [kind] * len(cases), cases, [seed] * len(cases),
                                     [limits] * len(cases)))
    else:
        outcomes = [run_case(kind, c, seed, limits) for c in cases]
    wall = time.perf_counter() - t0
    results = []
    code = EXIT_OK
    for i, (case, (status, body)) in enumerate(zip(cases, outcomes)):
        entry = {"index": i, "name": case.get("name", case.get("op", kind)), "status": status}
        entry["result" if status in ("ok", "hypothesis_failure") else "error"] = body
        results.append(entry)
        code = max(code, {"ok": EXIT_OK, "hypothesis_failure": EXIT_OK, "validation": EXIT_VALIDATION,
                          "cap": EXIT_CAP, "invariant": EXIT_INVARIANT}[status])
    report = {"kind": kind, "seed": seed, "limits": limits, "inputs": data, "results": results,
              "exit_code": code, "number_tags": "ints and 'p/q' strings are exact; {'approx': x} is floating point",
              "timing": {"wall_seconds": {"approx": wall}}}
    return report, code


def write_csv(report, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for entry in report["results"]:
        res = entry.get("result")
        if entry["status"] != "ok" or not isinstance(res, dict) or "moments" not in res:
            continue
        path = directory / f"case{entry['index']:03d}_{entry['name']}.csv"
        rows = res["moments"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            if "re" in rows[0]:
                N = len(rows[0]["chi"])
                w.writerow([f"chi_{j}" for j in range(N)] + ["re", "im", "exact"])
                for r in rows:
                    w.writerow(r["chi"] + [repr(r["re"]["approx"]), repr(r["im"]["approx"]), r["exact"]])
            else:
                w.writerow(["chi", "exact_re", "exact_im", "empirical_re", "empirical_im", "error"])
                for r in rows:
                    w.writerow([json.dumps(r["chi"])] + [repr(x) for x in r["exact"]["approx"]]
                               + [repr(x) for x in r["empirical"]["approx"]] + [repr(r["error"]["approx"])])
        written.append(str(path))
    return written


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def main(argv=None):
    parser = argparse.ArgumentParser(prog="latticetori", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("scenario")
    run.add_argument("--out", help="report path (default: stdout)")
    run.add_argument("--csv", help="directory for CSV moment tables")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for multi-case scenarios")
    sub.add_parser("schema", help="print the scenario JSON schema")
    args = parser.parse_args(argv)

    if args.command == "schema":
        sys.stdout.write(json.dumps(scenario_schema(), indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    try:
        data = load_scenario(args.scenario)
        report, code = run_scenario(data, args.seed, max(1, args.jobs))
    except ValidationFailure as exc:
        sys.stderr.write(json.dumps({"status": "validation_error", "diagnostics": exc.diagnostics}, indent=2) + "\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(f"cannot read scenario: {exc}\n")
        return EXIT_VALIDATION
    if args.csv:
        report["csv_files"] = write_csv(report, args.csv)
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if code:
        failing = next(r for r in report["results"] if r["status"] not in ("ok", "hypothesis_failure"))
        sys.stderr.write(json.dumps({"status": failing["status"], "case": failing["name"],
                                     "error": failing["error"]}, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
