"""Command-line entry point: ``nalo <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 domain error, 3 resource cap,
4 no structure found.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import DomainError, NoStructureFound, ResourceError
from .groups import GroupContext
from .io import (
    RunManifest, dists_from_json, dump_json, file_digest, load_catalog, load_progression, load_walk, read_json,
    walk_to_json,
)
from .rational import as_fraction, fraction_str

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_RESOURCE, EXIT_NO_STRUCTURE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _q(x) -> dict:
    """Exact and decimal forms of a rational."""
    x = Fraction(x)
    return {"exact": fraction_str(x), "decimal": float(x)}


def _dual(x) -> str:
    x = Fraction(x)
    return f"{fraction_str(x)} ({float(x):.6g})"


class Run:
    """Result payload, CSV rows and summary line collected by a subcommand."""

    def __init__(self):
        self.result: dict = {}
        self.rows: list = []
        self.header: list = []
        self.summary = ""
        self.inputs: dict = {}

    def walk(self, path):
        self.inputs[str(path)] = file_digest(path)
        return load_walk(path)


# ------------------------------------------------------------ subcommands
def cmd_rho(a, run: Run):
    from .measure import rho_exact, rho_monte_carlo

    walk = run.walk(a.walk)
    if a.mc:
        est = rho_monte_carlo(walk, a.mc, a.seed)
        run.result = {"collision": est.collision, "max_bin": est.max_bin, "trials": est.trials,
                      "distinct": est.distinct, "note": "Monte Carlo estimates, not the exact rho"}
        run.summary = f"rho ~ {est.max_bin:.6g} (max bin), collision {est.collision:.6g}, {a.mc} trials"
        return
    r = rho_exact(walk, tuple(a.interval) if a.interval else None, a.cap, a.reverse)
    run.result = {"rho": _q(r.rho), "argmax": walk.ctx.encode(r.argmax), "support_size": r.support_size,
                  "l2sq": _q(r.l2sq)}
    run.summary = f"rho = {_dual(r.rho) if r.rho != 1 else '1'}"


def cmd_dyadic(a, run: Run):
    from .segments import find_flat_segment, verify_segment

    walk = run.walk(a.walk)
    rep = find_flat_segment(walk, as_fraction(a.c), as_fraction(a.eps), None if a.tau is None else as_fraction(a.tau),
                            a.cap, a.c_halvings, full_scan=a.full_scan)
    v = verify_segment(walk, rep, a.cap)
    run.result = {"segment": rep.to_json(), "verified": v.ok, "reason": v.reason}
    run.header = ["i", "j", "l2sq"]
    run.rows = [[i, j, fraction_str(s)] for i, j, s in rep.windows]
    run.summary = f"segment j0={rep.j0} l0*={rep.l0star} c={fraction_str(rep.c)} ({rep.source}); verified={v.ok}"


def _prog_ctx(a, run: Run):
    ctx = None
    if a.group:
        ctx = GroupContext.from_json(read_json(a.group) if Path(a.group).exists() else json.loads(a.group))
    run.inputs[str(a.prog)] = file_digest(a.prog)
    return load_progression(a.prog, ctx)


def cmd_nilprog(a, run: Run):
    from . import nilprog as npg

    hp = _prog_ctx(a, run)
    ctx, P = hp.ctx, hp.P
    if a.verb == "verify-normal-form":
        cert = npg.verify_c_normal_form(P, as_fraction(a.C), a.cap)
        run.result = {"C": fraction_str(cert.C), "upper_triangular": cert.upper_triangular,
                      "local_proper": cert.local_proper, "volume": cert.volume, "valid": cert.valid,
                      "size": cert.size, "box": cert.box, "witnesses": {k: str(v) for k, v in cert.witnesses.items()}}
        run.summary = f"C-normal form at C={fraction_str(cert.C)}: {cert.valid} (|P|={cert.size}, box={cert.box})"
    elif a.verb == "norm":
        g = ctx.decode(a.elem)
        lam = npg.hp_norm(g, hp, as_fraction(a.lam_max), a.cap)
        run.result = {"element": ctx.encode(g), "lambda": _q(lam)}
        run.summary = f"||g||_HP = {_dual(lam)}"
    elif a.verb == "x-norm":
        g = ctx.decode(a.elem)
        X = [ctx.decode(x) for x in a.X] or [ctx.identity()]
        xn = npg.hp_x_norm(g, hp, X, as_fraction(a.lam_max), a.cap)
        run.result = {"element": ctx.encode(g), "lambda": _q(xn.lam),
                      "sigma": [[ctx.encode(x), ctx.encode(y)] for x, y in xn.sigma.items()]}
        run.summary = f"||g||_(HP,X) = {_dual(xn.lam)}"
    elif a.verb == "growth":
        gp = npg.growth_profile(hp, a.nmax, a.cap)
        run.result = {"sizes": list(gp.sizes), "slope": gp.slope, "r2": gp.r2, "semilog_r2": gp.semilog_r2,
                      "partial": gp.partial, "exponential": gp.exponential}
        run.header = ["k", "size"]
        run.rows = [[k, s] for k, s in enumerate(gp.sizes, 1)]
        fit = "no fit" if gp.slope is None else f"log-log slope {gp.slope:.4g} (R^2 {gp.r2:.4g})"
        run.summary = f"|HP^k| = {list(gp.sizes)}; {fit}"
    elif a.verb == "shrink":
        res = npg.shrink(P, as_fraction(a.C), as_fraction(a.D), hp.H, cap=a.cap)
        run.result = {"Q_lengths": [fraction_str(x) for x in res.Q.lengths], "triangular": res.triangular,
                      "proper": res.proper, "ratio": _q(res.ratio), "ratio_bound": _q(res.ratio_bound),
                      "valid": res.valid}
        run.summary = f"shrink valid={res.valid}, |HP|/|HQ| = {_dual(res.ratio)}"
    elif a.verb == "collect":
        word = [int(x) for x in a.word.split(",") if x.strip()]
        res = npg.collect(word, P, as_fraction(a.D))
        run.result = {"supported": res.supported, "exponents": list(res.exponents) if res.exponents else None,
                      "element": ctx.encode(res.element), "exact": res.exact, "within_bound": res.within_bound,
                      "drift": [list(d) if isinstance(d, tuple) else d for d in res.drift]}
        run.summary = f"collected exponents {res.exponents}; exact={res.exact}"


def cmd_energy(a, run: Run):
    from .structure import TruncationParams, mult_energy, truncate_measure

    if a.sets:
        obj = read_json(a.sets)
        run.inputs[str(a.sets)] = file_digest(a.sets)
        ctx = GroupContext.from_json(obj["group"])
        B1 = [ctx.decode(x) for x in obj["B1"]]
        B2 = [ctx.decode(x) for x in obj.get("B2", obj["B1"])]
    elif a.walk:
        from .segments import WindowNorms, find_flat_segment

        walk = run.walk(a.walk)
        ctx = walk.ctx
        memo = WindowNorms(walk, a.cap)
        seg = find_flat_segment(walk, as_fraction(a.c), as_fraction(a.eps), cap=a.cap, memo=memo)
        tp = TruncationParams.from_c(seg.c)
        B1 = truncate_measure(memo.measure(seg.j0, seg.j0 + seg.l0star), tp).middle.support
        B2 = truncate_measure(memo.measure(seg.j0 - seg.l0star, seg.j0 - 1), tp).middle.support
    else:
        raise DomainError("energy needs --sets or --walk")
    E = mult_energy(ctx, B1, B2, a.cap)
    ratio = Fraction(E, len(B1) ** 3) if B1 else Fraction(0)
    run.result = {"B1": len(B1), "B2": len(B2), "energy": E, "energy_over_B1_cubed": _q(ratio)}
    run.summary = f"E(B1,B2) = {E}, |B1| = {len(B1)}, E/|B1|^3 = {_dual(ratio)}"


def cmd_detect(a, run: Run):
    from .structure import StructureParams, detect_structure, verify_conclusion

    walk = run.walk(a.walk)
    catalog = []
    if a.catalog:
        catalog = load_catalog(a.catalog, walk.ctx)
        for f in sorted(Path(a.catalog).glob("*.json")) if Path(a.catalog).is_dir() else [Path(a.catalog)]:
            run.inputs[str(f)] = file_digest(f)
    p = StructureParams(c=as_fraction(a.c), eps=as_fraction(a.eps), kappa=as_fraction(a.kappa),
                        mass=as_fraction(a.mass), workers=a.threads, cap=a.cap)
    rep = detect_structure(walk, catalog, p)
    v = verify_conclusion(rep, walk)
    run.result = rep.to_json()
    run.result["verified"] = {"ok": v.ok, "reason": v.reason}
    enc = walk.ctx.encode
    run.header = ["i", "a", "a_prime", "lambda"]
    run.rows = [[r.i, enc(r.a), enc(r.a_prime), "" if r.lam is None else fraction_str(r.lam)] for r in rep.records]
    ml = "none" if rep.max_lam is None else _dual(rep.max_lam)
    run.summary = f"structure {rep.label}: |HP| = {rep.hp_size}, |X| = {len(rep.X)}, max lambda = {ml}, verified={v.ok}"


def cmd_bounds(a, run: Run):
    from . import bounds as bd

    if a.verb == "sharpness":
        exs = bd.sharpness_examples(a.n)
        out_dir = Path(a.out_dir) if a.out_dir else None
        items = []
        for ex in exs:
            item = {"label": ex.label, "rho": _q(ex.rho), "note": ex.note}
            if out_dir:
                out_dir.mkdir(parents=True, exist_ok=True)
                obj = walk_to_json(ex.walk)
                obj["rho"] = fraction_str(ex.rho)
                path = out_dir / f"sharpness_{ex.label}_{a.n}.json"
                dump_json(obj, path)
                item["file"] = str(path)
            items.append(item)
        run.result = {"examples": items}
        run.summary = "; ".join(f"{ex.label}: rho = {_dual(ex.rho)}" for ex in exs)
        return
    walk = run.walk(a.walk)
    if a.verb == "elo":
        chk = bd.check_elo(walk)
    elif a.verb == "ssz":
        chk = bd.check_ssz(walk, as_fraction(a.C))
    else:
        if a.s is None:
            raise DomainError("bounds matrix needs --s")
        chk = bd.check_matrix_elo(walk, a.s, None if a.delta is None else as_fraction(a.delta))
    row = chk.row()
    run.result = {**row, "rho": _q(chk.rho), "caveat": chk.caveat, "params": {k: str(v) for k, v in chk.params.items()},
                  "extra": chk.extra}
    run.header = ["name", "n", "rho", "bound", "slack", "pass"]
    run.rows = [[row[k] for k in run.header]]
    run.summary = f"{chk.name}: rho = {_dual(chk.rho)} <= {row['bound']}: {chk.passed}" + (f" [{chk.caveat}]" if chk.caveat else "")


def cmd_anderson(a, run: Run):
    from .sl2 import TransferSpec, anderson_concentration

    if a.dist:
        run.inputs[str(a.dist)] = file_digest(a.dist)
        dists = dists_from_json(read_json(a.dist))
    else:
        dists = ({Fraction(1): Fraction(1, 2), Fraction(-1): Fraction(1, 2)},)
    spec = TransferSpec(as_fraction(a.E), as_fraction(a.lam), as_fraction(a.gamma), dists, a.n, window=a.window)
    mode = "exact" if a.mode == "exact" else "monte_carlo"
    prof = anderson_concentration(spec, mode, a.trials, a.seed, cap=a.cap)
    vals = [fraction_str(r) if isinstance(r, Fraction) else r for r in prof.rho]
    run.result = {"mode": prof.mode, "n": list(prof.ns), "rho": vals, "slope": prof.slope, "gamma_ok": prof.gamma_ok,
                  "l2_ok": all(prof.l2_ok), "note": prof.note, "seeds": list(prof.seeds)}
    run.header = ["n", "rho_or_estimate", "log_slope"]
    run.rows = [[n, v, prof.slope] for n, v in zip(prof.ns, vals)]
    last = prof.rho[-1]
    shown = _dual(last) if isinstance(last, Fraction) else f"{last:.6g}"
    run.summary = f"rho({prof.ns[-1]}) = {shown}; log-log slope {prof.slope}; {prof.note}"


def cmd_validate(a, run: Run):
    from .measure import validate_p0

    msgs = []
    ok = True
    if a.walk:
        walk = run.walk(a.walk)
        good, bad = validate_p0(walk)
        ok &= good
        msgs.append(f"walk: {walk.n} normalised steps on {walk.ctx}" + ("" if good else f"; {len(bad)} atoms at or below p0"))
        run.result["p0_violations"] = [[i, walk.ctx.encode(g), fraction_str(w)] for i, g, w in bad]
    if a.prog:
        hp = _prog_ctx(a, run)
        msgs.append(f"progression: rank {hp.P.rank}, |H| = {len(hp.H)}")
    if a.manifest:
        same, detail = _replay(a.manifest)
        ok &= same
        msgs.append(f"replay: {'identical' if same else 'differs'} {detail}".rstrip())
    if not msgs:
        raise DomainError("validate needs --walk, --prog or --manifest")
    run.result.update({"valid": bool(ok), "messages": msgs})
    run.summary = "; ".join(msgs)
    if not ok:
        raise DomainError(run.summary)


def _replay(path) -> tuple[bool, str]:
    rec = read_json(path)
    man = rec.get("manifest", {})
    argv = list(man.get("argv", []))
    if not argv:
        raise DomainError("manifest has no argv to replay")
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "replay.json")
        # drop the original --out/--csv targets, keep everything else
        clean, skip = [], False
        for tok in argv:
            if skip:
                skip = False
                continue
            if tok in ("--out", "--csv"):
                skip = True
                continue
            clean.append(tok)
        code = main(clean + ["--out", out], quiet=True)
        if code != EXIT_OK:
            return False, f"(exit {code})"
        new = read_json(out)
    return dump_json(new["result"]) == dump_json(rec["result"]), ""


# ----------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON report (with run manifest) here")
    common.add_argument("--csv", help="write the CSV companion here")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--cap", type=int, default=2_000_000, help="support/enumeration cap")

    p = _Parser(prog="nalo", description="Concentration of random walks on groups, with exact arithmetic.")
    p.add_argument("--version", action="version", version=f"nalo {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("rho", parents=[common], help="exact (or Monte Carlo) concentration probability")
    s.add_argument("--walk", required=True)
    s.add_argument("--interval", nargs=2, type=int, metavar=("I", "J"))
    s.add_argument("--reverse", action="store_true", help="convolve mu_i * ... * mu_j instead")
    s.add_argument("--mc", type=int, metavar="TRIALS")
    s.set_defaults(func=cmd_rho)

    s = sub.add_parser("dyadic", parents=[common], help="find and verify a flat segment")
    s.add_argument("--walk", required=True)
    s.add_argument("--c", default="1/16")
    s.add_argument("--eps", default="1/2")
    s.add_argument("--tau")
    s.add_argument("--c-halvings", type=int, default=6)
    s.add_argument("--full-scan", action="store_true")
    s.set_defaults(func=cmd_dyadic)

    s = sub.add_parser("nilprog", parents=[common], help="progression tools")
    s.add_argument("verb", choices=["verify-normal-form", "norm", "x-norm", "growth", "shrink", "collect"])
    s.add_argument("--prog", required=True)
    s.add_argument("--group", help="group JSON (inline or file) when the progression file has none")
    s.add_argument("--C", default="3")
    s.add_argument("--D", default="100")
    s.add_argument("--elem")
    s.add_argument("--X", nargs="*", default=[])
    s.add_argument("--lam-max", default="2")
    s.add_argument("--nmax", type=int, default=6)
    s.add_argument("--word", default="")
    s.set_defaults(func=cmd_nilprog)

    s = sub.add_parser("energy", parents=[common], help="multiplicative energy")
    s.add_argument("--sets", help='{"group": ..., "B1": [...], "B2": [...]}')
    s.add_argument("--walk", help="use the truncated supports around the walk's flat segment")
    s.add_argument("--c", default="1/16")
    s.add_argument("--eps", default="1/2")
    s.set_defaults(func=cmd_energy)

    s = sub.add_parser("detect", parents=[common], help="structure detection")
    s.add_argument("--walk", required=True)
    s.add_argument("--catalog", help="progression file or directory of them")
    s.add_argument("--c", default="1/16")
    s.add_argument("--eps", default="1/2")
    s.add_argument("--kappa", default="8")
    s.add_argument("--mass", default="1/8")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("bounds", parents=[common], help="forward bound checks")
    s.add_argument("verb", choices=["elo", "ssz", "matrix", "sharpness"])
    s.add_argument("--walk")
    s.add_argument("--C", default="3.0")
    s.add_argument("--s", type=int)
    s.add_argument("--delta")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("anderson", parents=[common], help="transfer-matrix concentration profile")
    s.add_argument("--E", default="0")
    s.add_argument("--lambda", dest="lam", default="1")
    s.add_argument("--gamma", default="1/2")
    s.add_argument("--dist")
    s.add_argument("--n", type=int, default=12)
    s.add_argument("--mode", choices=["exact", "mc"], default="exact")
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--window", type=int)
    s.set_defaults(func=cmd_anderson)

    s = sub.add_parser("validate", parents=[common], help="validate input files or replay a manifest")
    s.add_argument("--walk")
    s.add_argument("--prog")
    s.add_argument("--group")
    s.add_argument("--manifest", help="report written with --out; re-run it and compare")
    s.set_defaults(func=cmd_validate)
    return p


def _params(a) -> dict:
    skip = {"func", "out", "csv"}
    return {k: (None if v is None else v if isinstance(v, (int, bool, list)) else str(v))
            for k, v in sorted(vars(a).items()) if k not in skip}


def main(argv=None, quiet: bool = False) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    a = build_parser().parse_args(argv)
    run = Run()
    code = EXIT_OK
    try:
        a.func(a, run)
    except NoStructureFound as exc:
        run.summary, code = f"no structure found: {exc} (a failed search, not a proof of absence)", EXIT_NO_STRUCTURE
        run.result = {"error": "no structure found", "message": str(exc)}
    except ResourceError as exc:
        run.summary, code = f"resource cap: {exc}", EXIT_RESOURCE
        run.result = {"error": "resource", "message": str(exc), "partial": {k: str(v) for k, v in exc.partial.items()}}
    except (DomainError, ValueError, TypeError, KeyError, ZeroDivisionError, OSError) as exc:
        run.summary, code = f"domain error: {exc}", EXIT_DOMAIN
        run.result = {**run.result, "error": "domain", "message": str(exc)}
    if a.out:
        man = RunManifest(a.cmd, _params(a), run.inputs, a.seed, __version__, tuple(argv))
        dump_json({"manifest": man.to_json(), "result": run.result}, a.out)
    if a.csv and run.header:
        with open(a.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(run.header)
            w.writerows(run.rows)
    if not quiet:
        print(run.summary, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
