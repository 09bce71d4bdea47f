"""Command-line front end.

Every command prints (or writes) a JSON record that echoes its full
configuration, the seed and the package version, so any output can be
regenerated from the record alone.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .estimators import (
    RootSelectionError,
    UnmixError,
    estimate_dep_ies_from_moments,
    estimate_hmm_from_moments,
    estimate_pcfg_ie,
    fit_residual,
)
from .evaluation import match_params
from .hypergraph import exact_moments
from .identifiability import check_identifiability
from .mixing import UnsupportedFamily, dimension_report, mixing_matrix
from .model import (
    EnumerationTooLarge,
    Family,
    ModelFamily,
    ParamsError,
    load_params,
    params_from_dict,
    random_params,
    sample_sentences,
    save_params,
)
from .observations import (
    FAMILIES,
    ObservationSpec,
    default_spec,
    empirical_moments,
    read_corpus,
    write_corpus,
)
from .spectral import ConditioningError

EXIT_CONFIG = 2
EXIT_CONDITIONING = 3
EXIT_INPUT = 4

OBS_ALIASES = {f.replace("-", ""): f for f in FAMILIES}
ESTIMATORS = ("pcfg-ie", "dep-ies", "hmm")
REFERENCE_MIXING_SHAPE = (990, 2376)


class ConfigError(ValueError):
    pass


def parse_obs(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key not in OBS_ALIASES:
        raise ConfigError(f"unknown observation family {name!r}; choose from {', '.join(FAMILIES)}")
    return OBS_ALIASES[key]


def make_spec(obs: str, d: int, eta_mode: str, seed: int) -> ObservationSpec:
    return default_spec(obs, d, eta_mode, seed)


def lengths_from(args) -> list[int]:
    if args.L is not None:
        return [args.L]
    lo = args.L_min if args.L_min is not None else 1
    if args.L_max is None:
        raise ConfigError("give --L or --L-max")
    if lo > args.L_max:
        raise ConfigError("--L-min exceeds --L-max")
    return list(range(lo, args.L_max + 1))


def make_family(name: str, k: Optional[int], d: int) -> ModelFamily:
    kind = Family.parse(name)
    return ModelFamily(kind, d, None if kind.is_dependency else (k if k is not None else 2))


def thread_count() -> int:
    raw = os.environ.get("LATENT_UNMIX_THREADS", "")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"LATENT_UNMIX_THREADS must be an integer, got {raw!r}") from None


def config_of(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def emit(args, result: dict) -> None:
    record = {"command": args.command, "config": config_of(args), "seed": args.seed,
              "version": __version__, "result": result}
    text = json.dumps(record, indent=1, sort_keys=True, default=_default, ensure_ascii=False)
    writes_own_file = args.command in ("mixing", "simulate") or (
        args.command == "table" and args.format == "csv")
    if getattr(args, "out", None) and not writes_own_file:
        Path(args.out).write_text(text + "\n")
    print(text)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.real.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --------------------------------------------------------------------------
# commands


def cmd_check(args) -> dict:
    fam = make_family(args.family, args.k, args.d)
    spec = make_spec(parse_obs(args.obs), args.d, args.eta_mode, args.seed)
    verdict = check_identifiability(fam, spec, lengths_from(args), seed=args.seed, draws=args.draws)
    return verdict.to_dict()


def _threshold(answers: dict[int, str]) -> str:
    """Compress per-L verdicts into 'yes iff L>=n', 'no' or an explicit listing."""
    Ls = sorted(answers)
    yes = [L for L in Ls if answers[L] == "yes"]
    if not yes:
        return "no"
    first = yes[0]
    if all(answers[L] == "yes" for L in Ls if L >= first) and all(answers[L] == "no" for L in Ls if L < first):
        return f"yes iff L>={first}"
    return " ".join(f"{L}:{answers[L]}" for L in Ls)


def cmd_table(args) -> dict:
    families = args.family_list or ["hmm", "lcm", "pcfg", "pcfg-i", "pcfg-ie"]
    obs_list = [parse_obs(o) for o in (args.obs_list or ["pairs", "all-pairs", "thin-triples", "triples",
                                                         "all-thin-triples", "all-triples"])]
    kd = [tuple(int(v) for v in item.split(",")) for item in args.kd]
    Ls = lengths_from(args)
    cells = [(f, o, k, d, L) for f in families for o in obs_list for k, d in kd for L in Ls]

    def run(index_cell):
        index, (f, o, k, d, L) = index_cell
        fam = make_family(f, k, d)
        spec = make_spec(o, d, args.eta_mode, args.seed)
        seed = args.seed * 100_003 + index
        try:
            v = check_identifiability(fam, spec, [L], seed=seed, draws=args.draws)
            return {"family": f, "obs": o, "k": k, "d": d, "L": L, "answer": v.answer,
                    "rank": v.rank, "n": v.n, "seed": seed}
        except ValueError:
            return {"family": f, "obs": o, "k": k, "d": d, "L": L, "answer": "n/a",
                    "rank": None, "n": None, "seed": seed}

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(run, enumerate(cells)))
    grid = {}
    for r in rows:
        if r["answer"] == "n/a":
            continue
        grid.setdefault((r["family"], r["obs"], r["k"], r["d"]), {})[r["L"]] = r["answer"]
    summary = [{"family": f, "obs": o, "k": k, "d": d, "verdict": _threshold(ans)}
               for (f, o, k, d), ans in grid.items()]
    if args.format == "csv":
        lines = ["family,obs,k,d,L,answer,rank,n,seed"]
        lines += [",".join(str(r[c]) for c in ("family", "obs", "k", "d", "L", "answer", "rank", "n", "seed"))
                  for r in rows]
        if args.out:
            Path(args.out).write_text("\n".join(lines) + "\n")
    return {"cells": rows, "summary": summary}


def cmd_mixing(args) -> dict:
    obs = parse_obs(args.obs)
    spec = ObservationSpec(obs, {"1": np.ones(1)}) if obs in ("thin-triples", "all-thin-triples") \
        else ObservationSpec(obs)
    Ls = lengths_from(args)
    mm = mixing_matrix(args.family, spec, Ls)
    sums = mm.row_sums()
    result = {
        "shape": list(mm.shape),
        "rank": mm.rank(),
        "row_sums_all_one": all(s == 1 for s in sums),
        "rows": mm.row_labels(),
        "columns": mm.column_labels(),
    }
    if mm.shape[0] <= 12:
        result["matrix"] = mm.dense().tolist()
    if Family.parse(args.family) is Family.PCFG_IE and Ls == list(range(1, 11)):
        result["reference_shape"] = list(REFERENCE_MIXING_SHAPE)
        result["matches_reference"] = tuple(mm.shape) == REFERENCE_MIXING_SHAPE
        result["dimension_report"] = dimension_report(spec, 10, mm=mm)
    if args.out:
        prefix = Path(args.out)
        prefix.with_suffix(".csv").write_text(mm.to_csv())
        prefix.with_suffix(".json").write_text(mm.to_json())
        result["files"] = [str(prefix.with_suffix(".csv")), str(prefix.with_suffix(".json"))]
    return result


def _truth(args, fam: Optional[ModelFamily] = None) -> object:
    if args.params:
        return load_params(args.params)
    fam = fam or make_family(args.family, args.k, args.d)
    return random_params(fam, np.random.default_rng(args.seed))


def cmd_simulate(args) -> dict:
    params = _truth(args)
    if args.out is None:
        raise ConfigError("simulate needs --out for the corpus")
    Ls = lengths_from(args)
    sentences = []
    for i, L in enumerate(Ls):
        X = sample_sentences(params, L, args.samples, seed=args.seed * 1000 + i)
        sentences.extend(X.tolist())
    write_corpus(args.out, sentences)
    result = {"corpus": args.out, "sentences": len(sentences), "lengths": Ls}
    if args.params_out:
        save_params(params, args.params_out)
        result["params"] = args.params_out
    return result


def _estimator_moments(args, family: str, d: int):
    if family == "pcfg-ie":
        spec = make_spec("all-thin-triples", d, "both", args.seed)
        spec.etas["1"] = np.ones(d)
    else:
        spec = ObservationSpec("all-pairs")
    if args.params:
        truth = load_params(args.params)
        if truth.family.kind.value != family:
            raise ConfigError(f"parameter file holds {truth.family.kind.value}, estimator is {family}")
        Ls = lengths_from(args) if (args.L or args.L_max) else {"pcfg-ie": [3], "dep-ies": [2, 3], "hmm": [4]}[family]
        return exact_moments(truth, spec, Ls), spec, "exact"
    if args.input is None:
        raise ConfigError("estimate needs --in (corpus) or --params (ground truth)")
    corpus = read_corpus(args.input)
    if args.L or args.L_max:
        wanted = set(lengths_from(args))
        corpus = {L: X for L, X in corpus.items() if L in wanted}
    return empirical_moments(corpus, spec, d), spec, "empirical"


def cmd_estimate(args) -> dict:
    family = Family.parse(args.family).value
    if family not in ESTIMATORS:
        raise ConfigError(f"no estimator for {family}; choose from {', '.join(ESTIMATORS)}")
    d = args.d
    if args.params:
        d = load_params(args.params).family.d
    moments, spec, mode = _estimator_moments(args, family, d)
    if family == "pcfg-ie":
        rec = estimate_pcfg_ie(moments, args.k or 2)
    elif family == "dep-ies":
        rec = estimate_dep_ies_from_moments(moments, strict=(mode == "exact"))
    else:
        rec = estimate_hmm_from_moments(moments, args.k or 2)
    out = rec.to_dict()
    out["mode"] = mode
    out["moment_refit_residual"] = fit_residual(rec.params, moments, spec)
    if args.params:
        out["match"] = match_params(rec.params, load_params(args.params)).to_dict()
    return out


def _load_any(path):
    data = json.loads(Path(path).read_text())
    if "result" in data and "params" in data["result"]:
        data = data["result"]["params"]
    return params_from_dict(data)


def cmd_eval(args) -> dict:
    if not args.input or not args.ref:
        raise ConfigError("eval needs --in and --ref")
    return match_params(_load_any(args.input), _load_any(args.ref)).to_dict()


def cmd_validate(args) -> dict:
    if not args.input:
        raise ConfigError("validate needs --in")
    data = json.loads(Path(args.input).read_text())
    try:
        params = params_from_dict(data, validate=True)
    except ParamsError as exc:
        raise InvalidParams(str(exc)) from None
    return {"valid": True, "family": str(params.family)}


class InvalidParams(ValueError):
    pass


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latent-unmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, family=True, obs=True):
        if family:
            sp.add_argument("--family", required=True)
        if obs:
            sp.add_argument("--obs", default="all-pairs")
        sp.add_argument("--k", type=int, default=None)
        sp.add_argument("--d", type=int, default=3)
        sp.add_argument("--L", type=int, default=None)
        sp.add_argument("--L-min", dest="L_min", type=int, default=None)
        sp.add_argument("--L-max", dest="L_max", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--eta-mode", dest="eta_mode", choices=("ones", "random", "both", "e1"), default="both")

    sp = sub.add_parser("check", help="local identifiability of one cell")
    common(sp)
    sp.add_argument("--draws", type=int, default=3)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("table", help="identifiability grid over families, specs and lengths")
    common(sp, family=False, obs=False)
    sp.add_argument("--families", dest="family_list", nargs="+", default=None)
    sp.add_argument("--obs-list", dest="obs_list", nargs="+", default=None)
    sp.add_argument("--kd", nargs="+", default=["2,2", "2,3", "3,3"], help="k,d pairs")
    sp.add_argument("--draws", type=int, default=3)
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("mixing", help="export a mixing matrix")
    common(sp)
    sp.set_defaults(func=cmd_mixing)

    sp = sub.add_parser("simulate", help="sample a corpus")
    common(sp, obs=False)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--params", default=None, help="parameter file; a random draw otherwise")
    sp.add_argument("--params-out", dest="params_out", default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="recover parameters from a corpus or exact moments")
    common(sp, obs=False)
    sp.add_argument("--in", dest="input", default=None, help="corpus file")
    sp.add_argument("--params", default=None, help="ground-truth parameter file (exact moments)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("eval", help="permutation-matched error between two parameter files")
    sp.add_argument("--in", dest="input", default=None)
    sp.add_argument("--ref", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("validate", help="check a parameter file against the model invariants")
    sp.add_argument("--in", dest="input", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except (ConfigError, UnsupportedFamily, EnumerationTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConditioningError, RootSelectionError, UnmixError) as exc:
        print(f"conditioning error: {exc}", file=sys.stderr)
        return EXIT_CONDITIONING
    except InvalidParams as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParamsError, KeyError, OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    emit(args, result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
